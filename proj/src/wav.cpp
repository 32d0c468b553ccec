// Copyright 2026 The dasr Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dasr/wav.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace dasr {
namespace {

static_assert(std::endian::native == std::endian::little,
              "WAV codec assumes a little-endian host");

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

template <typename T>
T read_le(const std::vector<std::uint8_t>& b, std::size_t pos) {
  if (pos + sizeof(T) > b.size()) throw IoError("truncated WAV data");
  T v;
  std::memcpy(&v, b.data() + pos, sizeof(T));
  return v;
}

template <typename T>
void append_le(std::vector<std::uint8_t>& b, T v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  b.insert(b.end(), p, p + sizeof(T));
}

void append_tag(std::vector<std::uint8_t>& b, const char* tag) {
  b.insert(b.end(), tag, tag + 4);
}

bool tag_is(const std::vector<std::uint8_t>& b, std::size_t pos, const char* tag) {
  return pos + 4 <= b.size() && std::memcmp(b.data() + pos, tag, 4) == 0;
}

}  // namespace

Waveform decode_wav(const std::vector<std::uint8_t>& b) {
  if (!tag_is(b, 0, "RIFF") || !tag_is(b, 8, "WAVE"))
    throw IoError("not a RIFF/WAVE stream");
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  std::size_t data_pos = 0, data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= b.size()) {
    const auto size = read_le<std::uint32_t>(b, pos + 4);
    if (tag_is(b, pos, "fmt ")) {
      format = read_le<std::uint16_t>(b, pos + 8);
      channels = read_le<std::uint16_t>(b, pos + 10);
      rate = read_le<std::uint32_t>(b, pos + 12);
      bits = read_le<std::uint16_t>(b, pos + 22);
      if (format == kFormatExtensible && size >= 40)
        format = read_le<std::uint16_t>(b, pos + 32);
      have_fmt = true;
    } else if (tag_is(b, pos, "data")) {
      data_pos = pos + 8;
      data_size = std::min<std::size_t>(size, b.size() - data_pos);
      break;
    }
    pos += 8 + size + (size & 1u);
  }
  if (!have_fmt || data_pos == 0) throw IoError("WAV stream lacks fmt or data chunk");
  if (channels == 0) throw IoError("WAV declares zero channels");

  const bool pcm16 = format == kFormatPcm && bits == 16;
  const bool f32 = format == kFormatFloat && bits == 32;
  const bool f64 = format == kFormatFloat && bits == 64;
  if (!pcm16 && !f32 && !f64)
    throw IoError("unsupported WAV encoding (need PCM16 or float32), format=" +
                  std::to_string(format) + " bits=" + std::to_string(bits));
  const std::size_t bytes_per = bits / 8;
  const Index frames = static_cast<Index>(data_size / (bytes_per * channels));
  Waveform w = Waveform::zeros(channels, frames, static_cast<int>(rate));
  std::size_t p = data_pos;
  for (Index t = 0; t < frames; ++t) {
    for (Index c = 0; c < channels; ++c, p += bytes_per) {
      if (pcm16) {
        w.samples(c, t) = read_le<std::int16_t>(b, p) / 32768.0;
      } else {
        const double v = f32 ? read_le<float>(b, p) : read_le<double>(b, p);
        if (!std::isfinite(v)) throw IoError("non-finite sample in WAV data");
        w.samples(c, t) = v;
      }
    }
  }
  return w;
}

std::vector<std::uint8_t> encode_wav(const Waveform& w, WavFormat format) {
  const std::uint16_t channels = static_cast<std::uint16_t>(w.channels());
  const std::uint16_t bits =
      format == WavFormat::kPcm16 ? 16 : (format == WavFormat::kFloat32 ? 32 : 64);
  const std::uint32_t block = channels * (bits / 8u);
  const std::uint32_t data_size =
      static_cast<std::uint32_t>(block * static_cast<std::uint64_t>(w.num_samples()));
  std::vector<std::uint8_t> b;
  b.reserve(44 + data_size);
  append_tag(b, "RIFF");
  append_le<std::uint32_t>(b, 36 + data_size);
  append_tag(b, "WAVE");
  append_tag(b, "fmt ");
  append_le<std::uint32_t>(b, 16);
  append_le<std::uint16_t>(b, format == WavFormat::kPcm16 ? kFormatPcm : kFormatFloat);
  append_le<std::uint16_t>(b, channels);
  append_le<std::uint32_t>(b, static_cast<std::uint32_t>(w.sample_rate));
  append_le<std::uint32_t>(b, static_cast<std::uint32_t>(w.sample_rate) * block);
  append_le<std::uint16_t>(b, static_cast<std::uint16_t>(block));
  append_le<std::uint16_t>(b, bits);
  append_tag(b, "data");
  append_le<std::uint32_t>(b, data_size);
  for (Index t = 0; t < w.num_samples(); ++t) {
    for (Index c = 0; c < w.channels(); ++c) {
      const double v = w.samples(c, t);
      if (format == WavFormat::kPcm16) {
        const double q = std::clamp(std::round(v * 32768.0), -32768.0, 32767.0);
        append_le<std::int16_t>(b, static_cast<std::int16_t>(q));
      } else if (format == WavFormat::kFloat32) {
        append_le<float>(b, static_cast<float>(v));
      } else {
        append_le<double>(b, v);
      }
    }
  }
  return b;
}

Waveform read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_wav(bytes);
  } catch (const IoError& e) {
    throw IoError(path + ": " + e.what());
  }
}

Waveform read_wav_16k(const std::string& path) {
  Waveform w = read_wav(path);
  if (w.sample_rate != kSampleRate)
    throw InvalidInput(path + ": sample rate " + std::to_string(w.sample_rate) +
                       " Hz is not supported (expected 16000 Hz)");
  return w;
}

void write_wav(const std::string& path, const Waveform& w, WavFormat format) {
  const auto bytes = encode_wav(w, format);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace dasr
