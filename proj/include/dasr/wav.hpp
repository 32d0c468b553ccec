// Copyright 2026 The dasr Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef DASR_WAV_HPP
#define DASR_WAV_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "dasr/signal.hpp"

namespace dasr {

enum class WavFormat { kPcm16, kFloat32, kFloat64 };

// RIFF/WAVE with PCM 16-bit or IEEE float 32-bit samples, any channel
// count, interleaved. 64-bit float is also handled; simulated bundles use it. WAVE_FORMAT_EXTENSIBLE headers are accepted on read.
Waveform read_wav(const std::string& path);
Waveform decode_wav(const std::vector<std::uint8_t>& bytes);

void write_wav(const std::string& path, const Waveform& w,
               WavFormat format = WavFormat::kFloat32);
std::vector<std::uint8_t> encode_wav(const Waveform& w,
                                     WavFormat format = WavFormat::kFloat32);

// Reads a file and rejects sample rates other than the processing rate.
Waveform read_wav_16k(const std::string& path);

}  // namespace dasr

#endif  // DASR_WAV_HPP
