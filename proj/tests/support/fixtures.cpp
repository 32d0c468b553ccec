// Copyright 2026 The dasr Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "fixtures.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <limits>
#include <numbers>

namespace dasr::fixtures {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kSpeedOfSound = 343.0;

const char* const kVocabulary[] = {
    "alpha", "bravo", "budget", "coffee", "delta",  "design", "echo",  "friday", "guitar",
    "hotel", "india", "kernel", "lima",   "market", "night",  "oscar", "paper",  "quiet",
    "radio", "sierra", "table", "umbrella", "victor", "window", "yankee", "zulu"};

// Adds amp * delta(t - delay) band-limited by a Hann-windowed sinc.
void add_fractional_impulse(Eigen::Ref<Eigen::RowVectorXd> row, double delay, double amp) {
  constexpr int kHalf = 32;
  const auto base = static_cast<Index>(std::floor(delay));
  for (Index n = base - kHalf + 1; n <= base + kHalf; ++n) {
    if (n < 0 || n >= row.size()) continue;
    const double x = double(n) - delay;
    const double sinc = std::abs(x) < 1e-12 ? 1.0 : std::sin(kPi * x) / (kPi * x);
    const double window = 0.5 + 0.5 * std::cos(kPi * x / kHalf);
    row(n) += amp * sinc * window;
  }
}

}  // namespace

double gaussian(std::mt19937_64& rng) {
  const double u1 = 1.0 - uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

Waveform white_noise(std::uint64_t seed, Index channels, Index samples, double stddev) {
  std::mt19937_64 rng(seed);
  Waveform w = Waveform::zeros(channels, samples);
  for (Index c = 0; c < channels; ++c)
    for (Index t = 0; t < samples; ++t) w.samples(c, t) = stddev * gaussian(rng);
  return w;
}

Voice voice_for(int i) {
  static const Voice voices[] = {{105.0, 550.0, 1300.0}, {175.0, 700.0, 1900.0},
                                 {240.0, 450.0, 2400.0}, {140.0, 800.0, 1600.0},
                                 {205.0, 350.0, 2100.0}, {280.0, 650.0, 2700.0}};
  return voices[static_cast<std::size_t>(i) % std::size(voices)];
}

Utterance synthetic_utterance(const Voice& voice, std::uint64_t seed, int num_words) {
  std::mt19937_64 rng(seed);
  const double fs = kSampleRate;
  struct Burst {
    double start, end, f0;
  };
  std::vector<Burst> bursts;
  Utterance u;
  double t = 0.15;
  for (int w = 0; w < num_words; ++w) {
    const double dur = uniform(rng, 0.22, 0.45);
    const double f0 = voice.f0 * uniform(rng, 0.95, 1.05);
    bursts.push_back({t, t + dur, f0});
    u.words.push_back({kVocabulary[uniform_index(rng, std::size(kVocabulary))], t, t + dur});
    t += dur;
    if (w + 1 < num_words) t += uniform01(rng) < 0.25 ? uniform(rng, 0.3, 0.6) : uniform(rng, 0.06, 0.12);
  }
  const auto total = static_cast<Index>(std::ceil((t + 0.15) * fs));
  u.audio = Waveform::zeros(1, total);
  auto x = u.audio.samples.row(0);

  // Two resonances with 80 / 120 Hz half-bandwidths over a -6 dB/octave
  // source tilt, roughly a voiced vowel.
  auto envelope_gain = [&](double f) {
    const double a = (f - voice.formant1) / 80.0;
    const double b = (f - voice.formant2) / 120.0;
    return 1.0 / (1.0 + a * a) + 0.6 / (1.0 + b * b) + 0.01;
  };
  for (const Burst& b : bursts) {
    const auto s0 = static_cast<Index>(std::llround(b.start * fs));
    const auto s1 = static_cast<Index>(std::llround(b.end * fs));
    const int harmonics = static_cast<int>(3800.0 / b.f0);
    std::vector<double> amp(static_cast<std::size_t>(harmonics));
    for (int k = 1; k <= harmonics; ++k) amp[std::size_t(k - 1)] = envelope_gain(k * b.f0) / k;
    const double vib_phase = uniform(rng, 0.0, 2.0 * kPi);
    const double ramp = 0.025 * fs;
    double phase = 0.0;
    for (Index n = s0; n < s1 && n < total; ++n) {
      const double tt = double(n - s0) / fs;
      const double f = b.f0 * (1.0 + 0.04 * std::sin(2.0 * kPi * 3.0 * tt + vib_phase));
      phase += 2.0 * kPi * f / fs;
      double v = 0.0;
      for (int k = 1; k <= harmonics; ++k) v += amp[std::size_t(k - 1)] * std::sin(k * phase);
      const double from_start = double(n - s0), to_end = double(s1 - 1 - n);
      double env = 1.0;
      if (from_start < ramp) env = 0.5 - 0.5 * std::cos(kPi * from_start / ramp);
      if (to_end < ramp) env = std::min(env, 0.5 - 0.5 * std::cos(kPi * to_end / ramp));
      x(n) += env * v;
    }
  }
  const double peak = x.cwiseAbs().maxCoeff();
  if (peak > 0.0) x *= 0.5 / peak;
  return u;
}

std::vector<std::array<double, 2>> array_geometry() {
  std::vector<std::array<double, 2>> g{{0.0, 0.0}};
  for (int k = 0; k < 6; ++k)
    g.push_back({0.0425 * std::cos(kPi * k / 3.0), 0.0425 * std::sin(kPi * k / 3.0)});
  return g;
}

Rir synthetic_rir(std::uint64_t seed, Index channels, double azimuth, double distance_m,
                  double rt60_s, const std::string& room, const std::string& position) {
  if (channels != 1 && channels != 7) throw InvalidInput("synthetic RIRs have 1 or 7 channels");
  std::mt19937_64 rng(seed);
  const double fs = kSampleRate;
  const auto geometry = array_geometry();
  const double d0 = distance_m / kSpeedOfSound * fs;  // samples
  const auto taps = static_cast<Index>(std::ceil(d0 + (0.03 + 1.0 * rt60_s) * fs));
  Rir rir;
  rir.room_id = room;
  rir.position_id = position;
  rir.response = ChannelMatrix<double>::Zero(channels, taps);

  auto plane_wave_delay = [&](Index c, double az) {
    const auto& p = geometry[static_cast<std::size_t>(c)];
    return -(p[0] * std::cos(az) + p[1] * std::sin(az)) / kSpeedOfSound * fs;
  };
  const double direct = 1.0 / distance_m;
  for (Index c = 0; c < channels; ++c)
    add_fractional_impulse(rir.response.row(c), d0 + plane_wave_delay(c, azimuth), direct);

  for (int r = 0; r < 6; ++r) {
    const double delay = d0 + uniform(rng, 3.0, 40.0) * 1e-3 * fs;
    const double amp = direct * uniform(rng, 0.25, 0.6) * (uniform01(rng) < 0.5 ? -1.0 : 1.0);
    const double az = uniform(rng, 0.0, 2.0 * kPi);
    for (Index c = 0; c < channels; ++c)
      add_fractional_impulse(rir.response.row(c), delay + plane_wave_delay(c, az), amp);
  }

  // Late tail: independent noise per channel under the decay envelope,
  // scaled to sit 3 dB below the direct path energy.
  const double start = d0 + 0.02 * fs;
  const double fade = 0.01 * fs;
  ChannelMatrix<double> tail = ChannelMatrix<double>::Zero(channels, taps);
  for (Index c = 0; c < channels; ++c)
    for (Index n = static_cast<Index>(std::ceil(start)); n < taps; ++n) {
      const double since = double(n) - start;
      double env = std::exp(-3.0 * std::log(10.0) * (double(n) - d0) / (rt60_s * fs));
      if (since < fade) env *= 0.5 - 0.5 * std::cos(kPi * since / fade);
      tail(c, n) = env * gaussian(rng);
    }
  const double tail_energy = tail.row(0).squaredNorm();
  if (tail_energy > 0.0) rir.response += tail * std::sqrt(0.5 * direct * direct / tail_energy);
  return rir;
}

Rir exponential_rir(std::uint64_t seed, double rt60_s, double length_s) {
  std::mt19937_64 rng(seed);
  const auto taps = static_cast<Index>(std::llround(length_s * kSampleRate));
  Rir rir;
  rir.response = ChannelMatrix<double>::Zero(1, taps);
  for (Index n = 0; n < taps; ++n) {
    const double t = double(n) / kSampleRate;
    rir.response(0, n) = std::exp(-3.0 * std::log(10.0) * t / rt60_s) * gaussian(rng);
  }
  return rir;
}

Corpus synthetic_corpus(std::uint64_t seed, int speakers, int utterances_per_speaker,
                        Index channels, int rooms, int positions) {
  Corpus corpus;
  std::mt19937_64 rng(seed);
  for (int s = 0; s < speakers; ++s) {
    const std::string spk = "speaker" + std::to_string(s);
    for (int k = 0; k < utterances_per_speaker; ++k) {
      const int words = 8 + static_cast<int>(uniform_index(rng, 5));
      Utterance u = synthetic_utterance(voice_for(s), derive_seed(seed, std::uint64_t(s * 100 + k)), words);
      UtteranceRecord rec;
      rec.path = "synthetic/" + spk + "/utt" + std::to_string(k) + ".wav";
      rec.speaker_id = spk;
      rec.mos_score = utterances_per_speaker > 1
                          ? 3.0 + 1.5 * k / double(utterances_per_speaker - 1)
                          : 4.0;
      rec.duration_s = u.audio.duration_s();
      corpus.words[rec.path] = u.words;
      corpus.pool.utterances.push_back(rec);
      corpus.pool.utterance_audio.push_back(std::move(u.audio));
    }
  }
  for (int r = 0; r < rooms; ++r) {
    const std::string room = "room" + std::to_string(r);
    const double rt60 = uniform(rng, 0.3, 0.45);
    for (int p = 0; p < positions; ++p) {
      const double az = 2.0 * kPi * p / positions + uniform(rng, -0.2, 0.2);
      const double dist = uniform(rng, 1.0, 2.0);
      corpus.pool.rirs.push_back(synthetic_rir(derive_seed(seed, 10000 + std::uint64_t(r * 100 + p)),
                                               channels, az, dist, rt60, room,
                                               "pos" + std::to_string(p)));
      corpus.pool.rir_paths.push_back("synthetic/" + room + "/pos" + std::to_string(p) + ".wav");
    }
    // Low-passed noise, independent across channels.
    Waveform noise = white_noise(derive_seed(seed, 20000 + std::uint64_t(r)), channels, 20 * kSampleRate, 0.05);
    for (Index c = 0; c < channels; ++c) {
      double state = 0.0;
      for (Index t = 0; t < noise.num_samples(); ++t) {
        state = 0.7 * state + noise.samples(c, t);
        noise.samples(c, t) = state;
      }
    }
    corpus.pool.noises.push_back({"synthetic/" + room + "/noise.wav", room, std::move(noise)});
  }
  return corpus;
}

namespace {

constexpr Index kKeyLength = 16;

std::uint64_t sample_key(const double* x) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (Index i = 0; i < kKeyLength; ++i) {
    std::uint64_t bits;
    std::memcpy(&bits, x + i, sizeof bits);
    h = (h ^ bits) * 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

BundleOracleEmbedder::BundleOracleEmbedder(const SupervisionBundle& bundle,
                                           std::vector<Waveform> streams, Index ref_channel)
    : streams_(std::move(streams)) {
  for (Index i = 0; i < bundle.num_speakers(); ++i)
    images_.push_back(bundle.direct_early[std::size_t(i)].samples.row(ref_channel) +
                      bundle.reverb[std::size_t(i)].samples.row(ref_channel));
  for (std::size_t s = 0; s < streams_.size(); ++s) {
    const auto& row = streams_[s].samples;
    for (Index o = 0; o + kKeyLength <= row.cols(); ++o)
      index_.push_back({sample_key(row.data() + o), s, o});
  }
  std::sort(index_.begin(), index_.end(),
            [](const Entry& a, const Entry& b) { return a.key < b.key; });
}

Vector<double> BundleOracleEmbedder::embed(const Waveform& window) const {
  const Index len = window.num_samples();
  const Eigen::RowVectorXd x = window.samples.row(0);
  if (len < kKeyLength) throw InvalidInput("window too short to locate");
  const std::uint64_t key = sample_key(x.data());
  auto it = std::lower_bound(index_.begin(), index_.end(), key,
                             [](const Entry& e, std::uint64_t k) { return e.key < k; });
  for (; it != index_.end() && it->key == key; ++it) {
    const auto& stream = streams_[it->stream].samples;
    const Index o = it->offset;
    // Zero runs collide on the key; probe the tail before a full compare.
    if (o + len > stream.cols() || stream(0, o + len - 1) != x(len - 1) ||
        stream(0, o + len / 2) != x(len / 2) || stream.row(0).segment(o, len) != x)
      continue;
    Index best = 0;
    double best_corr = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < images_.size(); ++i) {
      const double corr = images_[i].segment(o, len).dot(x);
      if (corr > best_corr) {
        best_corr = corr;
        best = static_cast<Index>(i);
      }
    }
    return Vector<double>::Unit(dimension(), best);
  }
  throw InvalidInput("window not found in any known stream");
}

double si_snr_db(const Eigen::Ref<const Eigen::RowVectorXd>& estimate,
                 const Eigen::Ref<const Eigen::RowVectorXd>& reference) {
  const Eigen::RowVectorXd e = estimate.array() - estimate.mean();
  const Eigen::RowVectorXd r = reference.array() - reference.mean();
  const Eigen::RowVectorXd target = (e.dot(r) / r.squaredNorm()) * r;
  return 10.0 * std::log10(target.squaredNorm() / (e - target).squaredNorm());
}

CrossTalk stream_cross_talk(const SupervisionBundle& b, const Matrix<double>& mask,
                            const StftConfig& cfg, Index channel) {
  const StftPadding padding = stft_padding(b.mixture.num_samples(), cfg);
  const Matrix<double> weight = mask.array().square().matrix();
  std::vector<double> energy;
  for (Index i = 0; i < b.num_speakers(); ++i) {
    Waveform image = b.direct_early[std::size_t(i)].channel(channel);
    image.samples += b.reverb[std::size_t(i)].samples.row(channel);
    const Matrix<double> power = stft(pad(image, padding), cfg).magnitude(0).array().square().matrix();
    energy.push_back(weight.cwiseProduct(power).sum());
  }
  CrossTalk ct;
  ct.dominant = static_cast<int>(std::max_element(energy.begin(), energy.end()) - energy.begin());
  double others = 0.0;
  for (std::size_t i = 0; i < energy.size(); ++i)
    if (static_cast<int>(i) != ct.dominant) others += energy[i];
  ct.ratio_db = others > 0.0 ? 10.0 * std::log10(others / energy[std::size_t(ct.dominant)]) : -300.0;
  return ct;
}

}  // namespace dasr::fixtures
