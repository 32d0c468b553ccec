// Copyright 2026 The dasr Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dasr/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace dasr {

double direct_early_weight(double t_ms, double cutoff_ms, double transition_ms) {
  if (transition_ms <= 0.0) {
    if (t_ms < cutoff_ms) return 1.0;
    if (t_ms > cutoff_ms) return 0.0;
    return 0.5;
  }
  const double start = cutoff_ms - 0.5 * transition_ms;
  if (t_ms <= start) return 1.0;
  if (t_ms >= start + transition_ms) return 0.0;
  return 0.5 * (1.0 + std::cos(std::numbers::pi * (t_ms - start) / transition_ms));
}

RirSplit split_rir(const Rir& rir, double cutoff_ms, double transition_ms) {
  if (rir.channels() < 1 || rir.taps() < 1) throw InvalidInput("RIR is empty");
  if (!rir.response.allFinite()) throw InvalidInput("RIR has non-finite taps");
  if (cutoff_ms <= 0.0) throw InvalidInput("cutoff must be positive");
  if (transition_ms < 0.0 || transition_ms > 2.0 * cutoff_ms)
    throw InvalidInput("transition_ms must lie in [0, 2 * cutoff_ms]");

  Index peak = 0;
  const double peak_value = rir.response.row(0).cwiseAbs().maxCoeff(&peak);
  if (peak_value == 0.0) throw InvalidInput("RIR channel 0 is all zeros; no onset");

  RirSplit out;
  out.cutoff_ms = cutoff_ms;
  out.transition_ms = transition_ms;
  out.onset_tap = peak;
  out.sample_rate = rir.sample_rate;
  out.direct_early.resize(rir.channels(), rir.taps());
  for (Index n = 0; n < rir.taps(); ++n) {
    const double t_ms = 1000.0 * static_cast<double>(n - peak) / rir.sample_rate;
    out.direct_early.col(n) =
        rir.response.col(n) * direct_early_weight(t_ms, cutoff_ms, transition_ms);
  }
  out.late = rir.response - out.direct_early;
  return out;
}

std::vector<double> detect_pauses(const Waveform& speech, const PauseDetectionOptions& opts) {
  if (speech.channels() != 1) throw InvalidInput("pause detection expects mono audio");
  const double fs = speech.sample_rate;
  const Index frame = std::max<Index>(1, std::lround(opts.frame_ms * fs / 1000.0));
  const Index hop = std::max<Index>(1, std::lround(opts.hop_ms * fs / 1000.0));
  std::vector<double> pauses;
  if (speech.num_samples() < frame) return pauses;
  const Index frames = (speech.num_samples() - frame) / hop + 1;

  std::vector<double> power(static_cast<std::size_t>(frames));
  for (Index i = 0; i < frames; ++i)
    power[static_cast<std::size_t>(i)] =
        speech.samples.row(0).segment(i * hop, frame).squaredNorm() / static_cast<double>(frame);
  const double peak = *std::max_element(power.begin(), power.end());
  if (!(peak > 0.0)) return pauses;
  const double threshold = peak * std::pow(10.0, opts.threshold_db / 10.0);
  const Index min_frames =
      static_cast<Index>(std::ceil(opts.min_pause_ms / opts.hop_ms - 1e-9));

  auto center_s = [&](Index i) {
    return (static_cast<double>(i * hop) + 0.5 * static_cast<double>(frame)) / fs;
  };
  Index run_start = -1;
  for (Index i = 0; i <= frames; ++i) {
    const bool low = i < frames && power[static_cast<std::size_t>(i)] < threshold;
    if (low && run_start < 0) run_start = i;
    if (!low && run_start >= 0) {
      if (i - run_start >= min_frames)
        pauses.push_back(0.5 * (center_s(run_start) + center_s(i - 1)));
      run_start = -1;
    }
  }
  return pauses;
}

Waveform insert_silences(const Waveform& speech, const std::vector<double>& pause_points_s,
                         std::uint64_t seed, const SilenceInsertionOptions& opts,
                         std::vector<InsertedSilence>* inserted) {
  if (opts.min_gap_s < 0.0 || opts.max_gap_s < opts.min_gap_s)
    throw InvalidInput("silence gap range is invalid");
  std::vector<double> points = pause_points_s;
  std::sort(points.begin(), points.end());
  std::mt19937_64 rng(seed);

  std::vector<std::pair<Index, Index>> inserts;  // (position, length)
  Index added = 0;
  for (double p : points) {
    if (p < 0.0 || p > speech.duration_s())
      throw InvalidInput("pause point outside the signal");
    const double u = uniform01(rng);
    const double gap = uniform(rng, opts.min_gap_s, opts.max_gap_s);
    if (u < opts.probability) {
      const Index len = std::lround(gap * speech.sample_rate);
      inserts.emplace_back(std::lround(p * speech.sample_rate), len);
      added += len;
    }
  }
  if (inserted) {
    inserted->clear();
    for (const auto& [pos, len] : inserts)
      inserted->push_back({double(pos) / speech.sample_rate, double(len) / speech.sample_rate});
  }
  if (inserts.empty()) return speech;

  Waveform out = Waveform::zeros(speech.channels(), speech.num_samples() + added,
                                 speech.sample_rate);
  Index src = 0, dst = 0;
  for (const auto& [pos, len] : inserts) {
    const Index take = pos - src;
    out.samples.middleCols(dst, take) = speech.samples.middleCols(src, take);
    src += take;
    dst += take + len;
  }
  out.samples.middleCols(dst, speech.num_samples() - src) =
      speech.samples.middleCols(src, speech.num_samples() - src);
  return out;
}

double retime(double t_s, const std::vector<InsertedSilence>& inserted) {
  double shifted = t_s;
  for (const auto& s : inserted)
    if (s.at_s <= t_s) shifted += s.length_s;
  return shifted;
}

std::vector<UtteranceRecord> mos_quartile_filter(const std::vector<UtteranceRecord>& records) {
  if (records.empty()) throw InvalidInput("MOS filter needs at least one record");
  std::vector<double> scores;
  scores.reserve(records.size());
  for (const auto& r : records) {
    if (!std::isfinite(r.mos_score)) throw InvalidInput("non-finite MOS score for " + r.path);
    scores.push_back(r.mos_score);
  }
  const double threshold = percentile(scores, 0.75);
  std::vector<UtteranceRecord> kept;
  std::copy_if(records.begin(), records.end(), std::back_inserter(kept),
               [threshold](const UtteranceRecord& r) { return r.mos_score >= threshold; });
  return kept;
}

ConvolvedSpeech convolve_components(const Waveform& speech, const RirSplit& split) {
  if (speech.channels() != 1) throw InvalidInput("convolution expects mono speech");
  if (speech.sample_rate != split.sample_rate)
    throw InvalidInput("speech and RIR sample rates differ");
  const Index channels = split.direct_early.rows();
  const Index length = speech.num_samples() + split.direct_early.cols() - 1;
  ConvolvedSpeech out{Waveform::zeros(channels, length, speech.sample_rate),
                      Waveform::zeros(channels, length, speech.sample_rate)};
  if (speech.num_samples() == 0) return out;
  const Vector<double> x = speech.samples.row(0).transpose();
  ChannelMatrix<double> kernels(2 * channels, split.direct_early.cols());
  kernels << split.direct_early, split.late;
  const ChannelMatrix<double> y = convolve_each<double>(x, kernels);
  out.direct_early.samples = y.topRows(channels);
  out.reverb.samples = y.bottomRows(channels);
  return out;
}

namespace {

ChannelMatrix<double> component_sum(const SupervisionBundle& b) {
  ChannelMatrix<double> sum = ChannelMatrix<double>::Zero(b.mixture.channels(),
                                                          b.mixture.num_samples());
  for (Index i = 0; i < b.num_speakers(); ++i) {
    sum += b.direct_early[static_cast<std::size_t>(i)].samples;
    sum += b.reverb[static_cast<std::size_t>(i)].samples;
  }
  sum += b.noise.samples;
  return sum;
}

}  // namespace

double mixture_identity_error(const SupervisionBundle& b) {
  if (b.mixture.num_samples() == 0) return 0.0;
  return (b.mixture.samples - component_sum(b)).cwiseAbs().maxCoeff();
}

SupervisionBundle mix_meeting(const std::vector<ConvolvedSpeech>& speakers,
                              const Waveform& noise, std::vector<double> shifts_s,
                              std::uint64_t seed, const MixOptions& opts) {
  if (speakers.empty()) throw InvalidInput("mixing needs at least one speaker");
  const Index channels = speakers.front().direct_early.channels();
  const int rate = speakers.front().direct_early.sample_rate;
  for (const auto& s : speakers) {
    if (s.direct_early.channels() != channels || s.reverb.channels() != channels)
      throw InvalidInput("speaker images disagree in channel count");
    if (s.direct_early.sample_rate != rate || s.reverb.sample_rate != rate)
      throw InvalidInput("speaker images disagree in sample rate");
  }
  if (noise.num_samples() > 0) {
    if (noise.channels() != channels) throw InvalidInput("noise channel count differs from speech");
    if (noise.sample_rate != rate) throw InvalidInput("noise sample rate differs from speech");
  }

  std::mt19937_64 rng(seed);
  if (shifts_s.empty()) {
    for (std::size_t i = 0; i < speakers.size(); ++i)
      shifts_s.push_back(uniform(rng, 0.0, opts.max_shift_s));
  }
  if (shifts_s.size() != speakers.size()) throw InvalidInput("one shift per speaker required");

  std::vector<Index> offsets;
  Index length = 0;
  for (std::size_t i = 0; i < speakers.size(); ++i) {
    if (shifts_s[i] < 0.0) throw InvalidInput("shifts must be nonnegative");
    const Index off = std::lround(shifts_s[i] * rate);
    offsets.push_back(off);
    length = std::max({length, off + speakers[i].direct_early.num_samples(),
                       off + speakers[i].reverb.num_samples()});
  }

  SupervisionBundle b;
  b.speaker_offsets_s.reserve(speakers.size());
  for (std::size_t i = 0; i < speakers.size(); ++i) {
    Waveform de = Waveform::zeros(channels, length, rate);
    Waveform rev = Waveform::zeros(channels, length, rate);
    de.samples.middleCols(offsets[i], speakers[i].direct_early.num_samples()) =
        speakers[i].direct_early.samples;
    rev.samples.middleCols(offsets[i], speakers[i].reverb.num_samples()) =
        speakers[i].reverb.samples;
    b.direct_early.push_back(std::move(de));
    b.reverb.push_back(std::move(rev));
    b.speaker_offsets_s.push_back(static_cast<double>(offsets[i]) / rate);
    b.speaker_ids.push_back("spk" + std::to_string(i));
  }

  b.noise = Waveform::zeros(channels, length, rate);
  if (noise.num_samples() > 0) {
    for (Index start = 0; start < length; start += noise.num_samples()) {
      const Index take = std::min(noise.num_samples(), length - start);
      b.noise.samples.middleCols(start, take) = noise.samples.leftCols(take);
    }
  }

  b.mixture = Waveform::zeros(channels, length, rate);
  for (std::size_t i = 0; i < speakers.size(); ++i) {
    b.mixture.samples += b.direct_early[i].samples;
    b.mixture.samples += b.reverb[i].samples;
  }
  if (opts.snr_db) {
    const double speech_energy = b.mixture.samples.squaredNorm();
    const double noise_energy = b.noise.samples.squaredNorm();
    if (speech_energy > 0.0 && noise_energy > 0.0)
      b.noise.samples *=
          std::sqrt(speech_energy / (noise_energy * std::pow(10.0, *opts.snr_db / 10.0)));
  }
  b.mixture.samples += b.noise.samples;
  return b;
}

double estimate_rt60(const Rir& rir) {
  if (rir.channels() < 1 || rir.taps() < 1) throw InvalidInput("RIR is empty");
  const Index n = rir.taps();
  std::vector<double> edc(static_cast<std::size_t>(n));
  double acc = 0.0;
  for (Index i = n - 1; i >= 0; --i) {
    acc += rir.response(0, i) * rir.response(0, i);
    edc[static_cast<std::size_t>(i)] = acc;
  }
  const double total = edc.front();
  if (!(total > 0.0)) throw InvalidInput("RIR channel 0 is all zeros");

  auto level_db = [&](Index i) { return 10.0 * std::log10(edc[static_cast<std::size_t>(i)] / total); };
  Index first = -1, last = -1;
  for (Index i = 0; i < n; ++i) {
    const double db = edc[static_cast<std::size_t>(i)] > 0.0 ? level_db(i) : -INFINITY;
    if (first < 0 && db <= -5.0) first = i;
    if (db <= -35.0) {
      last = i;
      break;
    }
  }
  if (last < 0) throw InsufficientDecay("energy decay curve never reaches -35 dB");

  // Least squares over the finite points of [first, last].
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  Index count = 0;
  for (Index i = first; i <= last; ++i) {
    if (!(edc[static_cast<std::size_t>(i)] > 0.0)) continue;
    const double x = static_cast<double>(i) / rir.sample_rate;
    const double y = level_db(i);
    sx += x; sy += y; sxx += x * x; sxy += x * y;
    ++count;
  }
  if (count < 2) throw InsufficientDecay("no usable points between -5 and -35 dB");
  const double denom = static_cast<double>(count) * sxx - sx * sx;
  const double slope = (static_cast<double>(count) * sxy - sx * sy) / denom;  // dB per second
  if (!(slope < 0.0) || !std::isfinite(slope))
    throw InsufficientDecay("energy decay curve has no negative slope");
  return -60.0 / slope;
}

}  // namespace dasr
