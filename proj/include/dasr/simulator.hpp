// Copyright 2026 The dasr Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Training-mixture simulation from measured room impulse responses with a
// full supervision decomposition:
//
//   mixture(t) = sum_i [ direct_early_i(t) + reverb_i(t) ] + noise(t)
//
// plus a Schroeder-integration reverberation time estimator.

#ifndef DASR_SIMULATOR_HPP
#define DASR_SIMULATOR_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dasr/signal.hpp"

namespace dasr {

struct Rir {
  ChannelMatrix<double> response;  // channels x taps
  std::string room_id;
  std::string position_id;
  int sample_rate = kSampleRate;

  Index channels() const { return response.rows(); }
  Index taps() const { return response.cols(); }
};

struct RirSplit {
  ChannelMatrix<double> direct_early;
  ChannelMatrix<double> late;
  double cutoff_ms = 50.0;
  double transition_ms = 8.0;
  Index onset_tap = 0;  // global peak of channel 0
  int sample_rate = kSampleRate;
};

// Direct+early weight at time t_ms after the onset: 1 before the fade, a
// raised-cosine fade centered on cutoff_ms over transition_ms, then 0.
double direct_early_weight(double t_ms, double cutoff_ms, double transition_ms);

RirSplit split_rir(const Rir& rir, double cutoff_ms = 50.0, double transition_ms = 8.0);

struct PauseDetectionOptions {
  double frame_ms = 25.0;
  double hop_ms = 10.0;
  double threshold_db = -30.0;  // relative to the loudest frame
  double min_pause_ms = 150.0;
};

// Midpoints (seconds, ascending) of runs of low-power frames.
std::vector<double> detect_pauses(const Waveform& speech,
                                  const PauseDetectionOptions& opts = {});

struct SilenceInsertionOptions {
  double probability = 0.5;
  double min_gap_s = 0.2;
  double max_gap_s = 2.0;
};

// A silence of length_s placed at at_s on the original utterance's clock.
struct InsertedSilence {
  double at_s = 0.0;
  double length_s = 0.0;
};

// When `inserted` is given it receives the silences actually placed, in
// time order, with lengths rounded to whole samples.
Waveform insert_silences(const Waveform& speech, const std::vector<double>& pause_points_s,
                         std::uint64_t seed, const SilenceInsertionOptions& opts = {},
                         std::vector<InsertedSilence>* inserted = nullptr);

// Moves a time on the original utterance's clock past every silence
// inserted at or before it.
double retime(double t_s, const std::vector<InsertedSilence>& inserted);

struct UtteranceRecord {
  std::string path;
  std::string speaker_id;
  double mos_score = 0.0;
  double duration_s = 0.0;
};

// Keeps records at or above the 75th MOS percentile, in input order.
std::vector<UtteranceRecord> mos_quartile_filter(const std::vector<UtteranceRecord>& records);

struct ConvolvedSpeech {
  Waveform direct_early;
  Waveform reverb;
};

ConvolvedSpeech convolve_components(const Waveform& speech, const RirSplit& split);

struct SupervisionBundle {
  Waveform mixture;
  std::vector<Waveform> direct_early;  // per speaker, mixture-aligned
  std::vector<Waveform> reverb;        // per speaker, mixture-aligned
  Waveform noise;
  std::vector<double> speaker_offsets_s;
  std::vector<std::string> speaker_ids;
  std::vector<std::string> sources;

  Index num_speakers() const { return static_cast<Index>(direct_early.size()); }
};

// Largest |mixture - (sum of components)| over all samples.
double mixture_identity_error(const SupervisionBundle& b);

struct MixOptions {
  double max_shift_s = 10.0;
  // When set, the tiled noise is scaled to this SNR against the summed
  // speech images (direct+early+reverb).
  std::optional<double> snr_db;
};

// Offsets each speaker by its shift (drawn uniformly from [0, max_shift_s]
// when shifts_s is empty), tiles or truncates the noise to the mixture
// length and sums.
SupervisionBundle mix_meeting(const std::vector<ConvolvedSpeech>& speakers,
                              const Waveform& noise, std::vector<double> shifts_s,
                              std::uint64_t seed, const MixOptions& opts = {});

class InsufficientDecay : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

// T30-based RT60 on channel 0: Schroeder decay curve, least-squares line
// between -5 and -35 dB, extrapolated to 60 dB.
double estimate_rt60(const Rir& rir);

// ---- manifest-driven generation -------------------------------------------

struct NoiseRecord {
  std::string path;
  std::string room_id;
  Waveform audio;
};

struct SimulationPool {
  std::vector<UtteranceRecord> utterances;
  std::vector<Waveform> utterance_audio;  // parallel to utterances
  std::vector<Rir> rirs;
  std::vector<std::string> rir_paths;     // parallel to rirs
  std::vector<NoiseRecord> noises;
};

// JSON lines; each record has "kind": "utterance" | "rir" | "noise".
// Relative paths resolve against the manifest's directory.
SimulationPool load_simulation_pool(const std::string& manifest_path);

struct SimulationConfig {
  int num_speakers = 3;
  double cutoff_ms = 50.0;
  double transition_ms = 8.0;
  bool mos_filter = true;
  PauseDetectionOptions pauses;
  SilenceInsertionOptions silences;
  double max_shift_s = 10.0;
  double min_snr_db = 5.0;
  double max_snr_db = 25.0;
};

struct BundleInfo {
  std::uint64_t global_seed = 0;
  std::uint64_t index = 0;
  std::uint64_t job_seed = 0;
  std::string room_id;
  std::vector<std::string> speaker_ids;
  std::vector<std::string> utterance_paths;
  std::vector<std::string> rir_paths;
  std::vector<std::string> position_ids;
  std::vector<double> shifts_s;
  std::vector<std::vector<InsertedSilence>> silences;  // per speaker
  std::string noise_path;
  double snr_db = 0.0;
};

// Bundle number `index` of a run seeded with global_seed. The job owns a
// random stream derived from (global_seed, index), so any subset of indices
// can be generated in any order with identical results.
SupervisionBundle generate_bundle(const SimulationPool& pool, const SimulationConfig& cfg,
                                  std::uint64_t global_seed, std::uint64_t index,
                                  BundleInfo* info = nullptr);

// mixture.wav, spk<i>_direct_early.wav, spk<i>_reverb.wav, noise.wav and
// bundle.json. Audio is written as 64-bit float so the mixture identity
// survives the round trip.
void write_bundle(const std::string& dir, const SupervisionBundle& bundle,
                  const BundleInfo& info);
SupervisionBundle read_bundle(const std::string& dir);

}  // namespace dasr

#endif  // DASR_SIMULATOR_HPP
