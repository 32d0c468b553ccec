// Copyright 2026 The dasr Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Speaker diarization of separated streams (sliding-window embeddings and
// normalized-maximum-eigengap spectral clustering) and per-word speaker
// attribution.

#ifndef DASR_DIARIZATION_HPP
#define DASR_DIARIZATION_HPP

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "dasr/signal.hpp"

namespace dasr {

struct TimeInterval {
  double start_s = 0.0;
  double end_s = 0.0;

  double duration() const { return end_s - start_s; }
};

// Overlap length of two intervals, zero when disjoint.
inline double overlap(const TimeInterval& a, const TimeInterval& b) {
  return std::max(0.0, std::min(a.end_s, b.end_s) - std::max(a.start_s, b.start_s));
}

class SpeakerEmbedder {
 public:
  virtual ~SpeakerEmbedder() = default;
  // Unit-norm vector of dimension(). Implementations must be safe to call
  // concurrently.
  virtual Vector<double> embed(const Waveform& window) const = 0;
  virtual Index dimension() const = 0;
};

// Long-term log power spectrum below 4 kHz, mean-removed and normalized.
// A model-free stand-in for a trained speaker encoder.
class SpectralEmbedder : public SpeakerEmbedder {
 public:
  Vector<double> embed(const Waveform& window) const override;
  Index dimension() const override;
};

struct ActivityOptions {
  double frame_ms = 25.0;
  double hop_ms = 10.0;
  double threshold_db = -40.0;  // relative to the loudest frame of the stream
  double hangover_ms = 300.0;
};

// Energy-based speech activity on channel 0.
std::vector<TimeInterval> detect_speech_activity(const Waveform& stream,
                                                 const ActivityOptions& opts = {});

struct WindowEmbedding {
  TimeInterval interval;
  Vector<double> vector;
};

std::vector<WindowEmbedding> window_embeddings(const Waveform& stream,
                                               const SpeakerEmbedder& embedder,
                                               double window_s, double hop_s,
                                               const std::vector<TimeInterval>& activity);

struct NmeScOptions {
  Index p_min = 2;
  Index p_max = 30;
  Index max_speakers = 8;
  std::uint64_t seed = 0;
  int kmeans_restarts = 10;
};

struct NmeScResult {
  std::vector<int> labels;  // canonical: first row gets 0, next new cluster 1, ...
  int num_speakers = 1;
  Index p = 0;              // selected pruning parameter
};

// Rows of `embeddings` are the vectors to cluster.
NmeScResult nme_sc_cluster(const Matrix<double>& embeddings, const NmeScOptions& opts = {});
NmeScResult nme_sc_cluster(const std::vector<Vector<double>>& embeddings,
                           const NmeScOptions& opts = {});

struct LabeledWindow {
  TimeInterval interval;
  int label = 0;
};

struct SpeakerTurn {
  double start_s = 0.0;
  double end_s = 0.0;
  int label = 0;
};

using StreamDiarization = std::vector<SpeakerTurn>;

struct DiarizationOutput {
  std::vector<StreamDiarization> streams;
};

// Windows must be sorted by start. Overlapping neighbours are cut at the
// midpoint of their overlap; touching spans with equal labels merge.
StreamDiarization intervals_from_labels(const std::vector<LabeledWindow>& windows);

struct DiarizationConfig {
  double window_s = 1.5;
  double hop_s = 0.75;
  ActivityOptions activity;
  NmeScOptions clustering;
};

// Clusters embeddings pooled from every stream so one speaker gets one
// label across streams.
DiarizationOutput diarize_streams(const std::vector<Waveform>& streams,
                                  const SpeakerEmbedder& embedder,
                                  const DiarizationConfig& cfg = {});

struct AsrWord {
  std::string text;
  double start_s = 0.0;
  double end_s = 0.0;
  Index stream = 0;
};

enum class AttributionRule { kSingleActive, kNearestWord, kLongestOverlap };

struct AttributedWord {
  std::string text;
  double start_s = 0.0;
  double end_s = 0.0;
  int speaker = 0;
  Index stream = 0;
  AttributionRule rule = AttributionRule::kSingleActive;
};

class Unattributable : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

// One active speaker in the word's span: that speaker. Several: the one
// active longest inside the span (earliest turn wins ties). None: the label
// of the nearest word by midpoint distance among words labeled by the
// first two rules, preferring the same stream (earlier word wins ties).
std::vector<AttributedWord> attribute_words(const std::vector<AsrWord>& words,
                                            const DiarizationOutput& diarization);

std::string speaker_label(int label);

// SPEAKER <meeting_id> <stream> <start> <dur> <label>
void write_rttm(std::ostream& out, const std::string& meeting_id, const DiarizationOutput& d);
DiarizationOutput read_rttm(std::istream& in, const std::string& meeting_id);

// {"word","start","end","speaker","stream"} per line.
void write_attributed_words(std::ostream& out, const std::vector<AttributedWord>& words);

}  // namespace dasr

#endif  // DASR_DIARIZATION_HPP
