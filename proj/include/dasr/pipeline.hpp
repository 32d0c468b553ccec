// Copyright 2026 The dasr Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Meeting manifests, configuration, the ASR seam, and the
// CSS -> ASR -> diarization -> attribution flow over batches of meetings.

#ifndef DASR_PIPELINE_HPP
#define DASR_PIPELINE_HPP

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dasr/css.hpp"
#include "dasr/diarization.hpp"
#include "dasr/scoring.hpp"

namespace dasr {

enum class Track { kSingleChannel, kMultiChannel };

std::string to_string(Track t);
// Accepts "sc", "single-channel", "mc", "multi-channel".
Track track_from_string(const std::string& s);

inline constexpr int kArrayChannels = 7;

struct DeviceEntry {
  std::string device_id;
  Track track = Track::kSingleChannel;
  int channels = 1;
  // One multi-channel file, or one mono file per channel.
  std::vector<std::string> wav_paths;
};

struct MeetingManifest {
  std::string meeting_id;
  std::vector<DeviceEntry> devices;
  std::optional<std::string> reference_path;
  std::optional<MeetingMetadata> metadata;
  std::optional<std::string> bundle_dir;  // supervision for the oracle estimator
};

// Throws ConfigError when a device's declared channel count does not fit
// its track.
void validate(const MeetingManifest& m);

// JSON lines:
// {"meeting_id", "devices":[{"id","track","channels","wav"|"wavs"}],
//  "reference", "metadata":{"tags","device","track"}, "bundle"}
// Relative paths are resolved against the manifest's directory.
std::vector<MeetingManifest> read_manifests(const std::string& path);

// Loads a device's audio, checking the file's channel count against the
// declared one.
Waveform load_device_audio(const DeviceEntry& device);

class AsrError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class AsrClient {
 public:
  virtual ~AsrClient() = default;
  // Words sorted by start time, within the stream's bounds.
  virtual std::vector<WordTiming> transcribe(const Waveform& stream) = 0;
  virtual bool concurrent_safe() const { return false; }
};

// FNV-1a over the 16-bit PCM quantization of every sample, as 16 hex digits.
std::string stream_fingerprint(const Waveform& stream);

// Plays back scripted word lists keyed by stream fingerprint.
class MockAsr : public AsrClient {
 public:
  MockAsr() = default;
  explicit MockAsr(std::map<std::string, std::vector<WordTiming>> script)
      : script_(std::move(script)) {}

  void add(const Waveform& stream, std::vector<WordTiming> words) {
    script_[stream_fingerprint(stream)] = std::move(words);
  }
  // JSON object {fingerprint: [{text,start_s,end_s}, ...]}.
  static MockAsr from_file(const std::string& path);

  std::vector<WordTiming> transcribe(const Waveform& stream) override;
  bool concurrent_safe() const override { return true; }

 private:
  std::map<std::string, std::vector<WordTiming>> script_;
};

// POSTs the stream as a 16 kHz float32 WAV to `endpoint` and expects
// {"words":[{"text","start_s","end_s"}, ...]}.
class HttpAsrClient : public AsrClient {
 public:
  explicit HttpAsrClient(std::string endpoint, double timeout_s = 300.0);
  std::vector<WordTiming> transcribe(const Waveform& stream) override;
  bool concurrent_safe() const override { return true; }

 private:
  std::string endpoint_;
  double timeout_s_;
};

// POSTs each block as JSON {"start_frame","frames","bins","channels",
// "real":[...],"imag":[...]} (channel-major, then frame, then bin) and
// expects {"speech":[[frames*bins]...],"noise":[frames*bins]}.
class HttpMaskEstimator : public MaskEstimator {
 public:
  HttpMaskEstimator(std::string endpoint, Index num_streams, double timeout_s = 300.0);
  MaskSet estimate(const Spectrogram& segment, Index start_frame) override;
  Index num_streams() const override { return num_streams_; }

 private:
  std::string endpoint_;
  Index num_streams_;
  double timeout_s_;
};

enum class EstimatorKind { kOracle, kExternal };
enum class AsrKind { kMock, kExternal };

struct PipelineConfig {
  Track track = Track::kSingleChannel;
  CssConfig css;
  DiarizationConfig diarization;
  ScoringConfig scoring;
  EstimatorKind estimator = EstimatorKind::kOracle;
  std::string estimator_endpoint;
  AsrKind asr = AsrKind::kMock;
  std::string asr_endpoint;
  std::string asr_script;  // MockAsr script file; empty plays back nothing
  std::uint64_t seed = 0;
  int workers = 1;
  double segment_gap_s = 1.0;
  std::string output_dir = "dasr_out";
};

// Sets css.mode from the track and rejects inconsistent settings.
void validate(PipelineConfig& cfg);

// Strict: unknown keys are a ConfigError. Missing keys keep defaults.
PipelineConfig load_pipeline_config(const std::string& path);
PipelineConfig parse_pipeline_config(const std::string& json_text);

// The ASR backend for `cfg`. DASR_ASR_ENDPOINT, when set, selects the
// external backend at that endpoint.
std::unique_ptr<AsrClient> make_asr_client(const PipelineConfig& cfg);

using EstimatorFactory =
    std::function<std::unique_ptr<MaskEstimator>(const MeetingManifest&, const PipelineConfig&)>;

// Oracle: IRMs from the manifest's bundle. External: HttpMaskEstimator.
std::unique_ptr<MaskEstimator> default_estimator(const MeetingManifest& m,
                                                 const PipelineConfig& cfg);

struct MeetingOutput {
  TranscriptSet hypothesis;
  DiarizationOutput diarization;
  std::vector<AttributedWord> words;
  CssResult css;
};

// First device whose track matches cfg.track.
const DeviceEntry& select_device(const MeetingManifest& m, const PipelineConfig& cfg);

// Consecutive same-speaker words on a stream join one segment while the
// silence between them is at most `gap_s`.
std::vector<SegmentAnnotation> segments_from_words(const std::vector<AttributedWord>& words,
                                                   double gap_s);

MeetingOutput run_meeting(const MeetingManifest& m, const PipelineConfig& cfg,
                          MaskEstimator& estimator, AsrClient& asr,
                          const SpeakerEmbedder& embedder);
MeetingOutput run_meeting(const MeetingManifest& m, const PipelineConfig& cfg,
                          MaskEstimator& estimator, AsrClient& asr);

struct MeetingRun {
  std::string meeting_id;
  std::optional<MeetingOutput> output;
  std::optional<std::string> error;
};

struct BatchResult {
  std::vector<MeetingRun> runs;  // input order
  ScoreReport report;            // meetings with a reference and no failure
};

struct BatchOptions {
  EstimatorFactory estimator_factory = default_estimator;
  const SpeakerEmbedder* embedder = nullptr;  // null: SpectralEmbedder
  bool write_outputs = true;                  // to cfg.output_dir
};

BatchResult run_batch(const std::vector<MeetingManifest>& manifests, const PipelineConfig& cfg,
                      AsrClient& asr, const BatchOptions& opts = {});

}  // namespace dasr

#endif  // DASR_PIPELINE_HPP
