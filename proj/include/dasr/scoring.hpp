// Copyright 2026 The dasr Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Transcript scoring: time-constrained minimum-permutation WER (tcpWER), a
// speaker-agnostic time-constrained WER, percentile-bootstrap confidence
// intervals over meetings, and per-vertical aggregation.

#ifndef DASR_SCORING_HPP
#define DASR_SCORING_HPP

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dasr/common.hpp"

namespace dasr {

struct WordTiming {
  std::string text;
  double start_s = 0.0;
  double end_s = 0.0;
};

// One annotated segment. When `words` is present it supplies word times;
// otherwise `transcript` is split and timed by character length.
struct SegmentAnnotation {
  double start_s = 0.0;
  double end_s = 0.0;
  std::string speaker;
  std::string transcript;
  std::optional<std::vector<WordTiming>> words;
};

struct TranscriptSet {
  std::string meeting_id;
  std::vector<SegmentAnnotation> segments;
};

struct TimedWord {
  std::string text;
  double start_s = 0.0;
  double end_s = 0.0;
  std::string speaker;
};

// Lowercase, drop punctuation except apostrophes and hyphens between word
// characters, split on whitespace. Bytes >= 0x80 count as word characters.
std::vector<std::string> normalize_text(const std::string& text);

std::vector<TimedWord> normalize_and_tokenize(const SegmentAnnotation& segment);

struct ErrorCounts {
  std::int64_t substitutions = 0;
  std::int64_t deletions = 0;
  std::int64_t insertions = 0;

  std::int64_t total() const { return substitutions + deletions + insertions; }
  ErrorCounts& operator+=(const ErrorCounts& o) {
    substitutions += o.substitutions;
    deletions += o.deletions;
    insertions += o.insertions;
    return *this;
  }
  bool operator==(const ErrorCounts&) const = default;
};

// True when [h.start - collar, h.end + collar] meets [r.start, r.end].
inline bool admissible(const TimedWord& h, const TimedWord& r, double collar_s) {
  return h.start_s - collar_s <= r.end_s && r.start_s <= h.end_s + collar_s;
}

// Minimum-cost alignment; pairs outside the collar can only be deleted and
// inserted. Both lists must be sorted by start time.
ErrorCounts tc_word_distance(const std::vector<TimedWord>& hyp, const std::vector<TimedWord>& ref,
                             double collar_s);

// Hungarian method on a square cost matrix; result[row] = assigned column.
std::vector<int> min_cost_assignment(const Eigen::MatrixXd& cost);

struct WerResult {
  ErrorCounts counts;
  std::int64_t reference_words = 0;
  std::int64_t hypothesis_words = 0;
  // Unset when the reference has no words.
  std::optional<double> rate;

  double rate_or_throw() const;
};

struct SpeakerPair {
  std::optional<std::string> hypothesis;  // unset: padded empty stream
  std::optional<std::string> reference;
};

struct TcpWerResult : WerResult {
  std::vector<SpeakerPair> mapping;
};

inline constexpr double kDefaultCollar = 5.0;

// Words of every segment, grouped per speaker, each list sorted by start.
std::map<std::string, std::vector<TimedWord>> speaker_words(const TranscriptSet& t);

TcpWerResult tcpwer(const TranscriptSet& hyp, const TranscriptSet& ref,
                    double collar_s = kDefaultCollar);

WerResult speaker_agnostic_wer(const TranscriptSet& hyp, const TranscriptSet& ref,
                               double collar_s = kDefaultCollar);

struct ConfidenceInterval {
  double low = 0.0;
  double high = 0.0;
  double mean = 0.0;
};

struct BootstrapOptions {
  double level = 0.95;
  int resamples = 10000;
  std::uint64_t seed = 0;
};

// Percentile bootstrap of the mean, resampling meetings with replacement.
ConfidenceInterval confidence_interval(const std::vector<double>& per_meeting_rates,
                                       const BootstrapOptions& opts = {});

// Bootstrap over paired per-meeting differences (system - baseline).
ConfidenceInterval relative_ci(const std::map<std::string, double>& system_rates,
                               const std::map<std::string, double>& baseline_rates,
                               const BootstrapOptions& opts = {});

struct MeetingMetadata {
  std::string meeting_id;
  std::set<std::string> tags;
  std::string device;
  std::string track;
};

struct MeetingScore {
  std::string meeting_id;
  TcpWerResult tcpwer;
  WerResult agnostic;
};

struct RateSummary {
  std::int64_t meetings = 0;
  double mean = 0.0;
  std::optional<ConfidenceInterval> ci;  // needs at least two meetings
};

struct VerticalRow {
  std::string tag;  // "all" for the overall row
  RateSummary tcpwer;
  RateSummary agnostic;
};

// One row per tag in sorted order, then "all". Meetings without a defined
// rate are skipped; meetings without metadata only count towards "all".
std::vector<VerticalRow> vertical_breakdown(const std::vector<MeetingScore>& scores,
                                            const std::vector<MeetingMetadata>& metadata,
                                            const BootstrapOptions& opts = {});

struct MeetingFailure {
  std::string meeting_id;
  std::string reason;
};

struct ScoreReport {
  double collar_s = kDefaultCollar;
  std::vector<MeetingScore> meetings;
  std::vector<VerticalRow> verticals;
  std::vector<MeetingFailure> failures;
};

struct ScoringConfig {
  double collar_s = kDefaultCollar;
  BootstrapOptions bootstrap;
};

// Meetings come from the reference side; a missing hypothesis scores as
// empty. Hypotheses without a reference are skipped with a warning.
ScoreReport score_meetings(const std::map<std::string, TranscriptSet>& hyp,
                           const std::map<std::string, TranscriptSet>& ref,
                           const std::vector<MeetingMetadata>& metadata,
                           const ScoringConfig& cfg = {});

// JSON lines, one segment per line:
// {meeting_id, start_s, end_s, speaker, words:[{text,start_s,end_s}] | transcript}
std::map<std::string, TranscriptSet> read_transcripts(std::istream& in);
std::map<std::string, TranscriptSet> read_transcripts(const std::string& path);
void write_transcripts(std::ostream& out, const TranscriptSet& t);

// JSON lines: {meeting_id, tags:[...], device, track}
std::vector<MeetingMetadata> read_metadata(const std::string& path);

void write_report_json(const std::string& path, const ScoreReport& report);
// Per-meeting rows and per-vertical rows as two CSV files.
void write_meetings_csv(const std::string& path, const ScoreReport& report);
void write_verticals_csv(const std::string& path, const std::vector<VerticalRow>& rows);
ScoreReport read_report_json(const std::string& path);
// Bar chart of mean tcpWER and speaker-agnostic WER per vertical with CI whiskers.
void write_verticals_svg(const std::string& path, const std::vector<VerticalRow>& rows);

}  // namespace dasr

#endif  // DASR_SCORING_HPP
