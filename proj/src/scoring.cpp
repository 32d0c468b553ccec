// Copyright 2026 The dasr Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dasr/scoring.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

namespace dasr {

using nlohmann::json;

namespace {

bool word_char(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

}  // namespace

std::vector<std::string> normalize_text(const std::string& text) {
  std::string clean(text.size(), ' ');
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (word_char(c)) {
      clean[i] = c < 0x80 ? static_cast<char>(std::tolower(c)) : text[i];
    } else if ((c == '\'' || c == '-') && i > 0 && i + 1 < text.size() &&
               word_char(static_cast<unsigned char>(text[i - 1])) &&
               word_char(static_cast<unsigned char>(text[i + 1]))) {
      clean[i] = text[i];
    }
  }
  std::vector<std::string> tokens;
  std::istringstream in(clean);
  for (std::string tok; in >> tok;) tokens.push_back(tok);
  return tokens;
}

namespace {

// Splits [start, end] among tokens in proportion to their byte length.
void interpolate(const std::vector<std::string>& tokens, double start, double end,
                 const std::string& speaker, std::vector<TimedWord>& out) {
  std::size_t total = 0;
  for (const auto& t : tokens) total += t.size();
  std::size_t before = 0;
  for (const auto& t : tokens) {
    const double a = start + (end - start) * double(before) / double(total);
    before += t.size();
    const double b = start + (end - start) * double(before) / double(total);
    out.push_back({t, a, b, speaker});
  }
}

}  // namespace

std::vector<TimedWord> normalize_and_tokenize(const SegmentAnnotation& segment) {
  std::vector<TimedWord> out;
  if (segment.words) {
    for (const auto& w : *segment.words)
      interpolate(normalize_text(w.text), w.start_s, w.end_s, segment.speaker, out);
  } else {
    interpolate(normalize_text(segment.transcript), segment.start_s, segment.end_s,
                segment.speaker, out);
  }
  return out;
}

ErrorCounts tc_word_distance(const std::vector<TimedWord>& hyp, const std::vector<TimedWord>& ref,
                             double collar_s) {
  struct Cell {
    std::int64_t cost;
    ErrorCounts counts;
  };
  const std::size_t m = hyp.size();
  std::vector<Cell> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j)
    prev[j] = {std::int64_t(j), {0, 0, std::int64_t(j)}};
  for (std::size_t i = 1; i <= ref.size(); ++i) {
    cur[0] = {std::int64_t(i), {0, std::int64_t(i), 0}};
    for (std::size_t j = 1; j <= m; ++j) {
      // Preference on equal cost: diagonal, deletion, insertion.
      Cell best{std::numeric_limits<std::int64_t>::max(), {}};
      if (admissible(hyp[j - 1], ref[i - 1], collar_s)) {
        const bool sub = hyp[j - 1].text != ref[i - 1].text;
        best = prev[j - 1];
        best.cost += sub;
        best.counts.substitutions += sub;
      }
      if (prev[j].cost + 1 < best.cost) {
        best = prev[j];
        ++best.cost;
        ++best.counts.deletions;
      }
      if (cur[j - 1].cost + 1 < best.cost) {
        best = cur[j - 1];
        ++best.cost;
        ++best.counts.insertions;
      }
      cur[j] = best;
    }
    std::swap(prev, cur);
  }
  return prev[m].counts;
}

std::vector<int> min_cost_assignment(const Eigen::MatrixXd& cost) {
  if (cost.rows() != cost.cols()) throw InvalidInput("assignment needs a square cost matrix");
  const int n = static_cast<int>(cost.rows());
  if (n == 0) return {};
  if (!cost.allFinite()) throw InvalidInput("assignment costs must be finite");
  const double inf = std::numeric_limits<double>::infinity();
  // Potentials method, 1-based with a virtual column 0.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double c = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (c < minv[j]) {
          minv[j] = c;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> result(n, -1);
  for (int j = 1; j <= n; ++j) result[p[j] - 1] = j - 1;
  return result;
}

double WerResult::rate_or_throw() const {
  if (!rate) throw InvalidInput("error rate undefined: the reference has no words");
  return *rate;
}

namespace {

void finish(WerResult& r) {
  if (r.reference_words > 0) r.rate = double(r.counts.total()) / double(r.reference_words);
}

void sort_words(std::vector<TimedWord>& w) {
  std::stable_sort(w.begin(), w.end(), [](const TimedWord& a, const TimedWord& b) {
    if (a.start_s != b.start_s) return a.start_s < b.start_s;
    return a.text < b.text;
  });
}

}  // namespace

std::map<std::string, std::vector<TimedWord>> speaker_words(const TranscriptSet& t) {
  std::map<std::string, std::vector<TimedWord>> out;
  for (const auto& seg : t.segments) {
    auto& list = out[seg.speaker];
    for (auto& w : normalize_and_tokenize(seg)) list.push_back(std::move(w));
  }
  for (auto& [spk, list] : out) sort_words(list);
  return out;
}

TcpWerResult tcpwer(const TranscriptSet& hyp, const TranscriptSet& ref, double collar_s) {
  const auto h = speaker_words(hyp);
  const auto r = speaker_words(ref);
  std::vector<const std::string*> h_names, r_names;
  std::vector<const std::vector<TimedWord>*> h_lists, r_lists;
  for (const auto& [k, v] : h) {
    h_names.push_back(&k);
    h_lists.push_back(&v);
  }
  for (const auto& [k, v] : r) {
    r_names.push_back(&k);
    r_lists.push_back(&v);
  }
  const std::size_t n = std::max(h_lists.size(), r_lists.size());
  static const std::vector<TimedWord> kEmpty;
  auto hyp_at = [&](std::size_t a) -> const std::vector<TimedWord>& {
    return a < h_lists.size() ? *h_lists[a] : kEmpty;
  };
  auto ref_at = [&](std::size_t b) -> const std::vector<TimedWord>& {
    return b < r_lists.size() ? *r_lists[b] : kEmpty;
  };

  std::vector<ErrorCounts> pair_counts(n * n);
  Eigen::MatrixXd cost(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b) {
      pair_counts[a * n + b] = tc_word_distance(hyp_at(a), ref_at(b), collar_s);
      cost(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
          double(pair_counts[a * n + b].total());
    }

  TcpWerResult result;
  const std::vector<int> assign = min_cost_assignment(cost);
  for (std::size_t a = 0; a < n; ++a) {
    const auto b = static_cast<std::size_t>(assign[a]);
    result.counts += pair_counts[a * n + b];
    SpeakerPair pair;
    if (a < h_names.size()) pair.hypothesis = *h_names[a];
    if (b < r_names.size()) pair.reference = *r_names[b];
    result.mapping.push_back(pair);
  }
  for (const auto* l : h_lists) result.hypothesis_words += std::int64_t(l->size());
  for (const auto* l : r_lists) result.reference_words += std::int64_t(l->size());
  finish(result);
  return result;
}

WerResult speaker_agnostic_wer(const TranscriptSet& hyp, const TranscriptSet& ref,
                               double collar_s) {
  auto pool = [](const TranscriptSet& t) {
    std::vector<TimedWord> all;
    for (const auto& seg : t.segments)
      for (auto& w : normalize_and_tokenize(seg)) all.push_back(std::move(w));
    sort_words(all);
    return all;
  };
  const auto h = pool(hyp);
  const auto r = pool(ref);
  WerResult result;
  result.counts = tc_word_distance(h, r, collar_s);
  result.hypothesis_words = std::int64_t(h.size());
  result.reference_words = std::int64_t(r.size());
  finish(result);
  return result;
}

ConfidenceInterval confidence_interval(const std::vector<double>& rates,
                                       const BootstrapOptions& opts) {
  if (rates.size() < 2) throw InvalidInput("a confidence interval needs at least two meetings");
  if (!(opts.level > 0.0 && opts.level < 1.0)) throw InvalidInput("level must be in (0, 1)");
  if (opts.resamples < 1) throw InvalidInput("resamples must be positive");
  const std::size_t n = rates.size();
  std::mt19937_64 rng(opts.seed);
  std::vector<double> means(static_cast<std::size_t>(opts.resamples));
  for (auto& m : means) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += rates[uniform_index(rng, n)];
    m = sum / double(n);
  }
  const double tail = 0.5 * (1.0 - opts.level);
  std::sort(means.begin(), means.end());
  ConfidenceInterval ci;
  ci.low = percentile(means, tail);
  ci.high = percentile(means, 1.0 - tail);
  ci.mean = std::accumulate(rates.begin(), rates.end(), 0.0) / double(n);
  return ci;
}

ConfidenceInterval relative_ci(const std::map<std::string, double>& system_rates,
                               const std::map<std::string, double>& baseline_rates,
                               const BootstrapOptions& opts) {
  if (system_rates.size() != baseline_rates.size())
    throw InvalidInput("system and baseline cover different meetings");
  std::vector<double> diffs;
  for (const auto& [id, rate] : system_rates) {
    const auto it = baseline_rates.find(id);
    if (it == baseline_rates.end()) throw InvalidInput("meeting " + id + " has no baseline score");
    diffs.push_back(rate - it->second);
  }
  return confidence_interval(diffs, opts);
}

namespace {

RateSummary summarize(const std::vector<double>& rates, const BootstrapOptions& opts) {
  RateSummary s;
  s.meetings = std::int64_t(rates.size());
  if (!rates.empty()) s.mean = std::accumulate(rates.begin(), rates.end(), 0.0) / double(rates.size());
  if (rates.size() >= 2) s.ci = confidence_interval(rates, opts);
  return s;
}

VerticalRow make_row(const std::string& tag, const std::vector<const MeetingScore*>& members,
                     const BootstrapOptions& opts) {
  std::vector<double> tcp, agn;
  for (const auto* m : members) {
    if (m->tcpwer.rate) tcp.push_back(*m->tcpwer.rate);
    if (m->agnostic.rate) agn.push_back(*m->agnostic.rate);
  }
  return {tag, summarize(tcp, opts), summarize(agn, opts)};
}

}  // namespace

std::vector<VerticalRow> vertical_breakdown(const std::vector<MeetingScore>& scores,
                                            const std::vector<MeetingMetadata>& metadata,
                                            const BootstrapOptions& opts) {
  std::map<std::string, const MeetingMetadata*> by_id;
  for (const auto& m : metadata) by_id[m.meeting_id] = &m;
  std::map<std::string, std::vector<const MeetingScore*>> by_tag;
  std::vector<const MeetingScore*> all;
  for (const auto& s : scores) {
    all.push_back(&s);
    const auto it = by_id.find(s.meeting_id);
    if (it == by_id.end()) continue;
    for (const auto& tag : it->second->tags) by_tag[tag].push_back(&s);
  }
  std::vector<VerticalRow> rows;
  for (const auto& [tag, members] : by_tag) rows.push_back(make_row(tag, members, opts));
  rows.push_back(make_row("all", all, opts));
  return rows;
}

ScoreReport score_meetings(const std::map<std::string, TranscriptSet>& hyp,
                           const std::map<std::string, TranscriptSet>& ref,
                           const std::vector<MeetingMetadata>& metadata,
                           const ScoringConfig& cfg) {
  ScoreReport report;
  report.collar_s = cfg.collar_s;
  for (const auto& [id, h] : hyp)
    if (!ref.count(id)) warn("hypothesis for meeting " + id + " has no reference; skipped");
  for (const auto& [id, r] : ref) {
    const auto it = hyp.find(id);
    const TranscriptSet empty{id, {}};
    const TranscriptSet& h = it == hyp.end() ? empty : it->second;
    report.meetings.push_back({id, tcpwer(h, r, cfg.collar_s), speaker_agnostic_wer(h, r, cfg.collar_s)});
  }
  report.verticals = vertical_breakdown(report.meetings, metadata, cfg.bootstrap);
  return report;
}

// ---- I/O ----

namespace {

std::string speaker_string(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  throw InvalidInput("speaker must be a string or an integer");
}

SegmentAnnotation parse_segment(const json& j) {
  SegmentAnnotation s;
  s.start_s = j.at("start_s").get<double>();
  s.end_s = j.at("end_s").get<double>();
  s.speaker = speaker_string(j.at("speaker"));
  if (!(s.start_s < s.end_s)) throw InvalidInput("segment must satisfy start_s < end_s");
  if (j.contains("words")) {
    std::vector<WordTiming> words;
    for (const auto& w : j.at("words"))
      words.push_back({w.at("text").get<std::string>(), w.at("start_s").get<double>(),
                       w.at("end_s").get<double>()});
    s.words = std::move(words);
  }
  s.transcript = j.value("transcript", "");
  return s;
}

}  // namespace

std::map<std::string, TranscriptSet> read_transcripts(std::istream& in) {
  std::map<std::string, TranscriptSet> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      const std::string id = j.at("meeting_id").get<std::string>();
      auto& set = out[id];
      set.meeting_id = id;
      set.segments.push_back(parse_segment(j));
    } catch (const json::exception& e) {
      throw IoError("transcript line " + std::to_string(line_no) + ": " + e.what());
    } catch (const InvalidInput& e) {
      throw IoError("transcript line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::map<std::string, TranscriptSet> read_transcripts(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return read_transcripts(in);
}

void write_transcripts(std::ostream& out, const TranscriptSet& t) {
  for (const auto& s : t.segments) {
    json j = {{"meeting_id", t.meeting_id},
              {"start_s", s.start_s},
              {"end_s", s.end_s},
              {"speaker", s.speaker}};
    if (s.words) {
      j["words"] = json::array();
      for (const auto& w : *s.words)
        j["words"].push_back({{"text", w.text}, {"start_s", w.start_s}, {"end_s", w.end_s}});
    } else {
      j["transcript"] = s.transcript;
    }
    out << j.dump() << '\n';
  }
}

std::vector<MeetingMetadata> read_metadata(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<MeetingMetadata> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      MeetingMetadata m;
      m.meeting_id = j.at("meeting_id").get<std::string>();
      if (j.contains("tags")) m.tags = j["tags"].get<std::set<std::string>>();
      m.device = j.value("device", "");
      m.track = j.value("track", "");
      out.push_back(std::move(m));
    } catch (const json::exception& e) {
      throw IoError(path + ": " + e.what());
    }
  }
  return out;
}

namespace {

json counts_json(const WerResult& r) {
  json j = {{"substitutions", r.counts.substitutions},
            {"deletions", r.counts.deletions},
            {"insertions", r.counts.insertions},
            {"reference_words", r.reference_words},
            {"hypothesis_words", r.hypothesis_words}};
  j["rate"] = r.rate ? json(*r.rate) : json(nullptr);
  return j;
}

void counts_from_json(const json& j, WerResult& r) {
  r.counts = {j.at("substitutions").get<std::int64_t>(), j.at("deletions").get<std::int64_t>(),
              j.at("insertions").get<std::int64_t>()};
  r.reference_words = j.at("reference_words").get<std::int64_t>();
  r.hypothesis_words = j.at("hypothesis_words").get<std::int64_t>();
  if (!j.at("rate").is_null()) r.rate = j["rate"].get<double>();
}

json summary_json(const RateSummary& s) {
  json j = {{"meetings", s.meetings}, {"mean", s.meetings > 0 ? json(s.mean) : json(nullptr)}};
  j["ci"] = s.ci ? json{{"low", s.ci->low}, {"high", s.ci->high}} : json(nullptr);
  return j;
}

RateSummary summary_from_json(const json& j) {
  RateSummary s;
  s.meetings = j.at("meetings").get<std::int64_t>();
  if (!j.at("mean").is_null()) s.mean = j["mean"].get<double>();
  if (!j.at("ci").is_null())
    s.ci = ConfidenceInterval{j["ci"].at("low").get<double>(), j["ci"].at("high").get<double>(), s.mean};
  return s;
}

std::string csv_number(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream o;
  o << std::setprecision(10) << *v;
  return o.str();
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  return out;
}

}  // namespace

void write_report_json(const std::string& path, const ScoreReport& report) {
  json j;
  j["collar_s"] = report.collar_s;
  j["meetings"] = json::array();
  for (const auto& m : report.meetings) {
    json mapping = json::array();
    for (const auto& p : m.tcpwer.mapping)
      mapping.push_back({p.hypothesis ? json(*p.hypothesis) : json(nullptr),
                         p.reference ? json(*p.reference) : json(nullptr)});
    json tcp = counts_json(m.tcpwer);
    tcp["mapping"] = mapping;
    j["meetings"].push_back(
        {{"meeting_id", m.meeting_id}, {"tcpwer", tcp}, {"speaker_agnostic", counts_json(m.agnostic)}});
  }
  j["verticals"] = json::array();
  for (const auto& r : report.verticals)
    j["verticals"].push_back(
        {{"tag", r.tag}, {"tcpwer", summary_json(r.tcpwer)}, {"speaker_agnostic", summary_json(r.agnostic)}});
  j["failures"] = json::array();
  for (const auto& f : report.failures)
    j["failures"].push_back({{"meeting_id", f.meeting_id}, {"reason", f.reason}});
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

ScoreReport read_report_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  try {
    const json j = json::parse(in);
    ScoreReport r;
    r.collar_s = j.value("collar_s", kDefaultCollar);
    for (const auto& m : j.at("meetings")) {
      MeetingScore s;
      s.meeting_id = m.at("meeting_id").get<std::string>();
      counts_from_json(m.at("tcpwer"), s.tcpwer);
      for (const auto& p : m["tcpwer"].value("mapping", json::array())) {
        SpeakerPair pair;
        if (!p.at(0).is_null()) pair.hypothesis = p[0].get<std::string>();
        if (!p.at(1).is_null()) pair.reference = p[1].get<std::string>();
        s.tcpwer.mapping.push_back(pair);
      }
      counts_from_json(m.at("speaker_agnostic"), s.agnostic);
      r.meetings.push_back(std::move(s));
    }
    for (const auto& v : j.value("verticals", json::array()))
      r.verticals.push_back({v.at("tag").get<std::string>(), summary_from_json(v.at("tcpwer")),
                             summary_from_json(v.at("speaker_agnostic"))});
    for (const auto& f : j.value("failures", json::array()))
      r.failures.push_back({f.at("meeting_id").get<std::string>(), f.at("reason").get<std::string>()});
    return r;
  } catch (const json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
}

void write_meetings_csv(const std::string& path, const ScoreReport& report) {
  auto out = open_out(path);
  out << "meeting_id,tcpwer,tcp_substitutions,tcp_deletions,tcp_insertions,reference_words,"
         "hypothesis_words,speaker_agnostic_wer,agn_substitutions,agn_deletions,agn_insertions\n";
  for (const auto& m : report.meetings) {
    const auto& t = m.tcpwer;
    const auto& a = m.agnostic;
    out << csv_field(m.meeting_id) << ',' << csv_number(t.rate) << ',' << t.counts.substitutions
        << ',' << t.counts.deletions << ',' << t.counts.insertions << ',' << t.reference_words
        << ',' << t.hypothesis_words << ',' << csv_number(a.rate) << ',' << a.counts.substitutions
        << ',' << a.counts.deletions << ',' << a.counts.insertions << '\n';
  }
}

void write_verticals_csv(const std::string& path, const std::vector<VerticalRow>& rows) {
  auto out = open_out(path);
  out << "tag,meetings,tcpwer_mean,tcpwer_ci_low,tcpwer_ci_high,"
         "speaker_agnostic_mean,speaker_agnostic_ci_low,speaker_agnostic_ci_high\n";
  auto cells = [](const RateSummary& s) {
    const auto mean = s.meetings > 0 ? std::optional<double>(s.mean) : std::nullopt;
    const auto lo = s.ci ? std::optional<double>(s.ci->low) : std::nullopt;
    const auto hi = s.ci ? std::optional<double>(s.ci->high) : std::nullopt;
    return csv_number(mean) + ',' + csv_number(lo) + ',' + csv_number(hi);
  };
  for (const auto& r : rows)
    out << csv_field(r.tag) << ',' << r.tcpwer.meetings << ',' << cells(r.tcpwer) << ','
        << cells(r.agnostic) << '\n';
}

void write_verticals_svg(const std::string& path, const std::vector<VerticalRow>& rows) {
  const double group = 90.0, bar = 30.0, left = 60.0, top = 30.0, plot_h = 220.0;
  const double width = left + group * double(rows.size()) + 20.0;
  double vmax = 0.0;
  for (const auto& r : rows)
    for (const RateSummary* s : {&r.tcpwer, &r.agnostic}) {
      vmax = std::max(vmax, s->mean);
      if (s->ci) vmax = std::max(vmax, s->ci->high);
    }
  vmax = vmax > 0.0 ? vmax * 1.1 : 1.0;
  auto y = [&](double v) { return top + plot_h * (1.0 - v / vmax); };

  std::ostringstream svg;
  svg << std::fixed << std::setprecision(2);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << top + plot_h + 60.0 << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\""
      << top + plot_h << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << width - 10.0
      << "\" y2=\"" << top + plot_h << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = vmax * t / 4.0;
    svg << "<text x=\"" << left - 6.0 << "\" y=\"" << y(v) + 4.0 << "\" text-anchor=\"end\">"
        << std::setprecision(3) << v << std::setprecision(2) << "</text>\n";
  }
  svg << "<rect x=\"" << left + 10.0 << "\" y=\"8\" width=\"10\" height=\"10\" fill=\"#4878a8\"/>"
      << "<text x=\"" << left + 24.0 << "\" y=\"17\">tcpWER</text>\n";
  svg << "<rect x=\"" << left + 90.0 << "\" y=\"8\" width=\"10\" height=\"10\" fill=\"#e08040\"/>"
      << "<text x=\"" << left + 104.0 << "\" y=\"17\">speaker-agnostic WER</text>\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double x0 = left + group * double(i) + 10.0;
    const RateSummary* sums[2] = {&rows[i].tcpwer, &rows[i].agnostic};
    const char* colors[2] = {"#4878a8", "#e08040"};
    for (int k = 0; k < 2; ++k) {
      const double x = x0 + bar * k;
      svg << "<rect x=\"" << x << "\" y=\"" << y(sums[k]->mean) << "\" width=\"" << bar - 4.0
          << "\" height=\"" << top + plot_h - y(sums[k]->mean) << "\" fill=\"" << colors[k]
          << "\"/>\n";
      if (sums[k]->ci) {
        const double cx = x + (bar - 4.0) / 2.0;
        svg << "<line x1=\"" << cx << "\" y1=\"" << y(sums[k]->ci->low) << "\" x2=\"" << cx
            << "\" y2=\"" << y(sums[k]->ci->high) << "\" stroke=\"black\"/>\n";
      }
    }
    svg << "<text x=\"" << x0 + bar - 2.0 << "\" y=\"" << top + plot_h + 16.0
        << "\" text-anchor=\"middle\">" << xml_escape(rows[i].tag) << "</text>\n";
    svg << "<text x=\"" << x0 + bar - 2.0 << "\" y=\"" << top + plot_h + 30.0
        << "\" text-anchor=\"middle\">n=" << rows[i].tcpwer.meetings << "</text>\n";
  }
  svg << "</svg>\n";
  auto out = open_out(path);
  out << svg.str();
}

}  // namespace dasr
