// Copyright 2026 The dasr Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dasr/diarization.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <random>
#include <sstream>

#include <json.hpp>

namespace dasr {

namespace {

constexpr Index kEmbedBins = 128;  // 31.25 Hz .. 4 kHz at 512-point frames

Index to_samples(double seconds, int rate) {
  return static_cast<Index>(std::llround(seconds * rate));
}

}  // namespace

Index SpectralEmbedder::dimension() const { return kEmbedBins; }

Vector<double> SpectralEmbedder::embed(const Waveform& window) const {
  const StftConfig cfg;
  Waveform mono = window.channel(0);
  if (mono.num_samples() < cfg.window_length) {
    Waveform padded = Waveform::zeros(1, cfg.window_length, window.sample_rate);
    padded.samples.leftCols(mono.num_samples()) = mono.samples;
    mono = std::move(padded);
  }
  const Matrix<double> mag = stft(mono, cfg).magnitude(0);
  const Vector<double> power = mag.array().square().colwise().mean().transpose();
  const Vector<double> band = power.segment(1, kEmbedBins);
  const double floor = 1e-6 * band.maxCoeff() + std::numeric_limits<double>::min();
  Vector<double> v = (band.array() + floor).log().matrix();
  v.array() -= v.mean();
  const double norm = v.norm();
  if (!(norm > 0.0)) {
    v.setZero();
    v(0) = 1.0;
    return v;
  }
  return v / norm;
}

std::vector<TimeInterval> detect_speech_activity(const Waveform& stream,
                                                 const ActivityOptions& opts) {
  validate(stream);
  if (opts.frame_ms <= 0.0 || opts.hop_ms <= 0.0 || opts.hangover_ms < 0.0)
    throw InvalidInput("activity detection needs positive frame and hop lengths");
  const int fs = stream.sample_rate;
  const Index frame = std::max<Index>(1, to_samples(opts.frame_ms / 1000.0, fs));
  const Index hop = std::max<Index>(1, to_samples(opts.hop_ms / 1000.0, fs));
  const Index n = stream.num_samples();
  if (n == 0) return {};
  const Index frames = n < frame ? 1 : (n - frame) / hop + 1;
  const auto x = stream.samples.row(0);

  std::vector<double> power(static_cast<std::size_t>(frames));
  double peak = 0.0;
  for (Index t = 0; t < frames; ++t) {
    const Index len = std::min(frame, n - t * hop);
    power[static_cast<std::size_t>(t)] = x.segment(t * hop, len).squaredNorm() / double(len);
    peak = std::max(peak, power[static_cast<std::size_t>(t)]);
  }
  if (!(peak > 0.0)) return {};
  const double threshold = peak * std::pow(10.0, opts.threshold_db / 10.0);
  const Index hang = static_cast<Index>(std::ceil(opts.hangover_ms / opts.hop_ms - 1e-9));

  std::vector<bool> active(static_cast<std::size_t>(frames), false);
  Index remaining = 0;
  for (Index t = 0; t < frames; ++t) {
    if (power[static_cast<std::size_t>(t)] >= threshold) {
      active[static_cast<std::size_t>(t)] = true;
      remaining = hang;
    } else if (remaining > 0) {
      active[static_cast<std::size_t>(t)] = true;
      --remaining;
    }
  }

  std::vector<TimeInterval> out;
  for (Index t = 0; t < frames;) {
    if (!active[static_cast<std::size_t>(t)]) {
      ++t;
      continue;
    }
    Index end = t;
    while (end + 1 < frames && active[static_cast<std::size_t>(end + 1)]) ++end;
    out.push_back({double(t * hop) / fs, double(std::min(n, end * hop + frame)) / fs});
    t = end + 1;
  }
  return out;
}

std::vector<WindowEmbedding> window_embeddings(const Waveform& stream,
                                               const SpeakerEmbedder& embedder,
                                               double window_s, double hop_s,
                                               const std::vector<TimeInterval>& activity) {
  if (!(hop_s > 0.0) || window_s < hop_s)
    throw InvalidInput("window embeddings need window_s >= hop_s > 0");
  validate(stream);
  const int fs = stream.sample_rate;
  const Index n = stream.num_samples();
  const Index win = to_samples(window_s, fs);
  const Index hop = std::max<Index>(1, to_samples(hop_s, fs));
  if (activity.empty() || n == 0) return {};

  std::vector<std::pair<Index, Index>> spans;
  if (n < win) {
    spans.push_back({0, n});
  } else {
    for (Index s = 0; s + win <= n; s += hop) spans.push_back({s, win});
  }

  std::vector<WindowEmbedding> out;
  for (const auto& [start, len] : spans) {
    const TimeInterval iv{double(start) / fs, double(start + len) / fs};
    bool intersects = false;
    for (const auto& a : activity) intersects = intersects || overlap(iv, a) > 0.0;
    if (!intersects) continue;
    Waveform w;
    w.samples = stream.samples.middleCols(start, len);
    w.sample_rate = fs;
    Vector<double> v = embedder.embed(w);
    if (v.size() != embedder.dimension())
      throw InvalidInput("embedder returned a vector of the wrong dimension");
    const double norm = v.norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) throw InvalidInput("embedder returned a zero vector");
    if (std::abs(norm - 1.0) > 1e-6) v /= norm;
    out.push_back({iv, std::move(v)});
  }
  return out;
}

namespace {

// Rows hold points. Returns the labels minimizing within-cluster squared
// distance over seeded k-means++ restarts.
std::vector<int> kmeans(const Matrix<double>& x, int k, std::uint64_t seed, int restarts) {
  const Index n = x.rows();
  std::vector<int> best;
  double best_inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(1, restarts); ++r) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
    Matrix<double> centers(k, x.cols());
    centers.row(0) = x.row(static_cast<Index>(uniform_index(rng, static_cast<std::size_t>(n))));
    Vector<double> d2 = (x.rowwise() - centers.row(0)).rowwise().squaredNorm();
    for (int c = 1; c < k; ++c) {
      const double total = d2.sum();
      Index pick = 0;
      if (total > 0.0) {
        double u = uniform01(rng) * total;
        pick = n - 1;
        for (Index i = 0; i < n; ++i) {
          u -= d2(i);
          if (u < 0.0) {
            pick = i;
            break;
          }
        }
      } else {
        pick = static_cast<Index>(uniform_index(rng, static_cast<std::size_t>(n)));
      }
      centers.row(c) = x.row(pick);
      d2 = d2.cwiseMin((x.rowwise() - centers.row(c)).rowwise().squaredNorm());
    }

    std::vector<int> labels(static_cast<std::size_t>(n), -1);
    double inertia = 0.0;
    for (int iter = 0; iter < 300; ++iter) {
      bool changed = false;
      inertia = 0.0;
      for (Index i = 0; i < n; ++i) {
        int arg = 0;
        double dmin = std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) {
          const double d = (x.row(i) - centers.row(c)).squaredNorm();
          if (d < dmin) {
            dmin = d;
            arg = c;
          }
        }
        inertia += dmin;
        if (labels[static_cast<std::size_t>(i)] != arg) {
          labels[static_cast<std::size_t>(i)] = arg;
          changed = true;
        }
      }
      if (!changed) break;
      for (int c = 0; c < k; ++c) {
        Vector<double> sum = Vector<double>::Zero(x.cols());
        Index count = 0;
        for (Index i = 0; i < n; ++i)
          if (labels[static_cast<std::size_t>(i)] == c) {
            sum += x.row(i).transpose();
            ++count;
          }
        if (count > 0) centers.row(c) = (sum / double(count)).transpose();
      }
    }
    if (inertia < best_inertia) {
      best_inertia = inertia;
      best = labels;
    }
  }
  return best;
}

std::vector<int> canonical_labels(const std::vector<int>& raw) {
  std::map<int, int> remap;
  std::vector<int> out;
  out.reserve(raw.size());
  for (int l : raw) {
    auto it = remap.find(l);
    if (it == remap.end()) it = remap.emplace(l, static_cast<int>(remap.size())).first;
    out.push_back(it->second);
  }
  return out;
}

Matrix<double> normalized_laplacian(const Matrix<double>& affinity, Index p) {
  const Index n = affinity.rows();
  Matrix<double> b = Matrix<double>::Zero(n, n);
  std::vector<double> row(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) row[static_cast<std::size_t>(j)] = affinity(i, j);
    std::nth_element(row.begin(), row.begin() + (p - 1), row.end(), std::greater<double>());
    // Ties with the p-th largest value are kept; the tolerance absorbs
    // rounding between entries that are equal in exact arithmetic.
    const double cut = row[static_cast<std::size_t>(p - 1)] - 1e-12;
    for (Index j = 0; j < n; ++j) b(i, j) = affinity(i, j) >= cut ? 1.0 : 0.0;
  }
  b = b.cwiseMax(b.transpose());
  const Vector<double> inv_sqrt = b.rowwise().sum().array().rsqrt().matrix();
  return Matrix<double>::Identity(n, n) - inv_sqrt.asDiagonal() * b * inv_sqrt.asDiagonal();
}

}  // namespace

NmeScResult nme_sc_cluster(const Matrix<double>& embeddings, const NmeScOptions& opts) {
  if (opts.max_speakers < 1) throw InvalidInput("max_speakers must be at least 1");
  if (opts.p_min < 1 || opts.p_max < opts.p_min) throw InvalidInput("invalid p range");
  if (!embeddings.allFinite()) throw InvalidInput("embeddings contain non-finite values");
  const Index n = embeddings.rows();
  NmeScResult result;
  result.labels.assign(static_cast<std::size_t>(n), 0);
  if (n < 2) return result;

  Matrix<double> x = embeddings;
  for (Index i = 0; i < n; ++i) {
    const double norm = x.row(i).norm();
    if (norm > 0.0) x.row(i) /= norm;
  }
  const Matrix<double> affinity = x * x.transpose();

  const Index p_hi = std::min(opts.p_max, n - 1);
  const Index p_lo = std::min(opts.p_min, p_hi);
  const Index k_max = std::min(opts.max_speakers, n - 1);
  double best_ratio = std::numeric_limits<double>::infinity();
  Index best_p = p_lo;
  Index best_k = 1;
  for (Index p = p_lo; p <= p_hi; ++p) {
    Eigen::SelfAdjointEigenSolver<Matrix<double>> es(normalized_laplacian(affinity, p),
                                                     Eigen::EigenvaluesOnly);
    const Vector<double>& lambda = es.eigenvalues();
    double max_gap = -1.0;
    Index arg = 1;
    for (Index k = 1; k <= k_max; ++k) {
      const double g = lambda(k) - lambda(k - 1);
      if (g > max_gap) {
        max_gap = g;
        arg = k;
      }
    }
    const double ratio =
        max_gap > 0.0 ? double(p) / max_gap : std::numeric_limits<double>::infinity();
    if (ratio < best_ratio) {
      best_ratio = ratio;
      best_p = p;
      best_k = arg;
    }
  }
  result.p = best_p;
  result.num_speakers = static_cast<int>(best_k);
  if (best_k == 1) return result;

  Eigen::SelfAdjointEigenSolver<Matrix<double>> es(normalized_laplacian(affinity, best_p));
  Matrix<double> u = es.eigenvectors().leftCols(best_k);
  for (Index i = 0; i < n; ++i) {
    const double norm = u.row(i).norm();
    if (norm > 0.0) u.row(i) /= norm;
  }
  result.labels = canonical_labels(
      kmeans(u, static_cast<int>(best_k), opts.seed, opts.kmeans_restarts));
  int distinct = 0;
  for (int l : result.labels) distinct = std::max(distinct, l + 1);
  result.num_speakers = distinct;
  return result;
}

NmeScResult nme_sc_cluster(const std::vector<Vector<double>>& embeddings,
                           const NmeScOptions& opts) {
  if (embeddings.empty()) return nme_sc_cluster(Matrix<double>(0, 0), opts);
  const Index dim = embeddings.front().size();
  Matrix<double> m(static_cast<Index>(embeddings.size()), dim);
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    if (embeddings[i].size() != dim) throw InvalidInput("embeddings differ in dimension");
    m.row(static_cast<Index>(i)) = embeddings[i].transpose();
  }
  return nme_sc_cluster(m, opts);
}

StreamDiarization intervals_from_labels(const std::vector<LabeledWindow>& windows) {
  StreamDiarization out;
  const std::size_t n = windows.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& w = windows[i].interval;
    if (i > 0 && w.start_s < windows[i - 1].interval.start_s)
      throw InvalidInput("windows must be sorted by start time");
    double start = w.start_s;
    double end = w.end_s;
    if (i > 0 && w.start_s < windows[i - 1].interval.end_s)
      start = 0.5 * (w.start_s + windows[i - 1].interval.end_s);
    if (i + 1 < n && windows[i + 1].interval.start_s < w.end_s)
      end = 0.5 * (windows[i + 1].interval.start_s + w.end_s);
    if (!out.empty()) start = std::max(start, out.back().end_s);
    if (!(end > start)) continue;
    const int label = windows[i].label;
    if (!out.empty() && out.back().label == label && start <= out.back().end_s) {
      out.back().end_s = end;
    } else {
      out.push_back({start, end, label});
    }
  }
  return out;
}

DiarizationOutput diarize_streams(const std::vector<Waveform>& streams,
                                  const SpeakerEmbedder& embedder, const DiarizationConfig& cfg) {
  std::vector<std::vector<WindowEmbedding>> per_stream;
  std::vector<Vector<double>> pooled;
  for (const Waveform& s : streams) {
    per_stream.push_back(window_embeddings(s, embedder, cfg.window_s, cfg.hop_s,
                                           detect_speech_activity(s, cfg.activity)));
    for (const auto& w : per_stream.back()) pooled.push_back(w.vector);
  }
  const NmeScResult clusters = nme_sc_cluster(pooled, cfg.clustering);

  DiarizationOutput out;
  std::size_t next = 0;
  for (const auto& windows : per_stream) {
    std::vector<LabeledWindow> labeled;
    for (const auto& w : windows) labeled.push_back({w.interval, clusters.labels[next++]});
    out.streams.push_back(intervals_from_labels(labeled));
  }
  return out;
}

std::vector<AttributedWord> attribute_words(const std::vector<AsrWord>& words,
                                            const DiarizationOutput& diarization) {
  std::vector<AttributedWord> out;
  std::vector<bool> assigned(words.size(), false);
  out.reserve(words.size());
  for (std::size_t w = 0; w < words.size(); ++w) {
    const AsrWord& word = words[w];
    if (!std::isfinite(word.start_s) || !std::isfinite(word.end_s) || word.start_s > word.end_s)
      throw InvalidInput("word '" + word.text + "' has invalid time boundaries");
    if (word.stream < 0 || word.stream >= static_cast<Index>(diarization.streams.size()))
      throw InvalidInput("no diarization for stream " + std::to_string(word.stream));
    out.push_back({word.text, word.start_s, word.end_s, 0, word.stream, AttributionRule::kNearestWord});

    // Per label: total active time inside the word and its earliest turn.
    std::map<int, std::pair<double, double>> active;
    const TimeInterval span{word.start_s, word.end_s};
    for (const auto& turn : diarization.streams[static_cast<std::size_t>(word.stream)]) {
      const double ov = overlap(span, {turn.start_s, turn.end_s});
      const bool point_hit = span.duration() == 0.0 && turn.start_s <= word.start_s &&
                             word.start_s <= turn.end_s;
      if (!(ov > 0.0) && !point_hit) continue;
      auto [it, fresh] = active.emplace(turn.label, std::make_pair(0.0, turn.start_s));
      it->second.first += ov;
      if (!fresh) it->second.second = std::min(it->second.second, turn.start_s);
    }
    if (active.empty()) continue;
    auto best = active.begin();
    for (auto it = active.begin(); it != active.end(); ++it) {
      const bool longer = it->second.first > best->second.first;
      const bool tie_earlier =
          it->second.first == best->second.first && it->second.second < best->second.second;
      if (longer || tie_earlier) best = it;
    }
    out.back().speaker = best->first;
    out.back().rule =
        active.size() == 1 ? AttributionRule::kSingleActive : AttributionRule::kLongestOverlap;
    assigned[w] = true;
  }

  bool any = false;
  for (bool a : assigned) any = any || a;
  if (!any && !words.empty())
    throw Unattributable("no word overlaps an active speaker; cannot attribute by proximity");

  auto midpoint = [&](std::size_t i) { return 0.5 * (words[i].start_s + words[i].end_s); };
  for (std::size_t w = 0; w < words.size(); ++w) {
    if (assigned[w]) continue;
    const double mid = midpoint(w);
    auto nearest = [&](bool same_stream) -> std::ptrdiff_t {
      std::ptrdiff_t arg = -1;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t o = 0; o < words.size(); ++o) {
        if (!assigned[o]) continue;
        if (same_stream && words[o].stream != words[w].stream) continue;
        const double d = std::abs(midpoint(o) - mid);
        const bool earlier = arg >= 0 && d == best && midpoint(o) < midpoint(std::size_t(arg));
        if (d < best || earlier) {
          best = d;
          arg = static_cast<std::ptrdiff_t>(o);
        }
      }
      return arg;
    };
    std::ptrdiff_t src = nearest(true);
    if (src < 0) src = nearest(false);
    out[w].speaker = out[static_cast<std::size_t>(src)].speaker;
    out[w].rule = AttributionRule::kNearestWord;
  }
  return out;
}

std::string speaker_label(int label) { return "spk" + std::to_string(label); }

void write_rttm(std::ostream& out, const std::string& meeting_id, const DiarizationOutput& d) {
  std::ostringstream line;
  line << std::fixed << std::setprecision(3);
  for (std::size_t s = 0; s < d.streams.size(); ++s)
    for (const auto& t : d.streams[s]) {
      line.str("");
      line << "SPEAKER " << meeting_id << ' ' << s << ' ' << t.start_s << ' '
           << (t.end_s - t.start_s) << ' ' << speaker_label(t.label) << '\n';
      out << line.str();
    }
}

DiarizationOutput read_rttm(std::istream& in, const std::string& meeting_id) {
  DiarizationOutput d;
  std::map<std::string, int> names;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string kind, meeting, label;
    Index stream = 0;
    double start = 0.0, dur = 0.0;
    if (!(fields >> kind)) continue;
    if (kind != "SPEAKER" || !(fields >> meeting >> stream >> start >> dur >> label) || stream < 0)
      throw IoError("malformed diarization line " + std::to_string(line_no));
    if (meeting != meeting_id) continue;
    int id = 0;
    if (label.rfind("spk", 0) == 0 && label.size() > 3 &&
        label.find_first_not_of("0123456789", 3) == std::string::npos) {
      id = std::stoi(label.substr(3));
    } else {
      auto it = names.emplace(label, static_cast<int>(names.size())).first;
      id = it->second;
    }
    if (static_cast<Index>(d.streams.size()) <= stream)
      d.streams.resize(static_cast<std::size_t>(stream + 1));
    d.streams[static_cast<std::size_t>(stream)].push_back({start, start + dur, id});
  }
  return d;
}

void write_attributed_words(std::ostream& out, const std::vector<AttributedWord>& words) {
  for (const auto& w : words) {
    const nlohmann::json j = {{"word", w.text},
                              {"start", w.start_s},
                              {"end", w.end_s},
                              {"speaker", speaker_label(w.speaker)},
                              {"stream", w.stream}};
    out << j.dump() << '\n';
  }
}

}  // namespace dasr
