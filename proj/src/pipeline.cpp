// Copyright 2026 The dasr Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dasr/pipeline.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "dasr/wav.hpp"

namespace dasr {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Track t) {
  return t == Track::kSingleChannel ? "single-channel" : "multi-channel";
}

Track track_from_string(const std::string& s) {
  if (s == "sc" || s == "single-channel") return Track::kSingleChannel;
  if (s == "mc" || s == "multi-channel") return Track::kMultiChannel;
  throw ConfigError("unknown track '" + s + "' (expected sc or mc)");
}

void validate(const MeetingManifest& m) {
  if (m.meeting_id.empty()) throw ConfigError("manifest entry without meeting_id");
  for (const auto& d : m.devices) {
    const int expected = d.track == Track::kSingleChannel ? 1 : kArrayChannels;
    if (d.channels != expected)
      throw ConfigError(m.meeting_id + "/" + d.device_id + ": " + to_string(d.track) +
                        " devices have " + std::to_string(expected) + " channel(s), manifest says " +
                        std::to_string(d.channels));
    if (d.wav_paths.empty()) throw ConfigError(m.meeting_id + "/" + d.device_id + ": no audio");
    if (d.wav_paths.size() != 1 && static_cast<int>(d.wav_paths.size()) != d.channels)
      throw ConfigError(m.meeting_id + "/" + d.device_id +
                        ": give one multi-channel file or one file per channel");
  }
}

namespace {

std::string resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path.string() : (base / path).string();
}

}  // namespace

std::vector<MeetingManifest> read_manifests(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path);
  const fs::path base = fs::path(path).parent_path();
  std::vector<MeetingManifest> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      MeetingManifest m;
      m.meeting_id = j.at("meeting_id").get<std::string>();
      for (const auto& d : j.at("devices")) {
        DeviceEntry e;
        e.device_id = d.value("id", "");
        e.track = track_from_string(d.at("track").get<std::string>());
        e.channels = d.value("channels", e.track == Track::kSingleChannel ? 1 : kArrayChannels);
        if (d.contains("wav")) e.wav_paths.push_back(resolve(base, d["wav"].get<std::string>()));
        if (d.contains("wavs"))
          for (const auto& w : d["wavs"]) e.wav_paths.push_back(resolve(base, w.get<std::string>()));
        m.devices.push_back(std::move(e));
      }
      if (j.contains("reference")) m.reference_path = resolve(base, j["reference"].get<std::string>());
      if (j.contains("bundle")) m.bundle_dir = resolve(base, j["bundle"].get<std::string>());
      if (j.contains("metadata")) {
        const auto& md = j["metadata"];
        MeetingMetadata meta;
        meta.meeting_id = m.meeting_id;
        if (md.contains("tags")) meta.tags = md["tags"].get<std::set<std::string>>();
        meta.device = md.value("device", "");
        meta.track = md.value("track", "");
        m.metadata = std::move(meta);
      }
      validate(m);
      out.push_back(std::move(m));
    } catch (const json::exception& e) {
      throw IoError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

Waveform load_device_audio(const DeviceEntry& device) {
  Waveform audio;
  if (device.wav_paths.size() == 1) {
    audio = read_wav_16k(device.wav_paths.front());
  } else {
    std::vector<Waveform> parts;
    for (const auto& p : device.wav_paths) {
      parts.push_back(read_wav_16k(p));
      if (parts.back().channels() != 1) throw ConfigError(p + ": per-channel files must be mono");
      if (parts.back().num_samples() != parts.front().num_samples())
        throw ConfigError(p + ": per-channel files differ in length");
    }
    audio = Waveform::zeros(static_cast<Index>(parts.size()), parts.front().num_samples());
    for (std::size_t c = 0; c < parts.size(); ++c)
      audio.samples.row(static_cast<Index>(c)) = parts[c].samples.row(0);
  }
  if (audio.channels() != device.channels)
    throw ConfigError(device.device_id + ": " + to_string(device.track) + " device declares " +
                      std::to_string(device.channels) + " channel(s) but the audio has " +
                      std::to_string(audio.channels()));
  return audio;
}

std::string stream_fingerprint(const Waveform& stream) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](std::uint8_t b) {
    h ^= b;
    h *= 0x100000001b3ULL;
  };
  auto feed64 = [&](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) feed(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  feed64(static_cast<std::uint64_t>(stream.channels()));
  feed64(static_cast<std::uint64_t>(stream.num_samples()));
  for (Index c = 0; c < stream.channels(); ++c)
    for (Index t = 0; t < stream.num_samples(); ++t) {
      const double q = std::clamp(std::round(stream.samples(c, t) * 32768.0), -32768.0, 32767.0);
      const auto v = static_cast<std::uint16_t>(static_cast<std::int16_t>(q));
      feed(static_cast<std::uint8_t>(v & 0xff));
      feed(static_cast<std::uint8_t>(v >> 8));
    }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

MockAsr MockAsr::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open ASR script " + path);
  std::map<std::string, std::vector<WordTiming>> script;
  try {
    const json j = json::parse(in);
    for (const auto& [fp, words] : j.items())
      for (const auto& w : words)
        script[fp].push_back({w.at("text").get<std::string>(), w.at("start_s").get<double>(),
                              w.at("end_s").get<double>()});
  } catch (const json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
  return MockAsr(std::move(script));
}

std::vector<WordTiming> MockAsr::transcribe(const Waveform& stream) {
  const std::string fp = stream_fingerprint(stream);
  const auto it = script_.find(fp);
  if (it == script_.end()) {
    warn("mock ASR has no script for stream " + fp);
    return {};
  }
  return it->second;
}

void validate(PipelineConfig& cfg) {
  cfg.css.mode = cfg.track == Track::kSingleChannel ? CssMode::kSingleChannel : CssMode::kMultiChannel;
  validate(cfg.css);
  if (cfg.workers < 1) throw ConfigError("workers must be at least 1");
  if (cfg.segment_gap_s < 0.0) throw ConfigError("segment gap must be nonnegative");
  if (cfg.scoring.collar_s < 0.0) throw ConfigError("collar must be nonnegative");
  if (!(cfg.diarization.hop_s > 0.0) || cfg.diarization.window_s < cfg.diarization.hop_s)
    throw ConfigError("diarization needs window_s >= hop_s > 0");
  if (cfg.estimator == EstimatorKind::kExternal && cfg.estimator_endpoint.empty())
    throw ConfigError("external estimator selected without an endpoint");
}

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw ConfigError("unknown config key " + where + "." + k);
}

template <typename T>
void get(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j[key].get<T>();
}

}  // namespace

PipelineConfig parse_pipeline_config(const std::string& text) {
  PipelineConfig cfg;
  try {
    const json j = json::parse(text);
    check_keys(j,
               {"track", "css", "diarization", "scoring", "estimator", "estimator_endpoint", "asr",
                "asr_endpoint", "asr_script", "seed", "workers", "segment_gap_s", "output_dir"},
               "config");
    if (j.contains("track")) cfg.track = track_from_string(j["track"].get<std::string>());
    if (j.contains("css")) {
      const auto& c = j["css"];
      check_keys(c,
                 {"segment_frames", "overlap_frames", "num_streams", "diagonal_loading",
                  "ref_channel", "window_length", "hop_length", "window"},
                 "css");
      get(c, "segment_frames", cfg.css.segment_frames);
      get(c, "overlap_frames", cfg.css.overlap_frames);
      get(c, "num_streams", cfg.css.num_streams);
      get(c, "diagonal_loading", cfg.css.diagonal_loading);
      get(c, "ref_channel", cfg.css.ref_channel);
      get(c, "window_length", cfg.css.stft.window_length);
      get(c, "hop_length", cfg.css.stft.hop_length);
      if (c.contains("window")) cfg.css.stft.window = window_from_string(c["window"].get<std::string>());
    }
    if (j.contains("diarization")) {
      const auto& d = j["diarization"];
      check_keys(d,
                 {"window_s", "hop_s", "vad_threshold_db", "hangover_ms", "p_min", "p_max",
                  "max_speakers", "kmeans_restarts"},
                 "diarization");
      get(d, "window_s", cfg.diarization.window_s);
      get(d, "hop_s", cfg.diarization.hop_s);
      get(d, "vad_threshold_db", cfg.diarization.activity.threshold_db);
      get(d, "hangover_ms", cfg.diarization.activity.hangover_ms);
      get(d, "p_min", cfg.diarization.clustering.p_min);
      get(d, "p_max", cfg.diarization.clustering.p_max);
      get(d, "max_speakers", cfg.diarization.clustering.max_speakers);
      get(d, "kmeans_restarts", cfg.diarization.clustering.kmeans_restarts);
    }
    if (j.contains("scoring")) {
      const auto& s = j["scoring"];
      check_keys(s, {"collar_s", "confidence_level", "resamples", "bootstrap_seed"}, "scoring");
      get(s, "collar_s", cfg.scoring.collar_s);
      get(s, "confidence_level", cfg.scoring.bootstrap.level);
      get(s, "resamples", cfg.scoring.bootstrap.resamples);
      get(s, "bootstrap_seed", cfg.scoring.bootstrap.seed);
    }
    if (j.contains("estimator")) {
      const auto e = j["estimator"].get<std::string>();
      if (e == "oracle") cfg.estimator = EstimatorKind::kOracle;
      else if (e == "external") cfg.estimator = EstimatorKind::kExternal;
      else throw ConfigError("estimator must be oracle or external");
    }
    if (j.contains("asr")) {
      const auto a = j["asr"].get<std::string>();
      if (a == "mock") cfg.asr = AsrKind::kMock;
      else if (a == "external") cfg.asr = AsrKind::kExternal;
      else throw ConfigError("asr must be mock or external");
    }
    get(j, "estimator_endpoint", cfg.estimator_endpoint);
    get(j, "asr_endpoint", cfg.asr_endpoint);
    get(j, "asr_script", cfg.asr_script);
    get(j, "seed", cfg.seed);
    get(j, "workers", cfg.workers);
    get(j, "segment_gap_s", cfg.segment_gap_s);
    get(j, "output_dir", cfg.output_dir);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const InvalidInput& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  validate(cfg);
  return cfg;
}

PipelineConfig load_pipeline_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_pipeline_config(ss.str());
}

std::unique_ptr<AsrClient> make_asr_client(const PipelineConfig& cfg) {
  const char* env = std::getenv("DASR_ASR_ENDPOINT");
  if (env && *env) return std::make_unique<HttpAsrClient>(env);
  if (cfg.asr == AsrKind::kExternal) {
    if (cfg.asr_endpoint.empty())
      throw ConfigError("external ASR selected without asr_endpoint or DASR_ASR_ENDPOINT");
    return std::make_unique<HttpAsrClient>(cfg.asr_endpoint);
  }
  if (cfg.asr_script.empty()) return std::make_unique<MockAsr>();
  return std::make_unique<MockAsr>(MockAsr::from_file(cfg.asr_script));
}

std::unique_ptr<MaskEstimator> default_estimator(const MeetingManifest& m,
                                                 const PipelineConfig& cfg) {
  if (cfg.estimator == EstimatorKind::kExternal)
    return std::make_unique<HttpMaskEstimator>(cfg.estimator_endpoint, cfg.css.num_streams);
  if (!m.bundle_dir) throw ConfigError(m.meeting_id + ": the oracle estimator needs a bundle");
  const SupervisionBundle bundle = read_bundle(*m.bundle_dir);
  const Index ref = cfg.track == Track::kSingleChannel ? 0 : cfg.css.ref_channel;
  return std::make_unique<OracleIrmEstimator>(bundle, cfg.css.stft, cfg.css.num_streams, ref);
}

const DeviceEntry& select_device(const MeetingManifest& m, const PipelineConfig& cfg) {
  for (const auto& d : m.devices)
    if (d.track == cfg.track) return d;
  throw ConfigError(m.meeting_id + ": no " + to_string(cfg.track) + " device in the manifest");
}

std::vector<SegmentAnnotation> segments_from_words(const std::vector<AttributedWord>& words,
                                                   double gap_s) {
  std::map<Index, std::vector<const AttributedWord*>> by_stream;
  for (const auto& w : words) by_stream[w.stream].push_back(&w);
  struct Keyed {
    Index stream;
    SegmentAnnotation seg;
  };
  std::vector<Keyed> segments;
  for (auto& [stream, list] : by_stream) {
    std::stable_sort(list.begin(), list.end(), [](const AttributedWord* a, const AttributedWord* b) {
      return a->start_s < b->start_s;
    });
    for (std::size_t i = 0; i < list.size();) {
      SegmentAnnotation seg;
      seg.speaker = speaker_label(list[i]->speaker);
      seg.start_s = list[i]->start_s;
      seg.end_s = list[i]->end_s;
      seg.words.emplace();
      std::size_t k = i;
      while (k < list.size() && list[k]->speaker == list[i]->speaker &&
             (k == i || list[k]->start_s - seg.end_s <= gap_s)) {
        seg.words->push_back({list[k]->text, list[k]->start_s, list[k]->end_s});
        seg.end_s = std::max(seg.end_s, list[k]->end_s);
        ++k;
      }
      // Segments are open intervals; a lone zero-length word still needs one.
      if (!(seg.end_s > seg.start_s)) seg.end_s = seg.start_s + 1e-3;
      std::string text;
      for (const auto& w : *seg.words) text += (text.empty() ? "" : " ") + w.text;
      seg.transcript = std::move(text);
      segments.push_back({stream, std::move(seg)});
      i = k;
    }
  }
  std::stable_sort(segments.begin(), segments.end(), [](const Keyed& a, const Keyed& b) {
    if (a.seg.start_s != b.seg.start_s) return a.seg.start_s < b.seg.start_s;
    return a.stream < b.stream;
  });
  std::vector<SegmentAnnotation> out;
  for (auto& k : segments) out.push_back(std::move(k.seg));
  return out;
}

namespace {

void check_asr_output(const std::vector<WordTiming>& words, const Waveform& stream) {
  const double duration = stream.duration_s();
  constexpr double kSlack = 1e-3;
  for (std::size_t i = 0; i < words.size(); ++i) {
    const auto& w = words[i];
    if (!(w.start_s >= -kSlack && w.start_s <= w.end_s && w.end_s <= duration + kSlack))
      throw AsrError("ASR word '" + w.text + "' lies outside the stream or has inverted times");
    if (i > 0 && w.start_s < words[i - 1].start_s) throw AsrError("ASR words are not time-sorted");
  }
}

}  // namespace

MeetingOutput run_meeting(const MeetingManifest& m, const PipelineConfig& cfg_in,
                          MaskEstimator& estimator, AsrClient& asr,
                          const SpeakerEmbedder& embedder) {
  PipelineConfig cfg = cfg_in;
  validate(cfg);
  validate(m);
  const DeviceEntry& device = select_device(m, cfg);
  const Waveform audio = load_device_audio(device);

  MeetingOutput out;
  out.css = css_pipeline(audio, estimator, cfg.css);
  const auto& streams = out.css.streams;

  std::vector<std::vector<WordTiming>> per_stream(streams.size());
  if (asr.concurrent_safe() && streams.size() > 1) {
    std::vector<std::thread> threads;
    std::vector<std::exception_ptr> errors(streams.size());
    for (std::size_t s = 0; s < streams.size(); ++s)
      threads.emplace_back([&, s] {
        try {
          per_stream[s] = asr.transcribe(streams[s]);
        } catch (...) {
          errors[s] = std::current_exception();
        }
      });
    for (auto& t : threads) t.join();
    for (const auto& e : errors)
      if (e) std::rethrow_exception(e);
  } else {
    for (std::size_t s = 0; s < streams.size(); ++s) per_stream[s] = asr.transcribe(streams[s]);
  }
  for (std::size_t s = 0; s < streams.size(); ++s) check_asr_output(per_stream[s], streams[s]);

  DiarizationConfig dcfg = cfg.diarization;
  dcfg.clustering.seed = cfg.seed;
  out.diarization = diarize_streams(streams, embedder, dcfg);

  std::vector<AsrWord> words;
  for (std::size_t s = 0; s < per_stream.size(); ++s)
    for (const auto& w : per_stream[s])
      words.push_back({w.text, w.start_s, w.end_s, static_cast<Index>(s)});
  if (!words.empty()) out.words = attribute_words(words, out.diarization);

  out.hypothesis.meeting_id = m.meeting_id;
  out.hypothesis.segments = segments_from_words(out.words, cfg.segment_gap_s);
  return out;
}

MeetingOutput run_meeting(const MeetingManifest& m, const PipelineConfig& cfg,
                          MaskEstimator& estimator, AsrClient& asr) {
  static const SpectralEmbedder embedder;
  return run_meeting(m, cfg, estimator, asr, embedder);
}

namespace {

// Serializes calls into a backend that is not safe to share.
class LockedAsr : public AsrClient {
 public:
  explicit LockedAsr(AsrClient& inner) : inner_(inner) {}
  std::vector<WordTiming> transcribe(const Waveform& stream) override {
    std::lock_guard<std::mutex> lock(mu_);
    return inner_.transcribe(stream);
  }

 private:
  AsrClient& inner_;
  std::mutex mu_;
};

void write_meeting_outputs(const fs::path& dir, const MeetingManifest& m, const MeetingOutput& o,
                           const PipelineConfig& cfg) {
  fs::create_directories(dir);
  write_css_outputs(dir.string(), m.meeting_id, o.css, cfg.css);
  std::ofstream hyp(dir / "hypothesis.jsonl");
  write_transcripts(hyp, o.hypothesis);
  std::ofstream rttm(dir / "diarization.rttm");
  write_rttm(rttm, m.meeting_id, o.diarization);
  std::ofstream words(dir / "words.jsonl");
  write_attributed_words(words, o.words);
  if (!hyp || !rttm || !words) throw IoError("cannot write outputs in " + dir.string());
}

}  // namespace

BatchResult run_batch(const std::vector<MeetingManifest>& manifests, const PipelineConfig& cfg_in,
                      AsrClient& asr_in, const BatchOptions& opts) {
  if (manifests.empty()) throw InvalidInput("run_batch needs at least one meeting");
  PipelineConfig cfg = cfg_in;
  validate(cfg);
  static const SpectralEmbedder default_embedder;
  const SpeakerEmbedder& embedder = opts.embedder ? *opts.embedder : default_embedder;
  LockedAsr locked(asr_in);
  AsrClient& asr = asr_in.concurrent_safe() ? asr_in : static_cast<AsrClient&>(locked);
  const fs::path out_dir(cfg.output_dir);

  BatchResult result;
  result.runs.resize(manifests.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < manifests.size(); i = next++) {
      const MeetingManifest& m = manifests[i];
      MeetingRun& run = result.runs[i];
      run.meeting_id = m.meeting_id;
      try {
        auto estimator = opts.estimator_factory(m, cfg);
        run.output = run_meeting(m, cfg, *estimator, asr, embedder);
        if (opts.write_outputs) write_meeting_outputs(out_dir / m.meeting_id, m, *run.output, cfg);
      } catch (const std::exception& e) {
        run.output.reset();
        run.error = e.what();
      }
    }
  };
  const int threads = std::min<int>(cfg.workers, static_cast<int>(manifests.size()));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  ScoreReport& report = result.report;
  report.collar_s = cfg.scoring.collar_s;
  std::vector<MeetingMetadata> metadata;
  std::map<std::string, std::map<std::string, TranscriptSet>> ref_cache;
  for (std::size_t i = 0; i < manifests.size(); ++i) {
    const MeetingManifest& m = manifests[i];
    MeetingRun& run = result.runs[i];
    if (run.error) {
      report.failures.push_back({m.meeting_id, *run.error});
      continue;
    }
    if (!m.reference_path) continue;
    try {
      auto cached = ref_cache.find(*m.reference_path);
      if (cached == ref_cache.end())
        cached = ref_cache.emplace(*m.reference_path, read_transcripts(*m.reference_path)).first;
      const auto ref = cached->second.find(m.meeting_id);
      if (ref == cached->second.end())
        throw IoError("reference " + *m.reference_path + " has no meeting " + m.meeting_id);
      const TranscriptSet& hyp = run.output->hypothesis;
      report.meetings.push_back({m.meeting_id, tcpwer(hyp, ref->second, cfg.scoring.collar_s),
                                 speaker_agnostic_wer(hyp, ref->second, cfg.scoring.collar_s)});
      if (m.metadata) metadata.push_back(*m.metadata);
    } catch (const std::exception& e) {
      report.failures.push_back({m.meeting_id, std::string("scoring: ") + e.what()});
    }
  }
  report.verticals = vertical_breakdown(report.meetings, metadata, cfg.scoring.bootstrap);

  if (opts.write_outputs) {
    fs::create_directories(out_dir);
    std::ofstream all(out_dir / "hypothesis.jsonl");
    for (const auto& run : result.runs)
      if (run.output) write_transcripts(all, run.output->hypothesis);
    if (!all) throw IoError("cannot write " + (out_dir / "hypothesis.jsonl").string());
    write_report_json((out_dir / "report.json").string(), report);
    write_meetings_csv((out_dir / "meetings.csv").string(), report);
    write_verticals_csv((out_dir / "verticals.csv").string(), report.verticals);
  }
  return result;
}

}  // namespace dasr
