// Copyright 2026 The dasr Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include <json.hpp>

#include "dasr/simulator.hpp"
#include "dasr/wav.hpp"

namespace dasr {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path.string() : (base / path).string();
}

}  // namespace

SimulationPool load_simulation_pool(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open manifest " + manifest_path);
  const fs::path base = fs::path(manifest_path).parent_path();
  SimulationPool pool;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw IoError(manifest_path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    const std::string kind = j.value("kind", "");
    const std::string path = resolve(base, j.at("path").get<std::string>());
    if (kind == "utterance") {
      Waveform audio = read_wav_16k(path);
      if (audio.channels() != 1) throw InvalidInput(path + ": utterances must be mono");
      UtteranceRecord r;
      r.path = path;
      r.speaker_id = j.at("speaker").get<std::string>();
      r.mos_score = j.at("mos").get<double>();
      r.duration_s = j.value("duration_s", audio.duration_s());
      pool.utterances.push_back(r);
      pool.utterance_audio.push_back(std::move(audio));
    } else if (kind == "rir") {
      Waveform audio = read_wav_16k(path);
      Rir rir;
      rir.response = std::move(audio.samples);
      rir.sample_rate = audio.sample_rate;
      rir.room_id = j.at("room").get<std::string>();
      rir.position_id = j.at("position").get<std::string>();
      pool.rirs.push_back(std::move(rir));
      pool.rir_paths.push_back(path);
    } else if (kind == "noise") {
      pool.noises.push_back({path, j.value("room", ""), read_wav_16k(path)});
    } else {
      throw IoError(manifest_path + ":" + std::to_string(line_no) + ": unknown kind '" + kind + "'");
    }
  }
  return pool;
}

SupervisionBundle generate_bundle(const SimulationPool& pool, const SimulationConfig& cfg,
                                  std::uint64_t global_seed, std::uint64_t index,
                                  BundleInfo* info) {
  if (pool.utterances.empty() || pool.rirs.empty())
    throw InvalidInput("simulation pool needs utterances and RIRs");
  const std::uint64_t job_seed = derive_seed(global_seed, index);
  std::mt19937_64 rng(job_seed);

  // Eligible utterances, grouped by speaker in first-seen order.
  std::vector<std::size_t> eligible;
  if (cfg.mos_filter) {
    const auto kept = mos_quartile_filter(pool.utterances);
    std::set<std::string> kept_paths;
    for (const auto& r : kept) kept_paths.insert(r.path);
    for (std::size_t i = 0; i < pool.utterances.size(); ++i)
      if (kept_paths.count(pool.utterances[i].path)) eligible.push_back(i);
  } else {
    for (std::size_t i = 0; i < pool.utterances.size(); ++i) eligible.push_back(i);
  }
  std::vector<std::string> speaker_order;
  std::map<std::string, std::vector<std::size_t>> by_speaker;
  for (std::size_t i : eligible) {
    const auto& spk = pool.utterances[i].speaker_id;
    if (!by_speaker.count(spk)) speaker_order.push_back(spk);
    by_speaker[spk].push_back(i);
  }

  // Rooms and their distinct positions, in first-seen order.
  std::vector<std::string> room_order;
  std::map<std::string, std::map<std::string, std::vector<std::size_t>>> positions;
  std::map<std::string, std::vector<std::string>> position_order;
  for (std::size_t i = 0; i < pool.rirs.size(); ++i) {
    const auto& r = pool.rirs[i];
    if (!positions.count(r.room_id)) room_order.push_back(r.room_id);
    auto& room = positions[r.room_id];
    if (!room.count(r.position_id)) position_order[r.room_id].push_back(r.position_id);
    room[r.position_id].push_back(i);
  }

  const std::size_t wanted = static_cast<std::size_t>(std::max(1, cfg.num_speakers));
  std::size_t best_positions = 0;
  for (const auto& room : room_order)
    best_positions = std::max(best_positions, position_order[room].size());
  const std::size_t k = std::min({wanted, speaker_order.size(), best_positions});
  std::vector<std::string> rooms;
  for (const auto& room : room_order)
    if (position_order[room].size() >= k) rooms.push_back(room);
  const std::string room = rooms[uniform_index(rng, rooms.size())];

  std::vector<std::string> speakers = speaker_order;
  dasr::shuffle(speakers.begin(), speakers.end(), rng);
  speakers.resize(k);
  std::vector<std::string> room_positions = position_order[room];
  dasr::shuffle(room_positions.begin(), room_positions.end(), rng);
  room_positions.resize(k);

  BundleInfo local;
  local.global_seed = global_seed;
  local.index = index;
  local.job_seed = job_seed;
  local.room_id = room;

  std::vector<ConvolvedSpeech> images;
  for (std::size_t s = 0; s < k; ++s) {
    const auto& candidates = by_speaker[speakers[s]];
    const std::size_t utt = candidates[uniform_index(rng, candidates.size())];
    const auto& rir_candidates = positions[room][room_positions[s]];
    const std::size_t rir_index = rir_candidates[uniform_index(rng, rir_candidates.size())];

    const Waveform& clean = pool.utterance_audio[utt];
    const auto pauses = detect_pauses(clean, cfg.pauses);
    std::vector<InsertedSilence> inserted;
    const Waveform augmented = insert_silences(clean, pauses, rng(), cfg.silences, &inserted);
    local.silences.push_back(std::move(inserted));
    const RirSplit split = split_rir(pool.rirs[rir_index], cfg.cutoff_ms, cfg.transition_ms);
    images.push_back(convolve_components(augmented, split));

    local.speaker_ids.push_back(speakers[s]);
    local.utterance_paths.push_back(pool.utterances[utt].path);
    local.rir_paths.push_back(rir_index < pool.rir_paths.size() ? pool.rir_paths[rir_index] : "");
    local.position_ids.push_back(room_positions[s]);
  }

  Waveform noise;
  std::vector<std::size_t> noise_candidates;
  for (std::size_t i = 0; i < pool.noises.size(); ++i)
    if (pool.noises[i].room_id == room) noise_candidates.push_back(i);
  if (noise_candidates.empty())
    for (std::size_t i = 0; i < pool.noises.size(); ++i) noise_candidates.push_back(i);
  MixOptions mix;
  mix.max_shift_s = cfg.max_shift_s;
  local.snr_db = uniform(rng, cfg.min_snr_db, cfg.max_snr_db);
  if (!noise_candidates.empty()) {
    const auto& rec = pool.noises[noise_candidates[uniform_index(rng, noise_candidates.size())]];
    noise = rec.audio;
    local.noise_path = rec.path;
    mix.snr_db = local.snr_db;
  }

  SupervisionBundle b = mix_meeting(images, noise, {}, rng(), mix);
  b.speaker_ids = local.speaker_ids;
  b.sources = local.utterance_paths;
  local.shifts_s = b.speaker_offsets_s;
  if (info) *info = std::move(local);
  return b;
}

void write_bundle(const std::string& dir, const SupervisionBundle& b, const BundleInfo& info) {
  fs::create_directories(dir);
  const fs::path d(dir);
  write_wav((d / "mixture.wav").string(), b.mixture, WavFormat::kFloat64);
  for (Index i = 0; i < b.num_speakers(); ++i) {
    const std::string stem = "spk" + std::to_string(i);
    write_wav((d / (stem + "_direct_early.wav")).string(),
              b.direct_early[static_cast<std::size_t>(i)], WavFormat::kFloat64);
    write_wav((d / (stem + "_reverb.wav")).string(), b.reverb[static_cast<std::size_t>(i)],
              WavFormat::kFloat64);
  }
  write_wav((d / "noise.wav").string(), b.noise, WavFormat::kFloat64);

  json j;
  j["num_speakers"] = b.num_speakers();
  j["sample_rate"] = b.mixture.sample_rate;
  j["num_samples"] = b.mixture.num_samples();
  j["channels"] = b.mixture.channels();
  j["global_seed"] = info.global_seed;
  j["index"] = info.index;
  j["job_seed"] = info.job_seed;
  j["room"] = info.room_id;
  j["speakers"] = b.speaker_ids;
  j["shifts_s"] = b.speaker_offsets_s;
  j["sources"] = {{"utterances", info.utterance_paths},
                  {"rirs", info.rir_paths},
                  {"positions", info.position_ids},
                  {"noise", info.noise_path}};
  j["snr_db"] = info.snr_db;
  json silences = json::array();
  for (const auto& list : info.silences) {
    json per = json::array();
    for (const auto& s : list) per.push_back({{"at_s", s.at_s}, {"length_s", s.length_s}});
    silences.push_back(per);
  }
  j["inserted_silences"] = silences;
  std::ofstream out(d / "bundle.json");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("cannot write " + (d / "bundle.json").string());
}

SupervisionBundle read_bundle(const std::string& dir) {
  const fs::path d(dir);
  std::ifstream in(d / "bundle.json");
  if (!in) throw IoError("cannot open " + (d / "bundle.json").string());
  const json j = json::parse(in);
  SupervisionBundle b;
  b.mixture = read_wav((d / "mixture.wav").string());
  const int n = j.at("num_speakers").get<int>();
  for (int i = 0; i < n; ++i) {
    const std::string stem = "spk" + std::to_string(i);
    b.direct_early.push_back(read_wav((d / (stem + "_direct_early.wav")).string()));
    b.reverb.push_back(read_wav((d / (stem + "_reverb.wav")).string()));
  }
  b.noise = read_wav((d / "noise.wav").string());
  b.speaker_offsets_s = j.at("shifts_s").get<std::vector<double>>();
  b.speaker_ids = j.at("speakers").get<std::vector<std::string>>();
  if (j.contains("sources") && j["sources"].contains("utterances"))
    b.sources = j["sources"]["utterances"].get<std::vector<std::string>>();
  return b;
}

}  // namespace dasr
