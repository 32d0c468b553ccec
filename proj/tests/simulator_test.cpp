// Copyright 2026 The dasr Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <set>

#include <json.hpp>

#include "dasr/simulator.hpp"
#include "dasr/wav.hpp"
#include "fixtures.hpp"

using namespace dasr;
namespace fs = std::filesystem;

namespace {

Waveform tone(double seconds, double freq = 300.0, double amp = 0.5) {
  const auto n = static_cast<Index>(std::llround(seconds * kSampleRate));
  Waveform w = Waveform::zeros(1, n);
  for (Index t = 0; t < n; ++t)
    w.samples(0, t) = amp * std::sin(2.0 * std::numbers::pi * freq * double(t) / kSampleRate);
  return w;
}

Waveform concat(const std::vector<Waveform>& parts) {
  Index total = 0;
  for (const auto& p : parts) total += p.num_samples();
  Waveform out = Waveform::zeros(1, total);
  Index at = 0;
  for (const auto& p : parts) {
    out.samples.middleCols(at, p.num_samples()) = p.samples;
    at += p.num_samples();
  }
  return out;
}

UtteranceRecord record(const std::string& path, double mos) {
  UtteranceRecord r;
  r.path = path;
  r.speaker_id = "s";
  r.mos_score = mos;
  return r;
}

const fixtures::Corpus& corpus() {
  static const fixtures::Corpus c = fixtures::synthetic_corpus(21, 4, 4, 1, 2, 3);
  return c;
}

}  // namespace

TEST_CASE("direct/early weight") {
  CHECK(direct_early_weight(-3.0, 50.0, 8.0) == 1.0);
  CHECK(direct_early_weight(0.0, 50.0, 8.0) == 1.0);
  CHECK(direct_early_weight(46.0, 50.0, 8.0) == 1.0);
  CHECK(direct_early_weight(48.0, 50.0, 8.0) == doctest::Approx(0.5 + 0.5 * std::cos(std::numbers::pi / 4)));
  CHECK(direct_early_weight(50.0, 50.0, 8.0) == doctest::Approx(0.5));
  CHECK(direct_early_weight(54.0, 50.0, 8.0) == 0.0);
  CHECK(direct_early_weight(200.0, 50.0, 8.0) == 0.0);
  CHECK(direct_early_weight(49.0, 50.0, 0.0) == 1.0);
  CHECK(direct_early_weight(50.0, 50.0, 0.0) == 0.5);
  CHECK(direct_early_weight(51.0, 50.0, 0.0) == 0.0);
}

TEST_CASE("direct/early weight is monotone and symmetric about the cutoff") {
  for (double t = 0.0; t < 100.0; t += 0.25) {
    CHECK(direct_early_weight(t + 0.25, 50.0, 8.0) <= direct_early_weight(t, 50.0, 8.0));
    CHECK(direct_early_weight(50.0 - t, 50.0, 8.0) + direct_early_weight(50.0 + t, 50.0, 8.0) ==
          doctest::Approx(1.0));
  }
}

TEST_CASE("RIR split") {
  Rir rir;
  rir.response = ChannelMatrix<double>::Constant(2, 2000, 0.1);
  rir.response(0, 100) = 1.0;  // onset

  const RirSplit s = split_rir(rir);
  CHECK(s.onset_tap == 100);
  CHECK((s.direct_early + s.late - rir.response).cwiseAbs().maxCoeff() == 0.0);
  // 16 taps per millisecond.
  CHECK(s.direct_early(1, 0) == 0.1);
  CHECK(s.direct_early(0, 100) == 1.0);
  CHECK(s.direct_early(1, 100 + 46 * 16) == 0.1);
  CHECK(s.direct_early(1, 100 + 50 * 16) == doctest::Approx(0.05));
  CHECK(s.direct_early(1, 100 + 54 * 16) == 0.0);
  CHECK(s.late(1, 1999) == 0.1);
  CHECK(s.late(0, 100) == 0.0);

  SUBCASE("invalid RIRs") {
    CHECK_THROWS_AS(split_rir(Rir{}), InvalidInput);
    Rir zero;
    zero.response = ChannelMatrix<double>::Zero(1, 10);
    CHECK_THROWS_AS(split_rir(zero), InvalidInput);
    CHECK_THROWS_AS(split_rir(rir, 50.0, 101.0), InvalidInput);
  }
}

TEST_CASE("pause detection") {
  SUBCASE("gap between two bursts") {
    const Waveform w = concat({tone(1.0), Waveform::zeros(1, kSampleRate / 2), tone(1.0)});
    const auto pauses = detect_pauses(w);
    REQUIRE(pauses.size() == 1);
    CHECK(pauses[0] == doctest::Approx(1.25).epsilon(0.01));
  }
  SUBCASE("short gaps are not pauses") {
    const Waveform w = concat({tone(1.0), Waveform::zeros(1, kSampleRate / 10), tone(1.0)});
    CHECK(detect_pauses(w).empty());
  }
  SUBCASE("leading and trailing silence count") {
    const Waveform w = concat({Waveform::zeros(1, kSampleRate / 2), tone(1.0), Waveform::zeros(1, kSampleRate / 2)});
    const auto pauses = detect_pauses(w);
    REQUIRE(pauses.size() == 2);
    CHECK(pauses[0] < 0.5);
    CHECK(pauses[1] > 1.5);
  }
  SUBCASE("silence and short input") {
    CHECK(detect_pauses(Waveform::zeros(1, kSampleRate)).empty());
    CHECK(detect_pauses(Waveform::zeros(1, 10)).empty());
    CHECK_THROWS_AS(detect_pauses(Waveform::zeros(2, kSampleRate)), InvalidInput);
  }
}

TEST_CASE("silence insertion") {
  const Waveform w = fixtures::white_noise(3, 1, 3 * kSampleRate, 0.1);
  const std::vector<double> points{0.5, 1.0, 2.5};

  SUBCASE("probability one inserts every gap") {
    SilenceInsertionOptions opts;
    opts.probability = 1.0;
    opts.min_gap_s = opts.max_gap_s = 0.25;
    const Waveform out = insert_silences(w, points, 1, opts);
    CHECK(out.num_samples() == w.num_samples() + 3 * 4000);
    // Removing the inserted runs gives back the input.
    CHECK(out.samples.middleCols(0, 8000) == w.samples.middleCols(0, 8000));
    CHECK(out.samples.middleCols(8000, 4000).cwiseAbs().maxCoeff() == 0.0);
    CHECK(out.samples.middleCols(12000, 8000) == w.samples.middleCols(8000, 8000));
    CHECK(out.samples.rightCols(8000) == w.samples.rightCols(8000));
  }
  SUBCASE("probability zero is the identity") {
    SilenceInsertionOptions opts;
    opts.probability = 0.0;
    std::vector<InsertedSilence> record{{1.0, 1.0}};
    CHECK(insert_silences(w, points, 1, opts, &record).samples == w.samples);
    CHECK(record.empty());
  }
  SUBCASE("the record re-times samples of the original") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      std::vector<InsertedSilence> record;
      const Waveform out = insert_silences(w, points, seed, {}, &record);
      double total = 0.0;
      for (const auto& r : record) total += r.length_s;
      CHECK(out.num_samples() == w.num_samples() + std::lround(total * kSampleRate));
      for (Index t : {Index(0), Index(7999), Index(8001), Index(20000), Index(39999), Index(47999)}) {
        const Index moved = std::lround(retime(double(t) / kSampleRate, record) * kSampleRate);
        CHECK(out.samples(0, moved) == w.samples(0, t));
      }
    }
    CHECK(retime(0.7, {{0.5, 0.25}, {1.0, 2.0}}) == doctest::Approx(0.95));
    CHECK(retime(0.2, {{0.5, 0.25}}) == 0.2);
  }
  SUBCASE("the output only ever grows by whole zero runs") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const Waveform out = insert_silences(w, points, seed);
      CHECK(out.num_samples() >= w.num_samples());
      CHECK(out.num_samples() <= w.num_samples() + 3 * 2 * kSampleRate);
      CHECK(out.energy() == doctest::Approx(w.energy()).epsilon(1e-12));
      CHECK(insert_silences(w, points, seed).samples == out.samples);
    }
  }
  SUBCASE("invalid options") {
    SilenceInsertionOptions opts;
    opts.min_gap_s = 1.0;
    opts.max_gap_s = 0.5;
    CHECK_THROWS_AS(insert_silences(w, points, 1, opts), InvalidInput);
    CHECK_THROWS_AS(insert_silences(w, {4.0}, 1), InvalidInput);
  }
}

TEST_CASE("MOS quartile filter") {
  const auto kept = mos_quartile_filter(
      {record("a", 1.0), record("b", 2.0), record("c", 3.0), record("d", 4.0)});
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].path == "d");

  const auto ties = mos_quartile_filter({record("a", 4.0), record("b", 4.0), record("c", 4.0)});
  CHECK(ties.size() == 3);

  const auto order = mos_quartile_filter(
      {record("x", 4.5), record("y", 1.0), record("z", 4.5), record("w", 2.0), record("v", 3.0)});
  REQUIRE(order.size() == 2);
  CHECK(order[0].path == "x");
  CHECK(order[1].path == "z");

  CHECK_THROWS_AS(mos_quartile_filter({}), InvalidInput);
  CHECK_THROWS_AS(mos_quartile_filter({record("n", std::nan(""))}), InvalidInput);
}

TEST_CASE("convolution components") {
  const Rir rir = fixtures::synthetic_rir(4, 7, 0.3, 1.5, 0.4, "r", "p");
  const RirSplit split = split_rir(rir);
  const Waveform a = fixtures::white_noise(1, 1, 5000), b = fixtures::white_noise(2, 1, 5000);

  SUBCASE("components add up to the full convolution") {
    const ConvolvedSpeech c = convolve_components(a, split);
    CHECK(c.direct_early.num_samples() == 5000 + rir.taps() - 1);
    for (Index ch : {0, 3, 6}) {
      const Vector<double> full = convolve<double>(a.samples.row(0).transpose(), rir.response.row(ch).transpose());
      const Eigen::RowVectorXd sum = c.direct_early.samples.row(ch) + c.reverb.samples.row(ch);
      CHECK((sum - full.transpose()).cwiseAbs().maxCoeff() < 1e-9);
    }
  }
  SUBCASE("linear in the speech") {
    Waveform mix = a;
    mix.samples = 2.0 * a.samples - 0.5 * b.samples;
    const ConvolvedSpeech ca = convolve_components(a, split), cb = convolve_components(b, split),
                          cm = convolve_components(mix, split);
    CHECK((cm.direct_early.samples - (2.0 * ca.direct_early.samples - 0.5 * cb.direct_early.samples))
              .cwiseAbs().maxCoeff() < 1e-9);
    CHECK((cm.reverb.samples - (2.0 * ca.reverb.samples - 0.5 * cb.reverb.samples))
              .cwiseAbs().maxCoeff() < 1e-9);
  }
  SUBCASE("stereo speech is rejected") {
    CHECK_THROWS_AS(convolve_components(Waveform::zeros(2, 100), split), InvalidInput);
  }
}

TEST_CASE("mix_meeting") {
  auto image = [](std::uint64_t seed, Index len) {
    return ConvolvedSpeech{fixtures::white_noise(seed, 2, len, 0.3), fixtures::white_noise(seed + 100, 2, len, 0.1)};
  };
  const std::vector<ConvolvedSpeech> speakers{image(1, 16000), image(2, 8000)};
  const Waveform noise = fixtures::white_noise(9, 2, 5000, 0.05);

  SUBCASE("explicit shifts") {
    const SupervisionBundle b = mix_meeting(speakers, noise, {0.0, 1.5}, 1);
    CHECK(b.mixture.num_samples() == 24000 + 8000);
    CHECK(b.speaker_offsets_s == std::vector<double>{0.0, 1.5});
    CHECK(b.direct_early[1].samples.leftCols(24000).cwiseAbs().maxCoeff() == 0.0);
    CHECK(b.direct_early[1].samples.middleCols(24000, 8000) == speakers[1].direct_early.samples);
    CHECK(mixture_identity_error(b) < 1e-12);
    // Noise tiles from its start.
    CHECK(b.noise.samples.middleCols(5000, 5000) == noise.samples);
    CHECK(b.noise.samples.middleCols(30000, 2000) == noise.samples.leftCols(2000));
  }
  SUBCASE("noise scaled to the requested SNR") {
    MixOptions opts;
    opts.snr_db = 7.5;
    const SupervisionBundle b = mix_meeting(speakers, noise, {0.2, 0.0}, 1, opts);
    const double speech = (b.mixture.samples - b.noise.samples).squaredNorm();
    CHECK(10.0 * std::log10(speech / b.noise.energy()) == doctest::Approx(7.5).epsilon(1e-9));
    CHECK(mixture_identity_error(b) < 1e-12);
  }
  SUBCASE("random shifts stay within the bound and are seeded") {
    MixOptions opts;
    opts.max_shift_s = 2.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const SupervisionBundle b = mix_meeting(speakers, noise, {}, seed, opts);
      for (double s : b.speaker_offsets_s) CHECK((s >= 0.0 && s <= 2.0));
      CHECK(mix_meeting(speakers, noise, {}, seed, opts).mixture.samples == b.mixture.samples);
    }
  }
  SUBCASE("empty noise") {
    const SupervisionBundle b = mix_meeting(speakers, Waveform::zeros(2, 0), {0.0, 0.0}, 1);
    CHECK(b.noise.energy() == 0.0);
    CHECK(mixture_identity_error(b) < 1e-12);
  }
  SUBCASE("invalid inputs") {
    CHECK_THROWS_AS(mix_meeting({}, noise, {}, 1), InvalidInput);
    CHECK_THROWS_AS(mix_meeting(speakers, noise, {0.0}, 1), InvalidInput);
    CHECK_THROWS_AS(mix_meeting(speakers, noise, {0.0, -1.0}, 1), InvalidInput);
    CHECK_THROWS_AS(mix_meeting(speakers, Waveform::zeros(3, 100), {0.0, 0.0}, 1), InvalidInput);
  }
}

TEST_CASE("RT60 estimation") {
  SUBCASE("pure exponential decays") {
    for (double t60 : {0.3, 0.6}) {
      const double est = estimate_rt60(fixtures::exponential_rir(5, t60, 1.5 * t60));
      CHECK(est == doctest::Approx(t60).epsilon(0.1));
    }
  }
  SUBCASE("scale invariance") {
    Rir rir = fixtures::exponential_rir(6, 0.5, 1.0);
    const double base = estimate_rt60(rir);
    rir.response *= 37.0;
    CHECK(estimate_rt60(rir) == doctest::Approx(base).epsilon(1e-9));
  }
  SUBCASE("degenerate responses") {
    Rir impulse;
    impulse.response = ChannelMatrix<double>::Zero(1, 100);
    impulse.response(0, 0) = 1.0;
    CHECK_THROWS_AS(estimate_rt60(impulse), InsufficientDecay);
    Rir flat;
    flat.response = ChannelMatrix<double>::Ones(1, 100);
    CHECK_THROWS_AS(estimate_rt60(flat), InsufficientDecay);
    impulse.response.setZero();
    CHECK_THROWS_AS(estimate_rt60(impulse), InvalidInput);
  }
}

TEST_CASE("bundle generation") {
  const auto& pool = corpus().pool;
  SimulationConfig cfg;
  cfg.max_shift_s = 3.0;

  SUBCASE("every bundle satisfies the mixture identity") {
    for (std::uint64_t i = 0; i < 4; ++i) {
      BundleInfo info;
      const SupervisionBundle b = generate_bundle(pool, cfg, 1, i, &info);
      CHECK(b.num_speakers() == 3);
      CHECK(mixture_identity_error(b) < 1e-9);
      CHECK(info.rir_paths.size() == 3);
      // Speakers and positions are distinct within a bundle.
      CHECK(std::set<std::string>(info.speaker_ids.begin(), info.speaker_ids.end()).size() == 3);
      CHECK(std::set<std::string>(info.position_ids.begin(), info.position_ids.end()).size() == 3);
      for (const auto& p : info.rir_paths) CHECK(p.find(info.room_id + "/") != std::string::npos);
      CHECK(info.noise_path.find(info.room_id + "/") != std::string::npos);
      CHECK(info.silences.size() == 3);
    }
  }
  SUBCASE("a job depends only on its seed and index") {
    const SupervisionBundle later = generate_bundle(pool, cfg, 1, 3);
    generate_bundle(pool, cfg, 1, 0);
    CHECK(generate_bundle(pool, cfg, 1, 3).mixture.samples == later.mixture.samples);
    BundleInfo a, b;
    generate_bundle(pool, cfg, 1, 3, &a);
    generate_bundle(pool, cfg, 2, 3, &b);
    CHECK(a.job_seed != b.job_seed);
    CHECK(a.shifts_s != b.shifts_s);
  }
  SUBCASE("MOS filter keeps only top-quartile utterances") {
    for (std::uint64_t i = 0; i < 6; ++i) {
      BundleInfo info;
      generate_bundle(pool, cfg, 5, i, &info);
      for (const auto& p : info.utterance_paths) CHECK(p.find("utt3") != std::string::npos);
    }
  }
  SUBCASE("fewer speakers than requested") {
    cfg.num_speakers = 9;
    CHECK(generate_bundle(pool, cfg, 1, 0).num_speakers() == 3);
  }
}

TEST_CASE("bundle files round trip exactly") {
  const fs::path dir = fs::temp_directory_path() / "dasr_sim_test";
  fs::remove_all(dir);
  BundleInfo info;
  const SupervisionBundle b = generate_bundle(corpus().pool, SimulationConfig{}, 4, 2, &info);
  write_bundle(dir.string(), b, info);
  const SupervisionBundle r = read_bundle(dir.string());
  CHECK(r.mixture.samples == b.mixture.samples);
  REQUIRE(r.num_speakers() == b.num_speakers());
  for (std::size_t i = 0; i < b.direct_early.size(); ++i) {
    CHECK(r.direct_early[i].samples == b.direct_early[i].samples);
    CHECK(r.reverb[i].samples == b.reverb[i].samples);
  }
  CHECK(r.speaker_ids == b.speaker_ids);
  CHECK(r.speaker_offsets_s == b.speaker_offsets_s);
  CHECK(r.sources == info.utterance_paths);
  CHECK(mixture_identity_error(r) < 1e-9);
  std::ifstream meta(dir / "bundle.json");
  const auto j = nlohmann::json::parse(meta);
  REQUIRE(j["inserted_silences"].size() == info.silences.size());
  for (std::size_t i = 0; i < info.silences.size(); ++i)
    CHECK(j["inserted_silences"][i].size() == info.silences[i].size());
  fs::remove_all(dir);
  CHECK_THROWS_AS(read_bundle(dir.string()), IoError);
}

TEST_CASE("simulation pool manifest") {
  const fs::path dir = fs::temp_directory_path() / "dasr_pool_test";
  fs::remove_all(dir);
  fs::create_directories(dir / "audio");
  write_wav((dir / "audio/u0.wav").string(), tone(0.5));
  write_wav((dir / "audio/r0.wav").string(), Waveform(fixtures::synthetic_rir(1, 7, 0.0, 1.0, 0.3, "A", "p0").response));
  write_wav((dir / "audio/n0.wav").string(), fixtures::white_noise(1, 7, 1000, 0.01));
  {
    std::ofstream m(dir / "pool.jsonl");
    m << R"({"kind": "utterance", "path": "audio/u0.wav", "speaker": "alice", "mos": 4.1})" << "\n\n"
      << R"({"kind": "rir", "path": "audio/r0.wav", "room": "A", "position": "p0"})" << "\n"
      << R"({"kind": "noise", "path": "audio/n0.wav", "room": "A"})" << "\n";
  }
  const SimulationPool pool = load_simulation_pool((dir / "pool.jsonl").string());
  REQUIRE(pool.utterances.size() == 1);
  CHECK(pool.utterances[0].speaker_id == "alice");
  CHECK(pool.utterances[0].duration_s == doctest::Approx(0.5));
  REQUIRE(pool.rirs.size() == 1);
  CHECK(pool.rirs[0].channels() == 7);
  CHECK(pool.rirs[0].position_id == "p0");
  CHECK(pool.noises.at(0).room_id == "A");

  {
    std::ofstream m(dir / "bad.jsonl");
    m << R"({"kind": "video", "path": "audio/u0.wav"})" << "\n";
  }
  CHECK_THROWS_AS(load_simulation_pool((dir / "bad.jsonl").string()), IoError);
  CHECK_THROWS_AS(load_simulation_pool((dir / "missing.jsonl").string()), IoError);
  fs::remove_all(dir);
}
