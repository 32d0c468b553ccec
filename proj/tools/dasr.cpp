// Copyright 2026 The dasr Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Command-line front end: run, simulate, score, report.

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "dasr/common.hpp"
#include "dasr/pipeline.hpp"
#include "dasr/scoring.hpp"
#include "dasr/simulator.hpp"

namespace fs = std::filesystem;

namespace {

std::string format_rate(const std::optional<double>& rate) {
  if (!rate) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *rate);
  return buf;
}

struct RunArgs {
  std::string manifest;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> track;
  std::optional<std::string> out;
};

int run(const RunArgs& a) {
  dasr::PipelineConfig cfg =
      a.config.empty() ? dasr::PipelineConfig{} : dasr::load_pipeline_config(a.config);
  if (a.seed) cfg.seed = *a.seed;
  if (a.workers) cfg.workers = *a.workers;
  if (a.track) cfg.track = dasr::track_from_string(*a.track);
  if (a.out) cfg.output_dir = *a.out;
  dasr::validate(cfg);

  const auto manifests = dasr::read_manifests(a.manifest);
  auto asr = dasr::make_asr_client(cfg);
  const auto result = dasr::run_batch(manifests, cfg, *asr);

  for (const auto& s : result.report.meetings)
    std::printf("%s  tcpWER %s  agnostic %s\n", s.meeting_id.c_str(),
                format_rate(s.tcpwer.rate).c_str(), format_rate(s.agnostic.rate).c_str());
  for (const auto& f : result.report.failures)
    std::fprintf(stderr, "failed %s: %s\n", f.meeting_id.c_str(), f.reason.c_str());
  std::printf("%zu meetings, %zu failed, outputs in %s\n", result.runs.size(),
              result.report.failures.size(), cfg.output_dir.c_str());
  return result.report.failures.empty() ? 0 : 1;
}

struct SimulateArgs {
  std::string manifest;
  std::string out;
  int count = 1;
  std::uint64_t seed = 0;
  int speakers = 3;
};

int simulate(const SimulateArgs& a) {
  const auto pool = dasr::load_simulation_pool(a.manifest);
  dasr::SimulationConfig sc;
  sc.num_speakers = a.speakers;
  for (int i = 0; i < a.count; ++i) {
    dasr::BundleInfo info;
    const auto bundle = dasr::generate_bundle(pool, sc, a.seed, static_cast<std::uint64_t>(i), &info);
    char name[32];
    std::snprintf(name, sizeof name, "bundle_%05d", i);
    dasr::write_bundle((fs::path(a.out) / name).string(), bundle, info);
  }
  std::printf("wrote %d bundles to %s\n", a.count, a.out.c_str());
  return 0;
}

struct ScoreArgs {
  std::string hyp;
  std::string ref;
  std::string metadata;
  std::string out;
  double collar = dasr::kDefaultCollar;
  std::uint64_t seed = 0;
};

int score(const ScoreArgs& a) {
  dasr::ScoringConfig cfg;
  cfg.collar_s = a.collar;
  cfg.bootstrap.seed = a.seed;
  const auto metadata = a.metadata.empty() ? std::vector<dasr::MeetingMetadata>{}
                                           : dasr::read_metadata(a.metadata);
  const auto report = dasr::score_meetings(dasr::read_transcripts(a.hyp),
                                           dasr::read_transcripts(a.ref), metadata, cfg);
  fs::create_directories(a.out);
  const fs::path out(a.out);
  dasr::write_report_json((out / "report.json").string(), report);
  dasr::write_meetings_csv((out / "meetings.csv").string(), report);
  dasr::write_verticals_csv((out / "verticals.csv").string(), report.verticals);

  for (const auto& row : report.verticals)
    std::printf("%-16s n=%-4lld tcpWER %.4f  agnostic %.4f\n", row.tag.c_str(),
                static_cast<long long>(row.tcpwer.meetings), row.tcpwer.mean, row.agnostic.mean);
  return 0;
}

int report(const std::string& path, const std::string& out_dir) {
  const auto rep = dasr::read_report_json(path);
  fs::create_directories(out_dir);
  const fs::path out(out_dir);
  dasr::write_verticals_csv((out / "verticals.csv").string(), rep.verticals);
  dasr::write_verticals_svg((out / "verticals.svg").string(), rep.verticals);
  std::printf("wrote %zu vertical rows to %s\n", rep.verticals.size(), out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distant meeting transcription toolkit"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run_cmd = app.add_subcommand("run", "Transcribe meetings and score them against references");
  run_cmd->add_option("--manifest", run_args.manifest, "Meeting manifest (JSON lines)")
      ->required()
      ->check(CLI::ExistingFile);
  run_cmd->add_option("--config", run_args.config, "Pipeline config (JSON)")->check(CLI::ExistingFile);
  run_cmd->add_option("--seed", run_args.seed, "Override the config seed");
  run_cmd->add_option("--workers", run_args.workers, "Meetings processed in parallel")
      ->check(CLI::PositiveNumber);
  run_cmd->add_option("--track", run_args.track, "sc or mc")->check(CLI::IsMember({"sc", "mc"}));
  run_cmd->add_option("--out", run_args.out, "Output directory");

  SimulateArgs sim_args;
  auto* sim_cmd = app.add_subcommand("simulate", "Generate simulated training mixtures");
  sim_cmd->add_option("--manifest", sim_args.manifest, "Utterance/RIR/noise pool (JSON lines)")
      ->required()
      ->check(CLI::ExistingFile);
  sim_cmd->add_option("--out", sim_args.out, "Output directory")->required();
  sim_cmd->add_option("--count", sim_args.count, "Number of bundles")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--seed", sim_args.seed, "Global seed");
  sim_cmd->add_option("--speakers", sim_args.speakers, "Speakers per mixture")
      ->check(CLI::PositiveNumber);

  ScoreArgs score_args;
  auto* score_cmd = app.add_subcommand("score", "Compute tcpWER and speaker-agnostic WER");
  score_cmd->add_option("--hyp", score_args.hyp, "Hypothesis segments (JSON lines)")
      ->required()
      ->check(CLI::ExistingFile);
  score_cmd->add_option("--ref", score_args.ref, "Reference segments (JSON lines)")
      ->required()
      ->check(CLI::ExistingFile);
  score_cmd->add_option("--collar", score_args.collar, "Collar in seconds")
      ->check(CLI::NonNegativeNumber);
  score_cmd->add_option("--metadata", score_args.metadata, "Meeting tags (JSON lines)")
      ->check(CLI::ExistingFile);
  score_cmd->add_option("--seed", score_args.seed, "Bootstrap seed");
  score_cmd->add_option("--out", score_args.out, "Output directory")->required();

  std::string report_path, report_out;
  auto* report_cmd = app.add_subcommand("report", "Render vertical tables and plots from a report");
  report_cmd->add_option("--report", report_path, "report.json written by score or run")
      ->required()
      ->check(CLI::ExistingFile);
  report_cmd->add_option("--out", report_out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) return run(run_args);
    if (*sim_cmd) return simulate(sim_args);
    if (*score_cmd) return score(score_args);
    if (*report_cmd) return report(report_path, report_out);
  } catch (const dasr::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
