// Copyright 2026 The dasr Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dasr/css.hpp"

#include <filesystem>
#include <fstream>
#include <random>

#include <json.hpp>

#include "dasr/wav.hpp"

namespace dasr {

MaskSet ideal_ratio_masks(const SupervisionBundle& bundle, const StftConfig& stft_cfg,
                          Index num_streams, Index ref_channel, double eps) {
  if (bundle.num_speakers() > num_streams)
    throw InvalidInput("bundle has more speakers than output streams");
  if (ref_channel < 0 || ref_channel >= bundle.mixture.channels())
    throw InvalidInput("reference channel out of range for the bundle");
  const StftPadding padding = stft_padding(bundle.mixture.num_samples(), stft_cfg);
  auto magnitude = [&](const Waveform& w) {
    return stft(pad(w.channel(ref_channel), padding), stft_cfg).magnitude(0);
  };
  const Matrix<double> noise = magnitude(bundle.noise);
  std::vector<Matrix<double>> speech;
  Matrix<double> denom = noise.array() + eps;
  for (const auto& de : bundle.direct_early) {
    speech.push_back(magnitude(de));
    denom += speech.back();
  }
  MaskSet m = MaskSet::zeros(num_streams, noise.rows(), noise.cols());
  for (std::size_t i = 0; i < speech.size(); ++i) m.speech[i] = speech[i].cwiseQuotient(denom);
  m.noise = noise.cwiseQuotient(denom);
  return m;
}

OracleIrmEstimator::OracleIrmEstimator(const SupervisionBundle& bundle, const StftConfig& stft,
                                       Index num_streams, Index ref_channel, double eps)
    : masks_(ideal_ratio_masks(bundle, stft, num_streams, ref_channel, eps)) {}

MaskSet OracleIrmEstimator::estimate(const Spectrogram& segment, Index start_frame) {
  if (start_frame < 0 || start_frame + segment.frames() > masks_.frames())
    throw InvalidInput("oracle estimator: block outside the supervised range");
  MaskSet block = masks_.frames_slice(start_frame, segment.frames());
  if (shuffle_seed_) {
    std::mt19937_64 rng(derive_seed(*shuffle_seed_, static_cast<std::uint64_t>(start_frame)));
    Permutation p = identity_permutation(static_cast<int>(block.num_streams()));
    dasr::shuffle(p.begin(), p.end(), rng);
    block = permute_speech(block, p);
  }
  return block;
}

void validate(const CssConfig& cfg) {
  validate(cfg.stft);
  if (cfg.segment_frames < 2) throw ConfigError("segment_frames must be at least 2");
  if (cfg.overlap_frames <= 0 || cfg.overlap_frames >= cfg.segment_frames)
    throw ConfigError("overlap_frames must satisfy 0 < overlap < segment");
  if (cfg.num_streams < 2) throw ConfigError("CSS needs at least two output streams");
  if (cfg.diagonal_loading < 0.0) throw ConfigError("diagonal loading must be nonnegative");
  if (cfg.ref_channel < 0) throw ConfigError("reference channel must be nonnegative");
}

std::vector<BlockSpan> block_schedule(Index total_frames, const CssConfig& cfg) {
  std::vector<BlockSpan> blocks;
  const Index step = cfg.segment_frames - cfg.overlap_frames;
  Index start = 0;
  while (true) {
    const Index frames = std::min(cfg.segment_frames, total_frames - start);
    blocks.push_back({start, frames});
    if (start + cfg.segment_frames >= total_frames) break;
    start += step;
  }
  return blocks;
}

CssResult css_pipeline(const Waveform& mixture, MaskEstimator& estimator, const CssConfig& cfg) {
  validate(cfg);
  validate(mixture);
  if (mixture.sample_rate != kSampleRate)
    throw InvalidInput("CSS runs at 16 kHz; got " + std::to_string(mixture.sample_rate) + " Hz");
  if (cfg.mode == CssMode::kSingleChannel && mixture.channels() != 1)
    throw InvalidInput("single-channel CSS got " + std::to_string(mixture.channels()) + " channels");
  if (cfg.mode == CssMode::kMultiChannel && mixture.channels() < 2)
    throw InvalidInput("multi-channel CSS needs at least two channels");
  if (cfg.ref_channel >= mixture.channels()) throw InvalidInput("reference channel out of range");
  const Index ref = cfg.mode == CssMode::kSingleChannel ? 0 : cfg.ref_channel;

  CssResult result;
  result.padding = stft_padding(mixture.num_samples(), cfg.stft);
  const Spectrogram x = stft(pad(mixture, result.padding), cfg.stft);
  const Matrix<double> ref_magnitude = x.magnitude(ref);

  std::vector<MaskBlock> blocks;
  for (const BlockSpan& span : block_schedule(x.frames(), cfg)) {
    MaskSet m = estimator.estimate(x.frames_slice(span.start_frame, span.frames), span.start_frame);
    if (m.num_streams() != cfg.num_streams)
      throw InvalidInput("estimator returned " + std::to_string(m.num_streams()) +
                         " speech masks, expected " + std::to_string(cfg.num_streams));
    require_shape(m, span.frames, x.num_bins());
    clamp_masks(m);
    blocks.push_back({span.start_frame, std::move(m)});
  }

  auto aligned = align_blocks(std::move(blocks), ref_magnitude);
  for (std::size_t k = 0; k < aligned.blocks.size(); ++k)
    result.blocks.push_back({aligned.blocks[k].start_frame, aligned.blocks[k].masks.frames(),
                             aligned.permutations[k]});
  result.masks = stitch(aligned.blocks);

  for (Index i = 0; i < cfg.num_streams; ++i) {
    const Matrix<double>& target = result.masks.speech[static_cast<std::size_t>(i)];
    Spectrogram y;
    if (cfg.mode == CssMode::kSingleChannel) {
      y = apply_mask(x, target);
    } else {
      Matrix<double> interference = result.masks.noise;
      for (Index j = 0; j < cfg.num_streams; ++j)
        if (j != i) interference += result.masks.speech[static_cast<std::size_t>(j)];
      interference = interference.cwiseMax(0.0).cwiseMin(1.0);
      const Scm phi_t = compute_scm(x, target);
      const Scm phi_i = compute_scm(x, interference);
      const MvdrWeights w = mvdr_weights(phi_t, phi_i, ref, cfg.diagonal_loading);
      for (bool f : w.flagged) result.flagged_bins += f ? 1 : 0;
      y = beamform(x, w);
    }
    result.streams.push_back(crop(istft(y), result.padding.front, mixture.num_samples()));
  }
  return result;
}

void write_css_outputs(const std::string& dir, const std::string& meeting_id,
                       const CssResult& result, const CssConfig& cfg) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  for (std::size_t k = 0; k < result.streams.size(); ++k)
    write_wav((fs::path(dir) / (meeting_id + "_stream" + std::to_string(k) + ".wav")).string(),
              result.streams[k]);
  nlohmann::json j;
  j["meeting_id"] = meeting_id;
  j["mode"] = cfg.mode == CssMode::kSingleChannel ? "single-channel" : "multi-channel";
  j["num_streams"] = cfg.num_streams;
  j["window_length"] = cfg.stft.window_length;
  j["hop_length"] = cfg.stft.hop_length;
  j["window"] = to_string(cfg.stft.window);
  j["pad_front_samples"] = result.padding.front;
  j["flagged_bins"] = result.flagged_bins;
  j["blocks"] = nlohmann::json::array();
  for (const auto& b : result.blocks)
    j["blocks"].push_back({{"start_frame", b.start_frame},
                           {"frames", b.frames},
                           {"permutation", b.permutation}});
  std::ofstream out(fs::path(dir) / (meeting_id + "_css.json"));
  out << j.dump(2) << '\n';
  if (!out) throw IoError("cannot write CSS sidecar in " + dir);
}

}  // namespace dasr
