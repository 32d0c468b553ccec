// Copyright 2026 The dasr Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Continuous speech separation: block-wise mask estimation, permutation
// alignment and stitching, then one output stream per speech mask via mask
// multiplication (one channel) or mask-based MVDR (array input).

#ifndef DASR_CSS_HPP
#define DASR_CSS_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dasr/beamforming.hpp"
#include "dasr/masks.hpp"
#include "dasr/signal.hpp"
#include "dasr/simulator.hpp"

namespace dasr {

// Source of N speech masks and one noise mask for a block of frames.
class MaskEstimator {
 public:
  virtual ~MaskEstimator() = default;

  // segment holds the block's frames for every processed channel;
  // start_frame is the block's first frame in the padded stream. The result
  // must cover exactly segment.frames() frames.
  virtual MaskSet estimate(const Spectrogram& segment, Index start_frame) = 0;

  virtual Index num_streams() const = 0;

  // Estimators that tolerate concurrent estimate() calls return true.
  virtual bool concurrent_safe() const { return false; }
};

// Ideal ratio masks from a supervision bundle:
//   m_i = |S_i| / (sum_j |S_j| + |N| + eps)
// where S_i is speaker i's direct+early image on the reference channel.
// The noise mask uses |N| in the numerator. Streams beyond the bundle's
// speaker count get all-zero masks.
class OracleIrmEstimator : public MaskEstimator {
 public:
  OracleIrmEstimator(const SupervisionBundle& bundle, const StftConfig& stft,
                     Index num_streams, Index ref_channel = 0, double eps = 1e-10);

  // Applies a seeded random speech-mask permutation to every block, the way
  // an unconstrained network would. Used to exercise alignment.
  void shuffle_blocks(std::uint64_t seed) { shuffle_seed_ = seed; }

  MaskSet estimate(const Spectrogram& segment, Index start_frame) override;
  Index num_streams() const override { return masks_.num_streams(); }
  bool concurrent_safe() const override { return true; }

  // Full-length masks in the padded frame domain.
  const MaskSet& full_masks() const { return masks_; }

 private:
  MaskSet masks_;
  std::optional<std::uint64_t> shuffle_seed_;
};

// Ideal ratio masks over the padded STFT of the bundle (see OracleIrmEstimator).
MaskSet ideal_ratio_masks(const SupervisionBundle& bundle, const StftConfig& stft,
                          Index num_streams, Index ref_channel = 0, double eps = 1e-10);

enum class CssMode { kSingleChannel, kMultiChannel };

struct CssConfig {
  Index segment_frames = 150;
  Index overlap_frames = 75;
  Index num_streams = 3;
  CssMode mode = CssMode::kSingleChannel;
  double diagonal_loading = 1e-6;
  Index ref_channel = 0;
  StftConfig stft;
};

void validate(const CssConfig& cfg);

struct BlockSpan {
  Index start_frame = 0;
  Index frames = 0;
};

// Fixed-length blocks stepping by segment - overlap; the last block is cut
// at the end of the stream.
std::vector<BlockSpan> block_schedule(Index total_frames, const CssConfig& cfg);

struct CssBlockRecord {
  Index start_frame = 0;
  Index frames = 0;
  Permutation permutation;
};

struct CssResult {
  std::vector<Waveform> streams;  // num_streams, each the mixture's length
  MaskSet masks;                  // stitched, padded frame domain
  std::vector<CssBlockRecord> blocks;
  StftPadding padding;
  Index flagged_bins = 0;         // MVDR bins with zero weights, all streams
};

CssResult css_pipeline(const Waveform& mixture, MaskEstimator& estimator, const CssConfig& cfg);

// Writes <meeting_id>_stream<k>.wav for every stream plus
// <meeting_id>_css.json with the block boundaries and permutations.
void write_css_outputs(const std::string& dir, const std::string& meeting_id,
                       const CssResult& result, const CssConfig& cfg);

}  // namespace dasr

#endif  // DASR_CSS_HPP
