// Copyright 2026 The dasr Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Permutation handling for N-output mask estimators: PIT loss, alignment of
// adjacent blocks over their shared frames, and crossfade stitching.

#ifndef DASR_MASKS_HPP
#define DASR_MASKS_HPP

#include <algorithm>
#include <limits>
#include <numeric>
#include <vector>

#include "dasr/signal.hpp"

namespace dasr {

// perm[i] names the source index placed at output position i.
using Permutation = std::vector<int>;

// All permutations of 0..n-1 in lexicographic order (identity first).
inline std::vector<Permutation> permutations_lexicographic(int n) {
  Permutation p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), 0);
  std::vector<Permutation> all;
  do {
    all.push_back(p);
  } while (std::next_permutation(p.begin(), p.end()));
  return all;
}

inline Permutation identity_permutation(int n) {
  Permutation p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), 0);
  return p;
}

inline Permutation inverse(const Permutation& p) {
  Permutation inv(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) inv[static_cast<std::size_t>(p[i])] = static_cast<int>(i);
  return inv;
}

// (a o b)[i] = a[b[i]]
inline Permutation compose(const Permutation& a, const Permutation& b) {
  Permutation c(b.size());
  for (std::size_t i = 0; i < b.size(); ++i) c[i] = a[static_cast<std::size_t>(b[i])];
  return c;
}

// out.speech[i] = m.speech[perm[i]]; the noise mask is untouched.
template <typename Scalar>
BasicMaskSet<Scalar> permute_speech(const BasicMaskSet<Scalar>& m,
                                    const Permutation& perm) {
  if (static_cast<Index>(perm.size()) != m.num_streams())
    throw InvalidInput("permutation size does not match stream count");
  BasicMaskSet<Scalar> out;
  out.noise = m.noise;
  out.speech.reserve(perm.size());
  for (int src : perm) out.speech.push_back(m.speech.at(static_cast<std::size_t>(src)));
  return out;
}

namespace detail {

// cost(i, j) = MSE(a_i .* mag, b_j .* mag) over the given frame windows.
template <typename Scalar, typename DerivedMag>
Matrix<Scalar> pairwise_mse(const std::vector<Matrix<Scalar>>& a, Index a_start,
                            const std::vector<Matrix<Scalar>>& b, Index b_start,
                            Index frames, const Eigen::MatrixBase<DerivedMag>& mag) {
  const Index n = static_cast<Index>(a.size());
  const Scalar count = static_cast<Scalar>(frames * mag.cols());
  Matrix<Scalar> cost(n, n);
  for (Index i = 0; i < n; ++i) {
    const Matrix<Scalar> ai =
        a[static_cast<std::size_t>(i)].middleRows(a_start, frames).cwiseProduct(mag);
    for (Index j = 0; j < n; ++j) {
      cost(i, j) = (ai - b[static_cast<std::size_t>(j)].middleRows(b_start, frames).cwiseProduct(mag))
                       .squaredNorm() / count;
    }
  }
  return cost;
}

// Exhaustive search; strict comparison keeps the lexicographically first
// permutation among ties.
template <typename Scalar>
std::pair<Scalar, Permutation> best_permutation(const Matrix<Scalar>& cost) {
  const int n = static_cast<int>(cost.rows());
  Scalar best = std::numeric_limits<Scalar>::infinity();
  Permutation best_perm = identity_permutation(n);
  for (const auto& p : permutations_lexicographic(n)) {
    Scalar total(0);
    for (int i = 0; i < n; ++i) total += cost(i, p[static_cast<std::size_t>(i)]);
    if (total < best) {
      best = total;
      best_perm = p;
    }
  }
  return {best, best_perm};
}

}  // namespace detail

template <typename Scalar>
struct PitResult {
  Scalar loss;
  // estimated.speech[i] is matched with reference.speech[permutation[i]].
  Permutation permutation;
};

// Permutation-invariant MSE on masked magnitudes. The noise mask is
// compared without permutation and added to the speech term.
template <typename Scalar, typename DerivedMag>
PitResult<Scalar> pit_loss(const BasicMaskSet<Scalar>& estimated,
                           const BasicMaskSet<Scalar>& reference,
                           const Eigen::MatrixBase<DerivedMag>& mixture_magnitude) {
  if (estimated.num_streams() != reference.num_streams() || estimated.num_streams() < 1)
    throw InvalidInput("PIT: stream counts differ");
  const Index frames = mixture_magnitude.rows(), bins = mixture_magnitude.cols();
  require_shape(estimated, frames, bins);
  require_shape(reference, frames, bins);
  if ((mixture_magnitude.array() < Scalar(0)).any())
    throw InvalidInput("PIT: mixture magnitude must be nonnegative");

  const Matrix<Scalar> cost = detail::pairwise_mse(estimated.speech, 0, reference.speech,
                                                   0, frames, mixture_magnitude);
  auto [speech_loss, perm] = detail::best_permutation(cost);
  const Scalar noise_loss =
      (estimated.noise - reference.noise).cwiseProduct(mixture_magnitude).squaredNorm() /
      static_cast<Scalar>(frames * bins);
  return {speech_loss + noise_loss, std::move(perm)};
}

// Orders next's speech masks to best match prev over the frames the two
// blocks share: the last overlap_frames of prev and the first overlap_frames
// of next. overlap_magnitude is the mixture magnitude on those frames.
// Applying the result via permute_speech(next, p) aligns next to prev.
template <typename Scalar, typename DerivedMag>
Permutation align_adjacent(const BasicMaskSet<Scalar>& prev,
                           const BasicMaskSet<Scalar>& next,
                           const Eigen::MatrixBase<DerivedMag>& overlap_magnitude,
                           Index overlap_frames) {
  if (overlap_frames <= 0) throw InvalidInput("alignment needs a nonzero overlap");
  if (prev.num_streams() != next.num_streams())
    throw InvalidInput("alignment: stream counts differ");
  if (prev.frames() < overlap_frames || next.frames() < overlap_frames)
    throw InvalidInput("alignment: overlap longer than a block");
  if (overlap_magnitude.rows() != overlap_frames || overlap_magnitude.cols() != prev.num_bins() ||
      next.num_bins() != prev.num_bins())
    throw InvalidInput("alignment: magnitude shape mismatch");
  const Matrix<Scalar> cost =
      detail::pairwise_mse(prev.speech, prev.frames() - overlap_frames, next.speech, 0,
                           overlap_frames, overlap_magnitude);
  return detail::best_permutation(cost).second;
}

template <typename Scalar>
struct BasicMaskBlock {
  Index start_frame = 0;
  BasicMaskSet<Scalar> masks;

  Index end_frame() const { return start_frame + masks.frames(); }
};

using MaskBlock = BasicMaskBlock<double>;

// Concatenates blocks (already permutation-aligned) into one mask sequence.
// Frames covered by the running output and the incoming block are blended
// with a linear ramp toward the incoming block; others are copied verbatim.
template <typename Scalar>
BasicMaskSet<Scalar> stitch(const std::vector<BasicMaskBlock<Scalar>>& blocks) {
  if (blocks.empty()) throw InvalidInput("stitch: no blocks");
  const Index streams = blocks.front().masks.num_streams();
  const Index bins = blocks.front().masks.num_bins();
  if (blocks.front().start_frame != 0) throw InvalidInput("stitch: first block must start at frame 0");
  Index total = 0;
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    const auto& b = blocks[k];
    if (b.masks.num_streams() != streams || b.masks.num_bins() != bins)
      throw InvalidInput("stitch: blocks disagree in shape");
    require_shape(b.masks, b.masks.frames(), bins);
    if (k > 0 && b.start_frame < blocks[k - 1].start_frame)
      throw InvalidInput("stitch: blocks not sorted by start frame");
    if (b.start_frame > total) throw InvalidInput("stitch: gap between blocks");
    total = std::max(total, b.end_frame());
  }

  auto out = BasicMaskSet<Scalar>::zeros(streams, total, bins);
  Index written = 0;
  auto blend = [&](Matrix<Scalar>& dst, const Matrix<Scalar>& src, Index start,
                   Index shared) {
    for (Index j = 0; j < src.rows(); ++j) {
      const Index t = start + j;
      if (j < shared) {
        const Scalar w = static_cast<Scalar>(j + 1) / static_cast<Scalar>(shared + 1);
        dst.row(t) += w * (src.row(j) - dst.row(t));
      } else {
        dst.row(t) = src.row(j);
      }
    }
  };
  for (const auto& b : blocks) {
    const Index shared = std::min(written - b.start_frame, b.masks.frames());
    for (Index i = 0; i < streams; ++i)
      blend(out.speech[static_cast<std::size_t>(i)], b.masks.speech[static_cast<std::size_t>(i)],
            b.start_frame, shared);
    blend(out.noise, b.masks.noise, b.start_frame, shared);
    written = std::max(written, b.end_frame());
  }
  return out;
}

template <typename Scalar>
struct BasicAlignedBlocks {
  std::vector<BasicMaskBlock<Scalar>> blocks;
  // Permutation applied to each raw block (identity for the first).
  std::vector<Permutation> permutations;
};

// Left-to-right fold: each block is aligned against its already aligned
// predecessor. magnitude is the full-length mixture magnitude used for the
// masked-magnitude comparison.
template <typename Scalar, typename DerivedMag>
BasicAlignedBlocks<Scalar> align_blocks(std::vector<BasicMaskBlock<Scalar>> blocks,
                                        const Eigen::MatrixBase<DerivedMag>& magnitude) {
  BasicAlignedBlocks<Scalar> out;
  if (blocks.empty()) return out;
  out.permutations.push_back(identity_permutation(static_cast<int>(blocks.front().masks.num_streams())));
  out.blocks.push_back(std::move(blocks.front()));
  for (std::size_t k = 1; k < blocks.size(); ++k) {
    const auto& prev = out.blocks.back();
    auto& next = blocks[k];
    const Index shared = prev.end_frame() - next.start_frame;
    if (shared <= 0) throw InvalidInput("align_blocks: adjacent blocks do not overlap");
    const Index overlap = std::min(shared, next.masks.frames());
    // Restrict prev to the frames it shares with next.
    const BasicMaskSet<Scalar> prev_view =
        prev.masks.frames_slice(next.start_frame - prev.start_frame, overlap);
    const Permutation p = align_adjacent(prev_view, next.masks,
                                         magnitude.middleRows(next.start_frame, overlap), overlap);
    next.masks = permute_speech(next.masks, p);
    out.permutations.push_back(p);
    out.blocks.push_back(std::move(next));
  }
  return out;
}

}  // namespace dasr

#endif  // DASR_MASKS_HPP
