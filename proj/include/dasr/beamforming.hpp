// Copyright 2026 The dasr Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Mask-weighted spatial covariance estimation and the reference-channel
// MVDR beamformer.

#ifndef DASR_BEAMFORMING_HPP
#define DASR_BEAMFORMING_HPP

#include <cmath>
#include <complex>
#include <vector>

#include "dasr/signal.hpp"

namespace dasr {

template <typename Scalar>
struct BasicScm {
  using Complex = std::complex<Scalar>;
  // One (channels x channels) Hermitian matrix per frequency bin.
  std::vector<Matrix<Complex>> matrices;
  // True where the mask summed to zero and the matrix is left at zero.
  std::vector<bool> degenerate;

  Index num_bins() const { return static_cast<Index>(matrices.size()); }
  Index channels() const { return matrices.empty() ? 0 : matrices.front().rows(); }
};

using Scm = BasicScm<double>;

// Phi(f) = sum_t m(t,f) x(t,f) x(t,f)^H / sum_t m(t,f)
template <typename Scalar, typename DerivedMask>
BasicScm<Scalar> compute_scm(const BasicSpectrogram<Scalar>& s,
                             const Eigen::MatrixBase<DerivedMask>& mask) {
  using Complex = std::complex<Scalar>;
  if (s.channels() < 1) throw InvalidInput("SCM needs at least one channel");
  if (mask.rows() != s.frames() || mask.cols() != s.num_bins())
    throw InvalidInput("SCM: mask shape does not match spectrogram");
  const Index channels = s.channels(), frames = s.frames();
  BasicScm<Scalar> scm;
  scm.matrices.reserve(static_cast<std::size_t>(s.num_bins()));
  scm.degenerate.reserve(static_cast<std::size_t>(s.num_bins()));
  Matrix<Complex> x(channels, frames);
  for (Index f = 0; f < s.num_bins(); ++f) {
    const Scalar weight = mask.col(f).sum();
    if (!(weight > Scalar(0))) {
      scm.matrices.push_back(Matrix<Complex>::Zero(channels, channels));
      scm.degenerate.push_back(true);
      continue;
    }
    for (Index c = 0; c < channels; ++c)
      x.row(c) = s.bins[static_cast<std::size_t>(c)].col(f).transpose();
    const Matrix<Complex> weighted =
        x * mask.col(f).template cast<Complex>().asDiagonal();
    Matrix<Complex> phi = weighted * x.adjoint() / Complex(weight);
    phi = (Scalar(0.5) * (phi + phi.adjoint())).eval();
    scm.matrices.push_back(std::move(phi));
    scm.degenerate.push_back(false);
  }
  return scm;
}

template <typename Scalar>
struct BasicMvdrWeights {
  // bins x channels; row f is w(f)^T.
  Matrix<std::complex<Scalar>> weights;
  // True where the solve or the trace normalization failed; weights are zero.
  std::vector<bool> flagged;

  Index num_bins() const { return weights.rows(); }
  Index channels() const { return weights.cols(); }
};

using MvdrWeights = BasicMvdrWeights<double>;

// w(f) = (Phi_i^-1 Phi_t / tr(Phi_i^-1 Phi_t)) e_ref, with Phi_i loaded by
// loading * tr(Phi_i) / channels on the diagonal before the solve.
template <typename Scalar>
BasicMvdrWeights<Scalar> mvdr_weights(const BasicScm<Scalar>& target,
                                      const BasicScm<Scalar>& interference,
                                      Index ref_channel, Scalar loading) {
  using Complex = std::complex<Scalar>;
  if (target.num_bins() != interference.num_bins() ||
      target.channels() != interference.channels())
    throw InvalidInput("MVDR: SCM dimensions differ");
  const Index m = target.channels(), bins = target.num_bins();
  if (ref_channel < 0 || ref_channel >= m) throw InvalidInput("MVDR: reference channel out of range");
  if (loading < Scalar(0)) throw InvalidInput("MVDR: diagonal loading must be nonnegative");

  BasicMvdrWeights<Scalar> out;
  out.weights = Matrix<Complex>::Zero(bins, m);
  out.flagged.assign(static_cast<std::size_t>(bins), false);
  if (m == 1) {
    out.weights.setOnes();
    return out;
  }
  for (Index f = 0; f < bins; ++f) {
    const auto& phi_t = target.matrices[static_cast<std::size_t>(f)];
    Matrix<Complex> phi_i = interference.matrices[static_cast<std::size_t>(f)];
    const Scalar ridge = loading * std::real(phi_i.trace()) / static_cast<Scalar>(m);
    phi_i.diagonal().array() += Complex(ridge);
    const Matrix<Complex> numer = phi_i.ldlt().solve(phi_t);
    const Complex tr = numer.trace();
    const Scalar scale = numer.cwiseAbs().maxCoeff();
    if (!numer.allFinite() || !std::isfinite(std::abs(tr)) ||
        std::abs(tr) <= Scalar(1e-12) * scale || scale == Scalar(0)) {
      out.flagged[static_cast<std::size_t>(f)] = true;
      continue;
    }
    out.weights.row(f) = (numer.col(ref_channel) / tr).transpose();
  }
  return out;
}

// y(t,f) = w(f)^H x(t,f)
template <typename Scalar>
BasicSpectrogram<Scalar> beamform(const BasicSpectrogram<Scalar>& s,
                                  const BasicMvdrWeights<Scalar>& w) {
  using Complex = std::complex<Scalar>;
  if (w.channels() != s.channels() || w.num_bins() != s.num_bins())
    throw InvalidInput("beamform: weight dimensions do not match spectrogram");
  Matrix<Complex> y = Matrix<Complex>::Zero(s.frames(), s.num_bins());
  for (Index c = 0; c < s.channels(); ++c)
    y += s.bins[static_cast<std::size_t>(c)] *
         w.weights.col(c).conjugate().asDiagonal();
  return BasicSpectrogram<Scalar>{{std::move(y)}, s.config, s.sample_rate};
}

}  // namespace dasr

#endif  // DASR_BEAMFORMING_HPP
