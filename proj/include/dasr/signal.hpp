// Copyright 2026 The dasr Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Time/frequency primitives: multichannel waveforms, STFT analysis and
// weighted overlap-add synthesis, real-valued T-F masks.
//
// Everything here is templated on the real scalar type. The rest of the
// library instantiates with double; float works for the same code paths.

#ifndef DASR_SIGNAL_HPP
#define DASR_SIGNAL_HPP

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

#include "dasr/common.hpp"

namespace dasr {

using Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
// channels x samples, each channel contiguous.
template <typename Scalar>
using ChannelMatrix =
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
struct BasicWaveform {
  ChannelMatrix<Scalar> samples;
  int sample_rate = kSampleRate;

  BasicWaveform() = default;
  explicit BasicWaveform(ChannelMatrix<Scalar> s, int rate = kSampleRate)
      : samples(std::move(s)), sample_rate(rate) {}

  static BasicWaveform zeros(Index channels, Index length,
                             int rate = kSampleRate) {
    return BasicWaveform(ChannelMatrix<Scalar>::Zero(channels, length), rate);
  }

  template <typename Derived>
  static BasicWaveform mono(const Eigen::MatrixBase<Derived>& x,
                            int rate = kSampleRate) {
    ChannelMatrix<Scalar> s(1, x.size());
    s.row(0) = x.transpose();
    return BasicWaveform(std::move(s), rate);
  }

  Index channels() const { return samples.rows(); }
  Index num_samples() const { return samples.cols(); }
  double duration_s() const {
    return static_cast<double>(num_samples()) / sample_rate;
  }

  BasicWaveform channel(Index c) const {
    return BasicWaveform(samples.row(c), sample_rate);
  }

  Scalar energy() const { return samples.squaredNorm(); }
};

using Waveform = BasicWaveform<double>;

template <typename Scalar>
void validate(const BasicWaveform<Scalar>& w) {
  if (w.channels() < 1) throw InvalidInput("waveform has no channels");
  if (w.sample_rate <= 0) throw InvalidInput("sample rate must be positive");
  if (!w.samples.allFinite()) throw InvalidInput("waveform has non-finite samples");
}

template <typename ScalarA, typename ScalarB>
void require_same_rate(const BasicWaveform<ScalarA>& a,
                       const BasicWaveform<ScalarB>& b) {
  if (a.sample_rate != b.sample_rate)
    throw InvalidInput("sample rates differ: " + std::to_string(a.sample_rate) +
                       " vs " + std::to_string(b.sample_rate));
}

enum class WindowType { kSqrtHann, kHann, kRectangular };

std::string to_string(WindowType w);
WindowType window_from_string(const std::string& name);

struct StftConfig {
  Index window_length = 512;
  Index hop_length = 256;
  WindowType window = WindowType::kSqrtHann;

  Index num_bins() const { return window_length / 2 + 1; }
  Index num_frames(Index num_samples) const {
    return num_samples < window_length
               ? 0
               : (num_samples - window_length) / hop_length + 1;
  }
  friend bool operator==(const StftConfig&, const StftConfig&) = default;
};

// Periodic windows; the same window is used for analysis and synthesis.
template <typename Scalar>
Vector<Scalar> make_window(const StftConfig& cfg) {
  const Index n = cfg.window_length;
  Vector<Scalar> w(n);
  for (Index i = 0; i < n; ++i) {
    const double hann =
        0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                             static_cast<double>(n));
    switch (cfg.window) {
      case WindowType::kSqrtHann: w(i) = static_cast<Scalar>(std::sqrt(hann)); break;
      case WindowType::kHann: w(i) = static_cast<Scalar>(hann); break;
      case WindowType::kRectangular: w(i) = Scalar(1); break;
    }
  }
  return w;
}

// Sum of squared shifted windows over one hop period. Constant for a
// constant-overlap-add pair; strictly positive is what reconstruction needs.
template <typename Scalar>
Vector<Scalar> overlap_add_profile(const StftConfig& cfg) {
  const Vector<Scalar> w = make_window<Scalar>(cfg);
  Vector<Scalar> profile = Vector<Scalar>::Zero(cfg.hop_length);
  for (Index i = 0; i < cfg.window_length; ++i)
    profile(i % cfg.hop_length) += w(i) * w(i);
  return profile;
}

inline void validate(const StftConfig& cfg) {
  if (cfg.window_length < 2 || cfg.window_length % 2 != 0)
    throw InvalidInput("window_length must be even and >= 2");
  if (cfg.hop_length < 1 || cfg.window_length % cfg.hop_length != 0)
    throw InvalidInput("hop_length must divide window_length");
  const Vector<double> profile = overlap_add_profile<double>(cfg);
  if (profile.minCoeff() <= 1e-8 * profile.maxCoeff())
    throw InvalidInput("window/hop pair does not allow perfect reconstruction");
}

template <typename Scalar>
struct BasicSpectrogram {
  using Complex = std::complex<Scalar>;
  // One (frames x bins) matrix per channel.
  std::vector<Matrix<Complex>> bins;
  StftConfig config;
  int sample_rate = kSampleRate;

  Index channels() const { return static_cast<Index>(bins.size()); }
  Index frames() const { return bins.empty() ? 0 : bins.front().rows(); }
  Index num_bins() const { return bins.empty() ? 0 : bins.front().cols(); }

  BasicSpectrogram channel(Index c) const {
    return BasicSpectrogram{{bins.at(static_cast<std::size_t>(c))}, config, sample_rate};
  }

  BasicSpectrogram frames_slice(Index start, Index count) const {
    BasicSpectrogram out{{}, config, sample_rate};
    out.bins.reserve(bins.size());
    for (const auto& b : bins) out.bins.push_back(b.middleRows(start, count));
    return out;
  }

  Matrix<Scalar> magnitude(Index c) const {
    return bins.at(static_cast<std::size_t>(c)).cwiseAbs();
  }
};

using Spectrogram = BasicSpectrogram<double>;

template <typename Scalar>
struct BasicMaskSet {
  std::vector<Matrix<Scalar>> speech;
  Matrix<Scalar> noise;

  Index num_streams() const { return static_cast<Index>(speech.size()); }
  Index frames() const { return noise.rows(); }
  Index num_bins() const { return noise.cols(); }

  static BasicMaskSet zeros(Index streams, Index frames, Index bins) {
    BasicMaskSet m;
    m.speech.assign(static_cast<std::size_t>(streams),
                    Matrix<Scalar>::Zero(frames, bins));
    m.noise = Matrix<Scalar>::Zero(frames, bins);
    return m;
  }

  BasicMaskSet frames_slice(Index start, Index count) const {
    BasicMaskSet out;
    for (const auto& s : speech) out.speech.push_back(s.middleRows(start, count));
    out.noise = noise.middleRows(start, count);
    return out;
  }
};

using MaskSet = BasicMaskSet<double>;

template <typename Scalar>
void require_shape(const BasicMaskSet<Scalar>& m, Index frames, Index bins) {
  if (m.noise.rows() != frames || m.noise.cols() != bins)
    throw InvalidInput("noise mask shape mismatch");
  for (const auto& s : m.speech)
    if (s.rows() != frames || s.cols() != bins)
      throw InvalidInput("speech mask shape mismatch");
}

// Clamps every mask value into [0, 1]. Returns the number of values changed
// and warns when it is nonzero. NaNs are mapped to 0.
template <typename Scalar>
Index clamp_masks(BasicMaskSet<Scalar>& m) {
  Index changed = 0;
  auto clamp = [&changed](Matrix<Scalar>& x) {
    for (Index i = 0; i < x.size(); ++i) {
      Scalar& v = x.data()[i];
      if (std::isnan(v)) {
        v = Scalar(0);
        ++changed;
      } else if (v < Scalar(0) || v > Scalar(1)) {
        v = std::clamp(v, Scalar(0), Scalar(1));
        ++changed;
      }
    }
  };
  for (auto& s : m.speech) clamp(s);
  clamp(m.noise);
  if (changed > 0)
    warn("clamped " + std::to_string(changed) + " mask values into [0, 1]");
  return changed;
}

namespace detail {
template <typename Scalar>
Eigen::FFT<Scalar>& thread_fft() {
  thread_local Eigen::FFT<Scalar> fft = [] {
    Eigen::FFT<Scalar> f;
    f.SetFlag(Eigen::FFT<Scalar>::HalfSpectrum);
    return f;
  }();
  return fft;
}
}  // namespace detail

template <typename Scalar>
BasicSpectrogram<Scalar> stft(const BasicWaveform<Scalar>& w,
                              const StftConfig& cfg) {
  validate(cfg);
  validate(w);
  const Index n = cfg.window_length;
  if (w.num_samples() < n)
    throw InvalidInput("signal shorter than one analysis window");
  const Index frames = cfg.num_frames(w.num_samples());
  const Vector<Scalar> window = make_window<Scalar>(cfg);
  auto& fft = detail::thread_fft<Scalar>();

  BasicSpectrogram<Scalar> out{{}, cfg, w.sample_rate};
  out.bins.reserve(static_cast<std::size_t>(w.channels()));
  Vector<Scalar> buf(n);
  Vector<std::complex<Scalar>> spec(cfg.num_bins());
  for (Index c = 0; c < w.channels(); ++c) {
    Matrix<std::complex<Scalar>> m(frames, cfg.num_bins());
    for (Index t = 0; t < frames; ++t) {
      buf = w.samples.row(c).segment(t * cfg.hop_length, n).transpose().cwiseProduct(window);
      fft.fwd(spec.data(), buf.data(), n);
      m.row(t) = spec.transpose();
    }
    out.bins.push_back(std::move(m));
  }
  return out;
}

// Weighted overlap-add. Output length is (frames - 1) * hop + window_length.
// Samples whose window overlap is incomplete (the first and last
// window_length - hop) are normalized by the partial window sum.
template <typename Scalar>
BasicWaveform<Scalar> istft(const BasicSpectrogram<Scalar>& s) {
  const StftConfig& cfg = s.config;
  validate(cfg);
  if (s.channels() < 1) throw InvalidInput("spectrogram has no channels");
  for (const auto& b : s.bins)
    if (b.cols() != cfg.num_bins() || b.rows() != s.frames())
      throw InvalidInput("spectrogram shape inconsistent with its config");
  const Index n = cfg.window_length;
  const Index frames = s.frames();
  if (frames == 0) return BasicWaveform<Scalar>::zeros(s.channels(), 0, s.sample_rate);
  const Index length = (frames - 1) * cfg.hop_length + n;
  const Vector<Scalar> window = make_window<Scalar>(cfg);

  Vector<Scalar> norm = Vector<Scalar>::Zero(length);
  for (Index t = 0; t < frames; ++t)
    norm.segment(t * cfg.hop_length, n) += window.cwiseAbs2();
  const Scalar floor = norm.maxCoeff() * Scalar(1e-10);

  auto& fft = detail::thread_fft<Scalar>();
  auto out = BasicWaveform<Scalar>::zeros(s.channels(), length, s.sample_rate);
  Vector<Scalar> frame(n);
  Vector<std::complex<Scalar>> spec(cfg.num_bins());
  for (Index c = 0; c < s.channels(); ++c) {
    const auto& b = s.bins[static_cast<std::size_t>(c)];
    for (Index t = 0; t < frames; ++t) {
      spec = b.row(t).transpose();
      // Real signals: DC and Nyquist are real.
      spec(0) = std::real(spec(0));
      spec(cfg.num_bins() - 1) = std::real(spec(cfg.num_bins() - 1));
      fft.inv(frame.data(), spec.data(), n);
      out.samples.row(c).segment(t * cfg.hop_length, n) +=
          frame.cwiseProduct(window).transpose();
    }
    for (Index i = 0; i < length; ++i)
      out.samples(c, i) = norm(i) > floor ? out.samples(c, i) / norm(i) : Scalar(0);
  }
  return out;
}

// Zero padding that puts every original sample in the fully overlapped
// interior and makes the padded length land on a frame boundary.
struct StftPadding {
  Index front = 0;
  Index back = 0;
};

inline StftPadding stft_padding(Index num_samples, const StftConfig& cfg) {
  StftPadding p;
  p.front = cfg.window_length - cfg.hop_length;
  Index total = p.front + num_samples + (cfg.window_length - cfg.hop_length);
  total = std::max(total, cfg.window_length);
  const Index rem = (total - cfg.window_length) % cfg.hop_length;
  if (rem != 0) total += cfg.hop_length - rem;
  p.back = total - p.front - num_samples;
  return p;
}

template <typename Scalar>
BasicWaveform<Scalar> pad(const BasicWaveform<Scalar>& w, const StftPadding& p) {
  auto out = BasicWaveform<Scalar>::zeros(w.channels(),
                                          p.front + w.num_samples() + p.back,
                                          w.sample_rate);
  out.samples.middleCols(p.front, w.num_samples()) = w.samples;
  return out;
}

template <typename Scalar>
BasicWaveform<Scalar> crop(const BasicWaveform<Scalar>& w, Index start, Index length) {
  return BasicWaveform<Scalar>(w.samples.middleCols(start, length), w.sample_rate);
}

// Per-channel elementwise product with a real mask.
template <typename Scalar, typename Derived>
BasicSpectrogram<Scalar> apply_mask(const BasicSpectrogram<Scalar>& s,
                                    const Eigen::MatrixBase<Derived>& mask) {
  if (mask.rows() != s.frames() || mask.cols() != s.num_bins())
    throw InvalidInput("mask shape does not match spectrogram");
  BasicSpectrogram<Scalar> out{{}, s.config, s.sample_rate};
  out.bins.reserve(s.bins.size());
  for (const auto& b : s.bins)
    out.bins.push_back(b.cwiseProduct(mask.template cast<std::complex<Scalar>>()));
  return out;
}

template <typename Scalar>
Scalar energy(const BasicSpectrogram<Scalar>& s) {
  Scalar e(0);
  for (const auto& b : s.bins) e += b.squaredNorm();
  return e;
}

// Parseval for a one-sided spectrum of an even-length real frame: the
// time-domain energy of the windowed frame.
template <typename Scalar>
Scalar frame_energy(const BasicSpectrogram<Scalar>& s, Index channel, Index frame) {
  const auto row = s.bins.at(static_cast<std::size_t>(channel)).row(frame);
  const Index last = row.size() - 1;
  Scalar e = std::norm(row(0)) + std::norm(row(last));
  for (Index k = 1; k < last; ++k) e += Scalar(2) * std::norm(row(k));
  return e / static_cast<Scalar>(s.config.window_length);
}

// Full linear convolution (length x.size() + h.size() - 1). Direct
// summation for short kernels, zero-padded FFT otherwise.
template <typename Scalar, typename DerivedX, typename DerivedH>
Vector<Scalar> convolve(const Eigen::MatrixBase<DerivedX>& x,
                        const Eigen::MatrixBase<DerivedH>& h) {
  const Index nx = x.size(), nh = h.size();
  if (nx == 0 || nh == 0) return Vector<Scalar>();
  const Index ny = nx + nh - 1;
  Vector<Scalar> y = Vector<Scalar>::Zero(ny);
  if (std::min(nx, nh) <= 64) {
    for (Index k = 0; k < nh; ++k)
      if (h(k) != Scalar(0)) y.segment(k, nx) += h(k) * x;
    return y;
  }
  Index nfft = 1;
  while (nfft < ny) nfft <<= 1;
  auto& fft = detail::thread_fft<Scalar>();
  Vector<Scalar> xp = Vector<Scalar>::Zero(nfft), hp = Vector<Scalar>::Zero(nfft);
  xp.head(nx) = x;
  hp.head(nh) = h;
  Vector<std::complex<Scalar>> fx(nfft / 2 + 1), fh(nfft / 2 + 1);
  fft.fwd(fx.data(), xp.data(), nfft);
  fft.fwd(fh.data(), hp.data(), nfft);
  fx = fx.cwiseProduct(fh);
  Vector<Scalar> full(nfft);
  fft.inv(full.data(), fx.data(), nfft);
  y = full.head(ny);
  return y;
}

// Convolves x with every row of `kernels` (full length, one output row per
// kernel). Overlap-add with FFT blocks sized to the kernels; the spectrum
// of each input block is shared by all kernels.
template <typename Scalar, typename DerivedX, typename DerivedK>
ChannelMatrix<Scalar> convolve_each(const Eigen::MatrixBase<DerivedX>& x,
                                    const Eigen::MatrixBase<DerivedK>& kernels) {
  const Index nx = x.size(), nh = kernels.cols(), rows = kernels.rows();
  if (nx == 0 || nh == 0) return ChannelMatrix<Scalar>(rows, 0);
  ChannelMatrix<Scalar> y = ChannelMatrix<Scalar>::Zero(rows, nx + nh - 1);
  if (nh <= 64) {
    for (Index r = 0; r < rows; ++r)
      y.row(r) = convolve<Scalar>(x, kernels.row(r).transpose()).transpose();
    return y;
  }
  Index nfft = 1024;
  while (nfft < 4 * nh) nfft <<= 1;
  const Index block = nfft - nh + 1;
  auto& fft = detail::thread_fft<Scalar>();
  using Spectrum = Vector<std::complex<Scalar>>;
  std::vector<Spectrum> hf(static_cast<std::size_t>(rows), Spectrum(nfft / 2 + 1));
  Vector<Scalar> buf = Vector<Scalar>::Zero(nfft);
  for (Index r = 0; r < rows; ++r) {
    buf.setZero();
    buf.head(nh) = kernels.row(r).transpose();
    fft.fwd(hf[static_cast<std::size_t>(r)].data(), buf.data(), nfft);
  }
  Spectrum xf(nfft / 2 + 1), prod(nfft / 2 + 1);
  Vector<Scalar> out(nfft);
  for (Index start = 0; start < nx; start += block) {
    const Index len = std::min(block, nx - start);
    buf.setZero();
    buf.head(len) = x.segment(start, len);
    fft.fwd(xf.data(), buf.data(), nfft);
    for (Index r = 0; r < rows; ++r) {
      prod = xf.cwiseProduct(hf[static_cast<std::size_t>(r)]);
      fft.inv(out.data(), prod.data(), nfft);
      y.row(r).segment(start, len + nh - 1) += out.head(len + nh - 1).transpose();
    }
  }
  return y;
}

}  // namespace dasr

#endif  // DASR_SIGNAL_HPP
