// Copyright 2026 The dasr Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <doctest.h>

#include <cmath>
#include <complex>
#include <cstring>
#include <filesystem>
#include <limits>
#include <numbers>
#include <random>

#include "dasr/signal.hpp"
#include "dasr/wav.hpp"
#include "fixtures.hpp"

using namespace dasr;

namespace {

constexpr double kPi = std::numbers::pi;

// Direct O(N^2) DFT of one windowed frame, bins 0..N/2.
std::vector<std::complex<double>> naive_dft(const Eigen::RowVectorXd& x, Index start,
                                            const Vector<double>& window) {
  const Index n = window.size();
  std::vector<std::complex<double>> out(static_cast<std::size_t>(n / 2 + 1));
  for (Index k = 0; k <= n / 2; ++k) {
    std::complex<double> acc = 0.0;
    for (Index t = 0; t < n; ++t)
      acc += window(t) * x(start + t) * std::polar(1.0, -2.0 * kPi * double(k * t) / double(n));
    out[static_cast<std::size_t>(k)] = acc;
  }
  return out;
}

}  // namespace

TEST_CASE("stft frame count and bin count") {
  const StftConfig cfg;
  for (Index len : {512, 513, 767, 768, 16000}) {
    const Spectrogram s = stft(fixtures::white_noise(1, 2, len), cfg);
    CHECK(s.frames() == (len - 512) / 256 + 1);
    CHECK(s.num_bins() == 257);
    CHECK(s.channels() == 2);
  }
}

TEST_CASE("stft rejects signals shorter than a window") {
  CHECK_THROWS_AS(stft(Waveform::zeros(1, 511), StftConfig{}), InvalidInput);
}

TEST_CASE("stft rejects configs that cannot reconstruct") {
  CHECK_THROWS_AS(validate(StftConfig{512, 200, WindowType::kSqrtHann}), InvalidInput);
  CHECK_THROWS_AS(validate(StftConfig{511, 1, WindowType::kSqrtHann}), InvalidInput);
  // Periodic Hann with no overlap hits zero at every frame start.
  CHECK_THROWS_AS(validate(StftConfig{512, 512, WindowType::kHann}), InvalidInput);
  CHECK_NOTHROW(validate(StftConfig{512, 128, WindowType::kRectangular}));
}

TEST_CASE("sqrt-Hann at half overlap sums to one") {
  const Vector<double> profile = overlap_add_profile<double>(StftConfig{});
  CHECK((profile.array() - 1.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("zero waveform gives zero spectrogram and back") {
  const Spectrogram s = stft(Waveform::zeros(1, 4096), StftConfig{});
  CHECK(energy(s) == 0.0);
  CHECK(istft(s).samples.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("stft matches a direct DFT of each windowed frame") {
  const StftConfig cfg;
  const Waveform x = fixtures::white_noise(7, 1, 2048);
  const Spectrogram s = stft(x, cfg);
  const Vector<double> window = make_window<double>(cfg);
  for (Index t : {0, 3, 6}) {
    const auto ref = naive_dft(x.samples.row(0), t * cfg.hop_length, window);
    for (Index k = 0; k < s.num_bins(); ++k)
      CHECK(std::abs(s.bins[0](t, k) - ref[static_cast<std::size_t>(k)]) < 1e-9);
  }
}

TEST_CASE("sinusoid at a bin frequency concentrates in that bin") {
  const Index bin = 37;
  Waveform x = Waveform::zeros(1, 4096);
  for (Index n = 0; n < x.num_samples(); ++n)
    x.samples(0, n) = std::cos(2.0 * kPi * double(bin) * double(n) / 512.0 + 0.3);

  SUBCASE("rectangular window") {
    const Spectrogram s = stft(x, StftConfig{512, 256, WindowType::kRectangular});
    for (Index t = 0; t < s.frames(); ++t) {
      const double in_bin = 2.0 * std::norm(s.bins[0](t, bin)) / 512.0;
      CHECK(in_bin / frame_energy(s, 0, t) > 0.99);
    }
  }
  SUBCASE("sqrt-Hann window") {
    // The continuous sine window's transform at integer bin offsets m is
    // proportional to 1 / |4 m^2 - 1|; bins k-1..k+1 hold that share of the
    // energy up to discretization and the negative-frequency image.
    double all = 0.0, lobe = 0.0;
    for (int m = -2000; m <= 2000; ++m) {
      const double v = 1.0 / std::pow(4.0 * m * m - 1.0, 2);
      all += v;
      if (std::abs(m) <= 1) lobe += v;
    }
    const Spectrogram s = stft(x, StftConfig{});
    for (Index t = 0; t < s.frames(); ++t) {
      double main_lobe = 0.0;
      for (Index k = bin - 1; k <= bin + 1; ++k) main_lobe += 2.0 * std::norm(s.bins[0](t, k)) / 512.0;
      CHECK(main_lobe / frame_energy(s, 0, t) == doctest::Approx(lobe / all).epsilon(1e-4));
      CHECK(main_lobe / frame_energy(s, 0, t) > 0.99);
    }
  }
}

TEST_CASE("istft output length") {
  const StftConfig cfg;
  const Spectrogram s = stft(fixtures::white_noise(3, 1, 5000), cfg);
  CHECK(istft(s).num_samples() == (s.frames() - 1) * cfg.hop_length + cfg.window_length);
}

TEST_CASE("single frame of a pulse is recovered") {
  const StftConfig cfg;
  Waveform x = Waveform::zeros(1, 512);
  x.samples(0, 200) = 1.0;
  const Waveform y = istft(stft(x, cfg));
  REQUIRE(y.num_samples() == 512);
  CHECK((y.samples - x.samples).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("round trip reconstructs interior samples") {
  const StftConfig cfg;
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto len = static_cast<Index>(uniform(rng, 0.1, 3.0) * kSampleRate);
    const Waveform x = fixtures::white_noise(derive_seed(11, trial), 1, len, 0.3);
    const Waveform y = istft(stft(x, cfg));
    const Index covered = y.num_samples();
    const Index edge = cfg.window_length - cfg.hop_length;
    const double err = (y.samples.middleCols(edge, covered - 2 * edge) -
                        x.samples.middleCols(edge, covered - 2 * edge))
                           .cwiseAbs()
                           .maxCoeff();
    CHECK(err < 1e-6);
  }
}

TEST_CASE("padded round trip on one second of noise") {
  const StftConfig cfg;
  const Waveform x = fixtures::white_noise(5, 1, kSampleRate);
  const StftPadding p = stft_padding(x.num_samples(), cfg);
  const Waveform y = crop(istft(stft(pad(x, p), cfg)), p.front, x.num_samples());
  CHECK((y.samples - x.samples).norm() / x.samples.norm() < 1e-6);
}

TEST_CASE("float instantiation round trips") {
  const StftConfig cfg;
  const Waveform xd = fixtures::white_noise(5, 1, 4000, 0.2);
  BasicWaveform<float> x(xd.samples.cast<float>());
  const StftPadding p = stft_padding(x.num_samples(), cfg);
  const auto y = crop(istft(stft(pad(x, p), cfg)), p.front, x.num_samples());
  CHECK((y.samples - x.samples).cwiseAbs().maxCoeff() < 1e-5f);
}

TEST_CASE("stft is linear") {
  const StftConfig cfg;
  const Waveform a = fixtures::white_noise(1, 2, 3000), b = fixtures::white_noise(2, 2, 3000);
  Waveform mix = a;
  mix.samples = 0.7 * a.samples - 1.9 * b.samples;
  const Spectrogram sa = stft(a, cfg), sb = stft(b, cfg), sm = stft(mix, cfg);
  for (Index c = 0; c < 2; ++c) {
    const auto expected = (0.7 * sa.bins[c] - 1.9 * sb.bins[c]).eval();
    CHECK((sm.bins[c] - expected).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("Parseval over padded frames equals time-domain energy") {
  // sqrt-Hann at half overlap: the squared windows sum to one, so the
  // frame-summed spectral energy of a fully padded signal is its energy.
  const StftConfig cfg;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const Waveform x = fixtures::white_noise(seed, 1, 7001);
    const Spectrogram s = stft(pad(x, stft_padding(x.num_samples(), cfg)), cfg);
    double spectral = 0.0;
    for (Index t = 0; t < s.frames(); ++t) spectral += frame_energy(s, 0, t);
    CHECK(spectral == doctest::Approx(x.energy()).epsilon(1e-9));
  }
}

TEST_CASE("apply_mask") {
  const StftConfig cfg;
  const Spectrogram s = stft(fixtures::white_noise(9, 2, 4096), cfg);
  const Index frames = s.frames(), bins = s.num_bins();

  SUBCASE("ones are the identity") {
    const Spectrogram out = apply_mask(s, Matrix<double>::Ones(frames, bins));
    for (Index c = 0; c < 2; ++c) CHECK(out.bins[c] == s.bins[c]);
  }
  SUBCASE("zeros silence everything") {
    CHECK(energy(apply_mask(s, Matrix<double>::Zero(frames, bins))) == 0.0);
  }
  SUBCASE("binary mask keeps exactly the selected energy") {
    Matrix<double> m = Matrix<double>::Zero(frames, bins);
    m.leftCols(bins / 2).setOnes();
    double selected = 0.0;
    for (const auto& b : s.bins) selected += b.leftCols(bins / 2).squaredNorm();
    const Spectrogram once = apply_mask(s, m);
    CHECK(energy(once) == doctest::Approx(selected).epsilon(1e-12));
    const Spectrogram twice = apply_mask(once, m);
    for (Index c = 0; c < 2; ++c) CHECK(twice.bins[c] == once.bins[c]);
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(apply_mask(s, Matrix<double>::Ones(frames + 1, bins)), InvalidInput);
  }
}

TEST_CASE("clamp_masks maps values into the unit interval") {
  MaskSet m = MaskSet::zeros(2, 3, 4);
  m.speech[0](0, 0) = 1.5;
  m.speech[1](1, 2) = -0.25;
  m.noise(2, 3) = std::nan("");
  m.noise(0, 1) = 0.5;
  CHECK(clamp_masks(m) == 3);
  CHECK(m.speech[0](0, 0) == 1.0);
  CHECK(m.speech[1](1, 2) == 0.0);
  CHECK(m.noise(2, 3) == 0.0);
  CHECK(m.noise(0, 1) == 0.5);
  CHECK(clamp_masks(m) == 0);
}

TEST_CASE("waveform validation") {
  Waveform w = Waveform::zeros(1, 10);
  CHECK_NOTHROW(validate(w));
  w.samples(0, 3) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(validate(w), InvalidInput);
  CHECK_THROWS_AS(validate(Waveform::zeros(0, 10)), InvalidInput);
  CHECK_THROWS_AS(require_same_rate(Waveform::zeros(1, 1, 16000), Waveform::zeros(1, 1, 8000)),
                  InvalidInput);
}

TEST_CASE("window names round trip") {
  for (auto w : {WindowType::kSqrtHann, WindowType::kHann, WindowType::kRectangular})
    CHECK(window_from_string(to_string(w)) == w);
  CHECK_THROWS_AS(window_from_string("kaiser"), ConfigError);
}

TEST_CASE("convolution matches direct summation") {
  std::mt19937_64 rng(4);
  for (Index nh : {5, 300}) {
    Vector<double> x(700), h(nh);
    for (auto& v : x) v = uniform(rng, -1.0, 1.0);
    for (auto& v : h) v = uniform(rng, -1.0, 1.0);
    const Vector<double> y = convolve<double>(x, h);
    REQUIRE(y.size() == 700 + nh - 1);
    for (Index n = 0; n < y.size(); n += 37) {
      double acc = 0.0;
      for (Index k = 0; k < nh; ++k)
        if (n - k >= 0 && n - k < 700) acc += h(k) * x(n - k);
      CHECK(y(n) == doctest::Approx(acc).epsilon(1e-10));
    }
  }
}

TEST_CASE("block convolution with several kernels matches direct summation") {
  std::mt19937_64 rng(5);
  // Kernel lengths below and above the direct-summation threshold; the
  // longer input spans several blocks.
  for (auto [nx, nh] : {std::pair<Index, Index>{900, 40}, {5000, 300}, {1, 300}, {300, 1000}}) {
    Vector<double> x(nx);
    for (auto& v : x) v = uniform(rng, -1.0, 1.0);
    ChannelMatrix<double> kernels(3, nh);
    for (Index i = 0; i < kernels.size(); ++i) kernels.data()[i] = uniform(rng, -1.0, 1.0);
    const ChannelMatrix<double> y = convolve_each<double>(x, kernels);
    REQUIRE(y.rows() == 3);
    REQUIRE(y.cols() == nx + nh - 1);
    for (Index r = 0; r < 3; ++r)
      for (Index n = 0; n < y.cols(); n += 13) {
        double acc = 0.0;
        for (Index k = 0; k < nh; ++k)
          if (n - k >= 0 && n - k < nx) acc += kernels(r, k) * x(n - k);
        CHECK(std::abs(y(r, n) - acc) < 1e-10 * (1.0 + std::abs(acc)));
      }
  }
  CHECK(convolve_each<double>(Vector<double>(), ChannelMatrix<double>::Ones(2, 5)).cols() == 0);
}

TEST_CASE("wav codec") {
  Waveform w = fixtures::white_noise(21, 3, 1000, 0.3);
  w.samples = w.samples.cwiseMax(-1.0).cwiseMin(1.0);
  w.samples(1, 0) = 0.75;  // channel order marker

  SUBCASE("float32 round trip preserves channel order") {
    const Waveform r = decode_wav(encode_wav(w, WavFormat::kFloat32));
    REQUIRE(r.channels() == 3);
    REQUIRE(r.num_samples() == 1000);
    CHECK(r.sample_rate == kSampleRate);
    CHECK(r.samples(1, 0) == 0.75);
    CHECK((r.samples - w.samples).cwiseAbs().maxCoeff() < 1e-7);
  }
  SUBCASE("float64 is exact") {
    CHECK(decode_wav(encode_wav(w, WavFormat::kFloat64)).samples == w.samples);
  }
  SUBCASE("pcm16 within half a quantization step") {
    const Waveform r = decode_wav(encode_wav(w, WavFormat::kPcm16));
    CHECK((r.samples - w.samples).cwiseAbs().maxCoeff() <= 0.5 / 32768.0 + 1e-15);
  }
  SUBCASE("extensible header with float subformat") {
    auto bytes = encode_wav(w, WavFormat::kFloat32);
    // Grow the 16-byte fmt chunk to the 40-byte extensible layout.
    std::vector<std::uint8_t> ext(bytes.begin(), bytes.begin() + 20);
    ext[16] = 40;
    std::vector<std::uint8_t> fmt(bytes.begin() + 20, bytes.begin() + 36);
    fmt[0] = 0xFE;
    fmt[1] = 0xFF;
    ext.insert(ext.end(), fmt.begin(), fmt.end());
    const std::uint8_t extension[24] = {22, 0, 32, 0, 0, 0, 0, 0, 3, 0};
    ext.insert(ext.end(), extension, extension + 24);
    ext.insert(ext.end(), bytes.begin() + 36, bytes.end());
    const std::uint32_t riff = static_cast<std::uint32_t>(ext.size() - 8);
    std::memcpy(ext.data() + 4, &riff, 4);
    CHECK((decode_wav(ext).samples - w.samples).cwiseAbs().maxCoeff() < 1e-7);
  }
  SUBCASE("malformed input") {
    CHECK_THROWS_AS(decode_wav({'R', 'I', 'F', 'F'}), IoError);
    auto bytes = encode_wav(w, WavFormat::kPcm16);
    bytes[34] = 24;  // 24-bit PCM is not supported
    CHECK_THROWS_AS(decode_wav(bytes), IoError);
  }
  SUBCASE("files at other sample rates are rejected") {
    const auto dir = std::filesystem::temp_directory_path() / "dasr_signal_test";
    std::filesystem::create_directories(dir);
    Waveform slow = w;
    slow.sample_rate = 8000;
    write_wav((dir / "slow.wav").string(), slow);
    CHECK(read_wav((dir / "slow.wav").string()).sample_rate == 8000);
    CHECK_THROWS_AS(read_wav_16k((dir / "slow.wav").string()), InvalidInput);
    CHECK_THROWS_AS(read_wav((dir / "missing.wav").string()), IoError);
    std::filesystem::remove_all(dir);
  }
}
