// Copyright 2026 The dasr Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef DASR_COMMON_HPP
#define DASR_COMMON_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>
#include <cstddef>

namespace dasr {

/// Precondition or shape violation on caller-supplied data.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Inconsistent configuration detected before any processing.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Failure while reading or writing files.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kSampleRate = 16000;

inline void warn(std::string_view msg) {
  std::cerr << "WARNING: " << msg << '\n';
}

// SplitMix64 finalizer. Used to derive independent per-job seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t global_seed, std::uint64_t index) {
  return mix_seed(mix_seed(global_seed) ^ (index + 1));
}

// Portable uniform draw in [0, 1) from a 64-bit engine. The std
// distributions are implementation defined, which breaks bit-exact replay
// across standard libraries.
template <typename Engine>
double uniform01(Engine& eng) {
  return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

template <typename Engine>
double uniform(Engine& eng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(eng);
}

template <typename Engine>
std::size_t uniform_index(Engine& eng, std::size_t n) {
  return static_cast<std::size_t>(uniform01(eng) * static_cast<double>(n)) % n;
}

// Fisher-Yates on top of uniform_index; std::shuffle is not reproducible
// across standard libraries.
template <typename RandomIt, typename Engine>
void shuffle(RandomIt first, RandomIt last, Engine& eng) {
  const auto n = static_cast<std::size_t>(last - first);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = uniform_index(eng, i);
    std::swap(first[static_cast<std::ptrdiff_t>(i - 1)], first[static_cast<std::ptrdiff_t>(j)]);
  }
}

// Linear-interpolation percentile, q in [0, 1].
inline double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw InvalidInput("percentile of an empty list");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

}  // namespace dasr

#endif  // DASR_COMMON_HPP
