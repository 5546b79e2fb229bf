#pragma once

// Platform-independent sampling on top of std::mt19937_64. The standard fixes
// the engine's output sequence but not the algorithms behind
// std::uniform_*_distribution or std::shuffle, so those are avoided here.

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace dtree {

using Rng = std::mt19937_64;

/// Uniform integer in [0, n). Rejection sampling, n > 0.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  const std::uint64_t limit = Rng::max() - (Rng::max() % n);
  std::uint64_t r = rng();
  while (r >= limit) r = rng();
  return r % n;
}

/// Uniform real in [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_real(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

/// Fisher-Yates shuffle driven by uniform_index.
template <typename T>
void shuffle(std::span<T> values, Rng& rng) {
  for (std::size_t i = values.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_index(rng, i));
    std::swap(values[i - 1], values[j]);
  }
}

}  // namespace dtree
