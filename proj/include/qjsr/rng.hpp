#pragma once

// Counter-based random number generation. Every draw is a pure function of
// (seed, stream, step, draw), so trajectories are reproducible from their
// coordinates alone and independent streams never share state.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>

#include "qjsr/types.hpp"

namespace qjsr {

namespace detail {

/// SplitMix64 finalizer: a bijective avalanche mix on 64-bit words.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Stateless counter RNG: uniform(step, draw) in [0,1) is a pure function of
/// the four coordinates, chained through the SplitMix64 finalizer.
struct CounterRng {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;

  [[nodiscard]] double uniform(std::uint64_t step, std::uint64_t draw) const {
    std::uint64_t h = detail::mix64(seed);
    h = detail::mix64(h ^ stream);
    h = detail::mix64(h ^ step);
    h = detail::mix64(h ^ draw);
    return static_cast<double>(h >> 11) * 0x1.0p-53;
  }

  /// Standard Gaussian via Box-Muller on two consecutive draw slots
  /// (2*draw, 2*draw+1).
  [[nodiscard]] double gaussian(std::uint64_t step, std::uint64_t draw) const {
    const double u1 = uniform(step, 2 * draw);
    const double u2 = uniform(step, 2 * draw + 1);
    const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
    return r * std::cos(2.0 * std::acos(-1.0) * u2);
  }
};

/// Inverse-CDF sampling from a finite distribution by linear scan in index
/// order; the final index absorbs any rounding slack.
inline int sample_index(const Vector& weights, double u) {
  double cumulative = 0.0;
  const auto n = weights.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    cumulative += weights(i);
    if (u < cumulative) return static_cast<int>(i);
  }
  return static_cast<int>(n - 1);
}

}  // namespace qjsr
