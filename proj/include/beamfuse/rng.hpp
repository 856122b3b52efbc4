#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <vector>

namespace beamfuse {

/// splitmix64 finalizer. Spreads structured inputs (seed, user id, stream id)
/// over the full 64-bit range before they seed an engine.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Engine seed for an independent stream keyed by (base, a, b). Per-user
/// streams derive as derive_seed(seed, user_id), so work can be partitioned
/// across threads without changing any draw.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) {
  return mix64(base ^ mix64(a ^ mix64(b)));
}

/// Uniform in [0, 1) from the top 53 bits of one engine draw. Unlike
/// std::uniform_real_distribution this maps engine output to values the same
/// way on every standard library.
inline double uniform01(std::mt19937_64& eng) {
  return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

inline double uniform_range(std::mt19937_64& eng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(eng);
}

/// Standard normal via Box-Muller, two engine draws per value.
inline double gaussian(std::mt19937_64& eng) {
  const double u1 = (static_cast<double>(eng() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
  const double u2 = uniform01(eng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

/// Circularly symmetric complex Gaussian with unit per-entry variance,
/// i.e. E|z|^2 = 1.
inline std::complex<double> complex_gaussian(std::mt19937_64& eng) {
  const double re = gaussian(eng);
  const double im = gaussian(eng);
  return {re * M_SQRT1_2, im * M_SQRT1_2};
}

/// Fisher-Yates shuffle with a fixed draw scheme; std::shuffle leaves the
/// index mapping up to the implementation.
template <typename T>
void shuffle_deterministic(std::vector<T>& v, std::mt19937_64& eng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(eng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace beamfuse
