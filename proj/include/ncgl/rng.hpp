#pragma once

// Seeded random sources. Every consumer of randomness takes an explicit Rng
// so runs are reproducible; independent purposes draw from derived
// sub-streams instead of sharing one generator.

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace ncgl {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xCBF29CE484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

inline std::uint64_t derive_seed(std::uint64_t base, std::string_view purpose, std::uint64_t index = 0) {
  return splitmix64(splitmix64(base ^ fnv1a(purpose)) + index);
}

inline Rng substream(std::uint64_t base, std::string_view purpose, std::uint64_t index = 0) {
  return Rng(derive_seed(base, purpose, index));
}

/// Uniform on [0, 1) with 53 random bits. Implemented here rather than via
/// std::uniform_real_distribution so the stream is identical across standard libraries.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Standard normal via the Marsaglia polar method.
inline double standard_normal(Rng& rng) {
  double u, v, s;
  do {
    u = 2.0 * uniform01(rng) - 1.0;
    v = 2.0 * uniform01(rng) - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  return u * std::sqrt(-2.0 * std::log(s) / s);
}

/// Uniform integer in [0, n).
inline int uniform_int(Rng& rng, int n) {
  return static_cast<int>(uniform01(rng) * n);
}

/// Gamma(1) variate; normalizing m of them gives a flat Dirichlet draw.
inline double exponential1(Rng& rng) {
  return -std::log(1.0 - uniform01(rng));
}

}  // namespace ncgl
