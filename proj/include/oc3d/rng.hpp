#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace oc3d {

// All randomness in the pipeline flows through these helpers on top of
// std::mt19937_64. The engine itself is bit-portable per the standard; the
// std::*_distribution adapters are not, so we scale raw draws by hand to keep
// every artifact byte-reproducible across standard libraries.

inline double unit_real(std::mt19937_64& g) {
  // 53-bit mantissa draw in [0, 1)
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

inline double uniform_real(std::mt19937_64& g, double lo, double hi) {
  return lo + (hi - lo) * unit_real(g);
}

// Unbiased integer draw in [0, n) by rejection.
inline std::uint64_t uniform_index(std::mt19937_64& g, std::uint64_t n) {
  if (n == 0) return 0;
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t r;
  do {
    r = g();
  } while (r >= limit);
  return r % n;
}

// Box-Muller (cosine branch only, so draw order stays easy to reason about).
inline double normal(std::mt19937_64& g, double mean, double stddev) {
  const double u1 = 1.0 - unit_real(g);  // (0, 1]
  const double u2 = unit_real(g);
  const double mag = std::sqrt(-2.0 * std::log(u1));
  return mean + stddev * mag * std::cos(6.283185307179586476925286766559 * u2);
}

template <typename T>
inline void shuffle_indices(std::mt19937_64& g, std::vector<T>& v) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(uniform_index(g, i));
    std::swap(v[i - 1], v[j]);
  }
}

// SplitMix64; used for stateless per-cell hashing (textures, per-id jitter).
inline std::uint64_t hash_u64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return hash_u64(seed ^ hash_u64(a + 0x632BE59BD9B4E019ull) ^ hash_u64(b + 0x9E3779B97F4A7C15ull));
}

inline double hash_unit(std::uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

}  // namespace oc3d
