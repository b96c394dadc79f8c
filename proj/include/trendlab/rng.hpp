#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace trendlab {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Deterministic child seed for task `index` under `root`; the same
/// (root, index) pair always gives the same stream, whatever the
/// scheduling order.
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index) {
  return splitmix64(splitmix64(root) ^ (index * 0xd1b54a32d192ed03ULL + 1));
}

inline std::uint64_t derive_seed(std::uint64_t root,
                                 std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = root;
  for (auto p : path) s = derive_seed(s, p);
  return s;
}

inline Rng make_rng(std::uint64_t seed) { return Rng(splitmix64(seed)); }

inline double standard_normal(Rng& rng) {
  return std::normal_distribution<double>(0.0, 1.0)(rng);
}

inline double uniform(Rng& rng, double lo, double hi) {
  if (lo == hi) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline long uniform_int(Rng& rng, long lo, long hi) {
  return std::uniform_int_distribution<long>(lo, hi)(rng);
}

}  // namespace trendlab
