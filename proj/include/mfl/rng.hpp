#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace mfl {

using Rng = std::mt19937_64;

// Stream identifiers keep independent consumers of randomness apart, so adding
// draws in one place never shifts the sequence seen by another.
enum class Stream : std::uint64_t {
  Data = 1,
  Heterogeneity = 2,
  Placement = 3,
  Channel = 4,
  Immune = 5,
  Baseline = 6,
  Dropout = 7,
  Init = 8,
  Instance = 9,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Deterministic substream keyed by (seed, stream, extra keys...).
inline Rng substream(std::uint64_t seed, Stream stream, std::initializer_list<std::uint64_t> keys = {}) {
  std::uint64_t h = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(stream)));
  for (std::uint64_t k : keys) h = splitmix64(h ^ splitmix64(k + 0x632BE59BD9B4E019ULL));
  return Rng(h);
}

}  // namespace mfl
