#pragma once

#include <cstdint>
#include <random>

namespace antibunch::detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent generator per (seed, purpose, chunk). Work split along chunk
// boundaries therefore draws identical numbers for any worker count.
inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t purpose, std::uint64_t chunk) {
  const std::uint64_t s = splitmix64(seed ^ splitmix64(purpose * 0x100000001b3ULL ^ splitmix64(chunk)));
  return std::mt19937_64(s);
}

enum Purpose : std::uint64_t {
  kBlinkingPurpose = 1,
  kEmissionPurpose = 2,
  kBackgroundPurpose = 3,
  kDetectionPurpose = 4,
  kDarkPurpose = 5,  // + channel
  kPoissonPurpose = 16,
};

}  // namespace antibunch::detail
