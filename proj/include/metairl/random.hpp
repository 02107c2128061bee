#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace metairl {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to derive independent child seeds from a parent seed.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) {
  return mix_seed(mix_seed(parent) ^ (index * 0xd1b54a32d192ed03ULL));
}

inline std::string rng_state(const Rng& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

inline void set_rng_state(Rng& rng, const std::string& state) {
  std::istringstream in(state);
  in >> rng;
}

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int uniform_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

}  // namespace metairl
