#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <vector>

namespace entvec {

// The mt19937_64 output sequence is pinned by the standard, so it is the one
// piece of <random> that reproduces across implementations. The distributions
// and std::shuffle are implementation-defined, hence the hand-rolled variants
// below.
using Rng = std::mt19937_64;

// splitmix64 finalizer; derives independent stream seeds from a base seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Unbiased uniform draw from [0, n), n >= 1.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  std::uint64_t x = rng();
  std::uint64_t r = x % n;
  // Reject draws from the final partial block of size 2^64 mod n.
  while (x - r > std::uint64_t(0) - n) {
    x = rng();
    r = x % n;
  }
  return r;
}

// Uniform double in [0, 1) with 53 random bits.
inline double uniform_unit(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_real(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform_unit(rng);
}

// Fisher-Yates shuffle on top of uniform_index.
template <typename T>
void shuffle(std::vector<T>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::uint64_t j = uniform_index(rng, i);
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace entvec
