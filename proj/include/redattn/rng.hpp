#pragma once

// Deterministic randomness helpers. std::mt19937_64 has a standard-mandated
// output sequence, but the std distributions and std::shuffle do not, so the
// mappings below are pinned by hand. Same seed, same bytes, everywhere.

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace redattn {

// splitmix64 finalizer; derives stream seeds (e.g. per-epoch) from a root seed.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 0x632be59bd9b4e019ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// [0,1) from the top 53 bits of one draw.
inline double unit_draw(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_draw(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * unit_draw(rng);
}

// Uniform index in [0, n). n must be positive and far below 2^53.
inline std::size_t index_draw(std::mt19937_64& rng, std::size_t n) {
  return static_cast<std::size_t>(unit_draw(rng) * static_cast<double>(n));
}

// Fisher-Yates shuffle with the pinned index mapping.
template <typename T>
void shuffle_in_place(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = index_draw(rng, i);
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace redattn
