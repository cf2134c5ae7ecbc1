#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace spikedisc {

// FNV-1a, used for config hashing and RNG stream derivation.
inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Independent stream for (seed, purpose, index). Deriving per-epoch streams
// this way keeps resumed runs bit-identical without checkpointing RNG state.
inline std::mt19937_64 derived_rng(std::uint64_t seed, std::string_view purpose, std::uint64_t index = 0) {
  std::uint64_t h = fnv1a64(purpose);
  return std::mt19937_64(splitmix64(seed ^ splitmix64(h ^ splitmix64(index))));
}

}  // namespace spikedisc
