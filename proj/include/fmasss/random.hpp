#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace fmasss {

using Rng = std::mt19937_64;

/// Builds an independent generator from a root seed and a path of stream
/// indices (e.g. {replicate, mode}). The same path always yields the same
/// stream regardless of which thread consumes it.
inline Rng derive_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  std::vector<std::uint32_t> words;
  words.reserve(2 + 2 * path.size());
  words.push_back(static_cast<std::uint32_t>(seed));
  words.push_back(static_cast<std::uint32_t>(seed >> 32));
  for (std::uint64_t p : path) {
    words.push_back(static_cast<std::uint32_t>(p));
    words.push_back(static_cast<std::uint32_t>(p >> 32) ^ 0x9e3779b9u);
  }
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

}  // namespace fmasss
