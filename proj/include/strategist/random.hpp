#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace strategist {

using Rng = std::mt19937_64;

/// Deterministic child seed from a base seed and a list of integer tags,
/// so each (term, restart, trial, ...) gets its own stream regardless of
/// evaluation order.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags) {
  std::vector<std::uint32_t> words;
  words.reserve(2 + 2 * tags.size());
  words.push_back(static_cast<std::uint32_t>(base));
  words.push_back(static_cast<std::uint32_t>(base >> 32));
  for (auto t : tags) {
    words.push_back(static_cast<std::uint32_t>(t));
    words.push_back(static_cast<std::uint32_t>(t >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

// Stream tags used with derive_seed.
namespace stream {
inline constexpr std::uint64_t lhs_starts = 1;
inline constexpr std::uint64_t bo_iteration = 2;
inline constexpr std::uint64_t exploration_term = 3;
inline constexpr std::uint64_t bo_term = 4;
inline constexpr std::uint64_t restart = 5;
inline constexpr std::uint64_t trial = 6;
inline constexpr std::uint64_t initial_design = 7;
inline constexpr std::uint64_t bootstrap = 8;
inline constexpr std::uint64_t ibo = 9;
inline constexpr std::uint64_t continuation = 10;
}  // namespace stream

}  // namespace strategist
