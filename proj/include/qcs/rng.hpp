#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace qcs {

/// Engine used by every stochastic operation. Callers own the state.
using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
inline constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives a child seed from a master seed and a path of counters.
///
/// The derivation is a chain of SplitMix64 mixes: h0 = mix(master), then
/// h_{i+1} = mix(h_i ^ path_i). Distinct paths give statistically independent
/// streams, and the result does not depend on how work is scheduled, so trials
/// can run in any order on any number of threads.
inline std::uint64_t derive_seed(std::uint64_t master,
                                 std::initializer_list<std::uint64_t> path) noexcept {
  std::uint64_t h = mix64(master);
  for (auto p : path) h = mix64(h ^ mix64(p + 0x632be59bd9b4e019ULL));
  return h;
}

inline Rng make_rng(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
  return Rng(derive_seed(master, path));
}

/// Stream tags used by the experiment harness.
namespace stream {
inline constexpr std::uint64_t matrix = 1;
inline constexpr std::uint64_t rip = 2;
inline constexpr std::uint64_t trial = 3;
inline constexpr std::uint64_t source = 10;
inline constexpr std::uint64_t measurement = 11;
inline constexpr std::uint64_t quantization = 12;
inline constexpr std::uint64_t channel = 13;
}  // namespace stream

}  // namespace qcs
