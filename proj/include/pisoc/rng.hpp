#pragma once

#include <cstdint>
#include <random>

namespace pisoc {

// Independent stream per (seed, domain, index). Every random draw in the
// library comes from one of these, so results never depend on how work is
// split across threads.
enum class Stream : std::uint64_t {
  Paths = 1,
  Boundary = 2,
  Bootstrap = 3,
  TrainPaths = 4,
  TrainBoundary = 5,
  ValidatePaths = 6,
  ValidateBoundary = 7,
};

inline std::mt19937_64 rng_stream(std::uint64_t seed, Stream domain, std::uint64_t index) {
  const auto d = static_cast<std::uint64_t>(domain);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(d), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace pisoc
