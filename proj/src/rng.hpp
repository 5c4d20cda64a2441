#pragma once

#include <array>
#include <cstdint>
#include <cstddef>

namespace dpt {

// Deterministic, splittable random stream (xoshiro256++ seeded via splitmix64).
// All randomness in the project flows through this class so that runs are
// bitwise reproducible for a given master seed, independent of platform
// library implementations. Substreams are derived with derive(seed, tag);
// fixed tag constants for the pipeline stages live in pipeline.hpp.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  // Pure substream derivation: mixes (seed, tag) into a fresh seed.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t tag);

  std::uint64_t next_u64();

  // Uniform double in [0, 1), 53 random bits.
  double uniform();

  // Standard Gaussian via Box-Muller (two uniforms per draw, no caching).
  double normal();

  // Unbiased uniform integer in [0, n); n must be > 0.
  std::size_t uniform_index(std::size_t n);

 private:
  std::array<std::uint64_t, 4> state_;
};

}  // namespace dpt
