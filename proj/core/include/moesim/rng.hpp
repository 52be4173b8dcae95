#pragma once

#include <cstdint>

namespace moesim {

// SplitMix64 (Steele, Lea, Flood 2014). Chosen as the repo-wide trace
// generator because it is a tiny counter-based generator that any other
// implementation can reproduce from this description alone:
//
//   state += 0x9E3779B97F4A7C15
//   z = state
//   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//   return z ^ (z >> 31)
//
// Substreams are derived by xor-folding coordinates into the seed, see
// substream_seed() below.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform double in [0, 1) with 53 random bits.
  double next_u01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
};

// Independent stream per (step, rank):
//   seed ^ 0x9E3779B97F4A7C15 * (step + 1) ^ 0xC2B2AE3D27D4EB4F * (rank + 1)
inline std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t step, std::uint64_t rank) {
  return seed ^ (0x9E3779B97F4A7C15ull * (step + 1)) ^ (0xC2B2AE3D27D4EB4Full * (rank + 1));
}

}  // namespace moesim
