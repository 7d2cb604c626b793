#pragma once

#include <cstdint>

namespace jrnlab {

// splitmix64, used to expand seeds and derive independent streams.
struct SplitMix64 {
  std::uint64_t state;

  explicit SplitMix64(std::uint64_t seed) : state(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }
};

// Derives the seed for stream `stream_id` from a master seed. Streams with
// distinct ids are statistically independent.
std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t stream_id);

// xoshiro256** with splitmix64 state expansion. All randomness in the
// project flows through this generator so that datasets, training runs and
// certificates are reproducible bit-for-bit from their seeds.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform in [0, 1).
  double uniform();
  // Uniform in [a, b).
  double uniform(double a, double b);
  // Standard normal via Box-Muller (deterministic, no library distribution).
  double gaussian();

 private:
  std::uint64_t s_[4];
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace jrnlab
