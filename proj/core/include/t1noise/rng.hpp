#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace t1noise {

// Deterministic random streams. A (seed, stream) pair is mixed with
// SplitMix64 into the state of a std::mt19937_64; the engine output is turned
// into doubles with fixed bit manipulations and Box-Muller, so results do not
// depend on the standard library's distribution implementations.
class Rng {
 public:
  static constexpr std::string_view kAlgorithm = "mt19937_64+splitmix64-stream";

  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64() { return engine_(); }
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_stream_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace t1noise
