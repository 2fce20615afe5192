#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>

namespace tbudget {

// Deterministic, value-typed random stream (xoshiro256** seeded through
// splitmix64). Every draw is a fixed arithmetic transform of 64-bit words, so
// a given seed reproduces the same doubles on every platform.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed);

  // Independent child stream keyed by (seed, path...). Trials and tasks use
  // this so their draws never depend on how work is split across threads.
  static RandomStream derive(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

  std::uint64_t next_u64();

  // Uniform on the open interval (0, 1).
  double uniform();

  // Standard normal by inverse CDF; consumes exactly one word per draw.
  double normal();

  // Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  bool operator==(const RandomStream&) const = default;

 private:
  std::array<std::uint64_t, 4> state_{};
};

std::uint64_t splitmix64(std::uint64_t& state);

// Standard normal quantile, Acklam's rational approximation
// (relative error below 1.2e-9 on (0, 1)).
double normal_quantile(double p);

}  // namespace tbudget
