#pragma once

#include <cstdint>
#include <random>

#include "fab/types.hpp"

namespace fab {

/// SplitMix64 finalizer, used to derive decorrelated stream seeds.
std::uint64_t mix64(std::uint64_t x);

/// Seed for the RNG stream of one (point, restart) pair. Streams are
/// independent of evaluation order, so threaded and sequential runs of an
/// attack produce identical results.
std::uint64_t stream_key(std::uint64_t seed, std::uint64_t point_index,
                         std::uint64_t restart_index);

/// mt19937_64 with hand-rolled output distributions. The engine's sequence
/// is pinned by the standard and the distributions below avoid libstdc++ /
/// libc++ divergence, so runs are reproducible byte-for-byte everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  /// Standard normal via Box-Muller (no cached spare).
  double gaussian();

  /// Standard exponential.
  double exponential();

  /// Uniform integer in [0, n).
  int uniform_int(int n);

 private:
  std::mt19937_64 gen_;
};

Vector gaussian_vector(Rng& rng, Index d);

}  // namespace fab
