#include "fab/rng.hpp"

#include <cmath>

namespace fab {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t stream_key(std::uint64_t seed, std::uint64_t point_index,
                         std::uint64_t restart_index) {
  return mix64(mix64(mix64(seed) ^ point_index) ^ (restart_index << 32 | 0x1ULL));
}

double Rng::gaussian() {
  // Draw u1 from (0, 1] so the log is finite.
  double u1 = 1.0 - uniform();
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

double Rng::exponential() { return -std::log(1.0 - uniform()); }

int Rng::uniform_int(int n) {
  // Rejection sampling to stay unbiased; n is tiny in practice.
  const std::uint64_t bound = ~0ULL - ~0ULL % static_cast<std::uint64_t>(n);
  std::uint64_t v = next_u64();
  while (v >= bound) v = next_u64();
  return static_cast<int>(v % static_cast<std::uint64_t>(n));
}

Vector gaussian_vector(Rng& rng, Index d) {
  Vector v(d);
  for (Index i = 0; i < d; ++i) v[i] = rng.gaussian();
  return v;
}

}  // namespace fab
