#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace modubot {

// Deterministic RNG used everywhere in the library.
//
// Wraps std::mt19937_64 but generates gaussians with an explicit, stateless
// Box-Muller transform (two uniform draws per normal) instead of
// std::normal_distribution, whose internal cache makes draw sequences depend
// on copy/reset history and on the standard library implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // uniform in [0, 1)
  double uniform() {
    // 53 random mantissa bits
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // standard normal
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();  // log(0) guard
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(6.283185307179586476925287 * u2);
  }

  // integer in [0, n)
  std::uint64_t below(std::uint64_t n) {
    // modulo bias is irrelevant at our n << 2^64
    return gen_() % n;
  }

  // Independent child stream; drawing from the child does not advance this
  // generator past the one seeding draw.
  Rng split() { return Rng(next_u64()); }

 private:
  std::mt19937_64 gen_;
};

}  // namespace modubot
