#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "hclors/error.hpp"

namespace hclors {

// Seedable generator with a fixed draw discipline. The underlying
// mt19937_64 sequence is pinned by the standard, and every consumer in
// this library documents the order in which it draws, so a (seed,
// config) pair replays exactly. The raw 64-bit and uniform streams are
// bit-portable; normal deviates additionally depend on libm rounding.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Unbiased integer in [0, bound) by rejection.
  std::uint64_t below(std::uint64_t bound) {
    if (bound == 0) fail(ErrorKind::invalid_argument, "below(0) is undefined");
    const std::uint64_t reject_below = (-bound) % bound;
    for (;;) {
      const std::uint64_t x = engine_();
      if (x >= reject_below) return x % bound;
    }
  }

  // Standard normal via Box-Muller; draws two uniforms per pair and
  // hands out the cached mate on the next call.
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = uniform();
    while (u1 == 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 6.283185307179586476925286766559 * u2;
    cached_ = radius * std::sin(angle);
    have_cached_ = true;
    return radius * std::cos(angle);
  }

  // k distinct indices from [0, population) by partial Fisher-Yates;
  // result order is the draw order (not sorted).
  std::vector<std::size_t> sample_without_replacement(std::size_t population, std::size_t k) {
    if (k > population) {
      fail(ErrorKind::invalid_argument, "sample size exceeds population");
    }
    std::vector<std::size_t> pool(population);
    for (std::size_t i = 0; i < population; ++i) pool[i] = i;
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(below(population - i));
      std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    return pool;
  }

 private:
  std::mt19937_64 engine_;
  bool have_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace hclors
