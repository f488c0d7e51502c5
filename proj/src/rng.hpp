// Copyright 2026 The protodiff Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#ifndef PROTODIFF_SRC_RNG_HPP_
#define PROTODIFF_SRC_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace protodiff::detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// mt19937_64 with hand-rolled distributions so that sequences do not
/// depend on the standard library's distribution implementations.
///
/// Streams: the engine for (seed, tag, index) is seeded with
/// splitmix64(splitmix64(seed) ^ splitmix64((tag << 32) | index)), so every
/// image draws from its own stream regardless of generation order.
class Rng {
 public:
  explicit Rng(std::uint64_t engine_seed) : engine_(engine_seed) {}

  static Rng stream(std::uint64_t seed, std::uint32_t tag, std::uint32_t index) {
    const std::uint64_t key = (static_cast<std::uint64_t>(tag) << 32) | index;
    return Rng(splitmix64(splitmix64(seed) ^ splitmix64(key)));
  }

  // [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Inclusive range.
  int uniform_int(int lo, int hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(engine_() % span);
  }

  // Box-Muller, one value per call.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace protodiff::detail

#endif  // PROTODIFF_SRC_RNG_HPP_
