// Copyright 2026 The trilift Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace trilift {

// Counter-free deterministic RNG built on splitmix64. All randomness in the
// project flows from one seed through named sub-streams so any stage can be
// reproduced in isolation; output bytes do not depend on the standard
// library's distribution implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(mix(seed ^ 0x9e3779b97f4a7c15ull)) {}

  // Independent stream derived from this one. Strings hash via FNV-1a.
  Rng stream(std::string_view name) const {
    uint64_t h = 0xcbf29ce484222325ull;
    for (char c : name) {
      h ^= static_cast<uint8_t>(c);
      h *= 0x100000001b3ull;
    }
    return Rng(mix(state_ ^ h));
  }
  Rng stream(uint64_t a) const { return Rng(mix(state_ ^ mix(a + 0x9e3779b97f4a7c15ull))); }
  Rng stream(std::string_view name, uint64_t a) const { return stream(name).stream(a); }

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    return mix(state_);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n).
  uint64_t uniform_index(uint64_t n) { return next_u64() % n; }

  // Standard normal via Box-Muller (no cached spare; two uniforms per draw).
  double normal() {
    double u1 = uniform(), u2 = uniform();
    u1 = u1 <= 0.0 ? 0x1.0p-53 : u1;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }
  double normal(double mu, double sigma) { return mu + sigma * normal(); }

 private:
  static uint64_t mix(uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  uint64_t state_;
};

}  // namespace trilift
