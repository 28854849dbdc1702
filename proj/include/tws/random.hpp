#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>

namespace tws {

// The standard distributions are implementation-defined, so generated
// instances would differ between standard libraries. These helpers only rely
// on the engine's output sequence, which the standard pins down.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, bound) by rejection (no modulo bias).
  std::size_t index(std::size_t bound) {
    const std::uint64_t b = bound;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % b;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return static_cast<std::size_t>(x % b);
  }

  /// Exponential(1) variate.
  double exponential() {
    double u;
    do {
      u = uniform();
    } while (u == 0.0);
    return -std::log(u);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace tws
