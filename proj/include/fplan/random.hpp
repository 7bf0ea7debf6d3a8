#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace fplan {

// Deterministic draws on top of mt19937_64. The std distributions are
// implementation-defined, so uniform/normal are derived by hand to keep
// artifacts hash-stable.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + uniform01() * (hi - lo); }

  int uniform_int(int lo, int hi) { // inclusive bounds
    return lo + static_cast<int>(uniform01() * (hi - lo + 1 - 1e-12));
  }

  double normal(double mean = 0.0, double stddev = 1.0) {
    const double u1 = std::max(uniform01(), 1e-300);
    const double u2 = uniform01();
    return mean + stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace fplan
