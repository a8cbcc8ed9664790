#pragma once

#include <cstdint>
#include <random>

namespace spev {

// std::mt19937_64 output is fixed by the standard, the <random> distributions
// are not; these helpers keep seeded draws identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  // [0, 1)
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // [0, n)
  std::uint64_t index(std::uint64_t n) { return n == 0 ? 0 : engine_() % n; }
  int integer(int lo, int hi) { return lo + static_cast<int>(index(static_cast<std::uint64_t>(hi - lo + 1))); }
  bool coin() { return (engine_() >> 63) != 0; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace spev
