#pragma once

#include <cstdint>
#include <random>

namespace droneear {

// Seeded generator for scene synthesis. The engine's output sequence is
// fixed by the standard; the uniform and Gaussian conversions are done here
// so that the realization does not depend on the standard library's
// distribution implementations.
class SceneRng {
 public:
  explicit SceneRng(std::uint64_t seed) : engine_(seed) {}

  // Independent sub-stream seed for (seed, stream) via splitmix64.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Standard normal, Box-Muller.
  double gaussian();

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace droneear
