#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

namespace vqaf {

// Seedable generator used for every random draw in the library.
//
// The engine is std::mt19937_64, whose output sequence is pinned by the
// standard, so identical seeds give identical streams on every platform.
// The uniform/normal transforms are implemented here instead of using
// std::*_distribution, whose output is implementation-defined.
class Rng {
 public:
  static constexpr const char* kAlgorithmName = "mt19937_64";

  explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::string algorithm_name() const { return kAlgorithmName; }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random mantissa bits.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform01();
  }

  // Uniform integer in [0, n). Modulo bias is below 2^-40 for the bucket
  // counts used here (n <= 2^24) and is accepted for simplicity.
  std::uint64_t uniform_index(std::uint64_t n) { return engine_() % n; }

  // Standard normal via Box-Muller on the portable uniforms above.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform01();  // (0, 1], keeps log() finite
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace vqaf
