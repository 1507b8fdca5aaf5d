#pragma once

#include <cmath>
#include <cstdint>
#include <string>

namespace vqaf {

// Explicit FLOP-counting conventions. Counted totals are comparable only
// within a convention, so every report embeds the convention id.
struct FlopConvention {
  // A fused multiply-add counts as 2 FLOPs when true, 1 when false.
  bool macs_as_two = true;
  // Cost of one exp/tanh/sigmoid/sqrt evaluation.
  std::uint64_t transcendental_cost = 1;
  // Cost formula for a length-n transform; "5nlog2n" is the only built-in.
  std::string fft_formula = "5nlog2n";

  std::uint64_t mac() const { return macs_as_two ? 2 : 1; }

  std::uint64_t matmul(std::uint64_t m, std::uint64_t k,
                       std::uint64_t n) const {
    return m * k * n * mac();
  }
  std::uint64_t bias(std::uint64_t n) const { return n; }
  std::uint64_t elementwise(std::uint64_t n) const { return n; }
  std::uint64_t transcendental(std::uint64_t n) const {
    return n * transcendental_cost;
  }
  // softmax(n): n transcendentals plus normalization passes
  std::uint64_t softmax(std::uint64_t n) const {
    return n * (transcendental_cost + 2);
  }
  std::uint64_t fft(std::uint64_t n) const {
    if (n <= 1) return 0;
    return static_cast<std::uint64_t>(
        5.0 * static_cast<double>(n) * std::log2(static_cast<double>(n)));
  }
  // one complex multiply = 4 mul + 2 add
  std::uint64_t complex_mul(std::uint64_t n) const { return 6 * n; }
  // non-overlapping sum pooling down to out_d outputs
  std::uint64_t sum_pool(std::uint64_t out_d, std::uint64_t k) const {
    return out_d * (k - 1);
  }
  // mean over g slots of width d: (g-1) adds + 1 divide per output element
  std::uint64_t mean_pool(std::uint64_t g, std::uint64_t d) const {
    return g * d;
  }
  // count-sketch scatter: one multiply-add per input coordinate
  std::uint64_t sketch(std::uint64_t d) const { return mac() * d; }
  // square+accumulate per element, one sqrt, one divide per element
  std::uint64_t l2_normalize(std::uint64_t n) const {
    return 3 * n + transcendental_cost;
  }

  std::string id() const {
    return std::string("mac") + (macs_as_two ? "2" : "1") + "-t" +
           std::to_string(transcendental_cost) + "-fft" + fft_formula;
  }
};

}  // namespace vqaf
