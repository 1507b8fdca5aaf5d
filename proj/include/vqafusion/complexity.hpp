#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "vqafusion/flops.hpp"
#include "vqafusion/vqa.hpp"

namespace vqaf {

// Offsets applied to bottom-up configurations for the extra detector
// training they depend on. Constants, reported separately from measured
// values, never re-derived here.
inline constexpr std::uint64_t kBuParamOffset = 65'650'000ULL;
inline constexpr std::uint64_t kBuFlopOffset = 687'000'000'000ULL;

struct WallTimeStats {
  double median_us = 0.0;
  double mean_us = 0.0;
  double min_us = 0.0;
};

struct TimingProtocol {
  std::size_t batch = 64;
  std::size_t warmup_runs = 2;
  std::size_t measured_runs = 10;
};

struct ComplexityReport {
  std::string config_id;  // "<profile>/<fusion>/<attention>"
  std::string feature;
  std::string feature_kind;
  std::string fusion;
  std::string attention;
  std::uint64_t trainable_params = 0;
  std::uint64_t bu_param_offset = 0;
  std::uint64_t flops = 0;  // per forward sample
  std::uint64_t bu_flop_offset = 0;
  WallTimeStats wall_time;
  // environment
  std::string rng_name = Rng::kAlgorithmName;
  std::uint64_t seed = 0;
  std::string dtype = "f64";
  std::size_t batch = 64;
  std::string convention_id;

  std::uint64_t total_params() const {
    return trainable_params + bu_param_offset;
  }
  std::uint64_t total_flops() const { return flops + bu_flop_offset; }
};

// ---------------------------------------------------------------------------
// counting
// ---------------------------------------------------------------------------

template <typename T>
std::uint64_t count_params(const VqaModel<T>& m) {
  if (m.path == AttentionPath::Co) return m.attention.param_count();
  return m.fusion.param_count() + m.classifier.size();
}

// Static traversal of the forward computation, per sample. Scales exactly
// linearly in the batch.
template <typename T>
std::uint64_t count_flops(const VqaModel<T>& m, const FlopConvention& c,
                          std::uint64_t batch = 1) {
  std::uint64_t per_sample = 0;
  if (m.path == AttentionPath::None) {
    if (m.profile.grid > 1)
      per_sample += c.mean_pool(m.profile.grid, m.profile.d_v);
    per_sample += fusion_flops(m.fusion.resolved, c);
    if (m.has_classifier())
      per_sample += c.matmul(1, m.fusion.output_width(), m.answers);
  } else {
    const std::size_t grid = m.profile.grid;
    const std::size_t t = m.attention.config.glimpses;
    const std::size_t w_in = m.attention.inner.output_width();
    const std::size_t w_out = m.attention.outer.output_width();
    per_sample += grid * fusion_flops(m.attention.inner.resolved, c);
    per_sample += c.transcendental(grid * w_in);      // sigma on each cell
    per_sample += c.matmul(grid, w_in, t);            // glimpse logits
    per_sample += t * c.softmax(grid);                // alpha over locations
    per_sample += t * c.matmul(1, grid, m.profile.d_v);  // weighted sums
    per_sample += fusion_flops(m.attention.outer.resolved, c);
    per_sample += c.transcendental(w_out);
    per_sample += c.matmul(1, w_out, m.answers);
  }
  return batch * per_sample;
}

// ---------------------------------------------------------------------------
// timing: warmups excluded, monotonic clock, pre-generated batch, pure
// compute inside the timed region. Needs exclusive use of its worker.
// ---------------------------------------------------------------------------

template <typename T>
WallTimeStats time_forward(const VqaModel<T>& m, const TimingProtocol& proto,
                           std::uint64_t seed) {
  SyntheticBatch<T> batch =
      synth_batch<T>(m.profile, proto.batch, seed, m.answers, false, m.d_q);
  using clock = std::chrono::steady_clock;
  std::vector<double> runs;
  runs.reserve(proto.measured_runs);
  volatile double sink = 0;  // keep the forward pass observable
  for (std::size_t i = 0; i < proto.warmup_runs + proto.measured_runs; ++i) {
    const auto t0 = clock::now();
    Tensor<T> logits = forward_logits(m, batch.v, batch.q);
    const auto t1 = clock::now();
    sink = sink + static_cast<double>(logits[0]);
    if (i >= proto.warmup_runs)
      runs.push_back(
          std::chrono::duration<double, std::micro>(t1 - t0).count());
  }
  (void)sink;
  WallTimeStats stats;
  std::sort(runs.begin(), runs.end());
  stats.min_us = runs.front();
  const std::size_t n = runs.size();
  stats.median_us =
      n % 2 ? runs[n / 2] : 0.5 * (runs[n / 2 - 1] + runs[n / 2]);
  double total = 0;
  for (double r : runs) total += r;
  stats.mean_us = total / static_cast<double>(n);
  return stats;
}

// ---------------------------------------------------------------------------
// report assembly / JSON
// ---------------------------------------------------------------------------

template <typename T>
ComplexityReport make_report(const VqaModel<T>& m, const FlopConvention& conv,
                             bool timing, const TimingProtocol& proto,
                             std::uint64_t seed) {
  ComplexityReport r;
  r.feature = m.profile.feature;
  r.feature_kind = feature_kind_name(m.profile.kind);
  r.fusion = fusion_kind_name(m.kind);
  r.attention = attention_path_name(m.path);
  r.config_id = m.profile.name + "/" + r.fusion + "/" + r.attention;
  r.trainable_params = count_params(m);
  r.flops = count_flops(m, conv, 1);
  if (m.profile.kind == FeatureKind::BU) {
    r.bu_param_offset = kBuParamOffset;
    r.bu_flop_offset = kBuFlopOffset;
  }
  r.seed = seed;
  r.dtype = dtype_name<T>();
  r.batch = proto.batch;
  r.convention_id = conv.id();
  if (timing) r.wall_time = time_forward(m, proto, seed);
  return r;
}

inline nlohmann::ordered_json report_to_json(const ComplexityReport& r) {
  nlohmann::ordered_json j;
  j["config_id"] = r.config_id;
  j["feature"] = r.feature;
  j["feature_kind"] = r.feature_kind;
  j["fusion"] = r.fusion;
  j["attention"] = r.attention;
  j["trainable_params"] = r.trainable_params;
  j["bu_param_offset"] = r.bu_param_offset;
  j["flops"] = r.flops;
  j["bu_flop_offset"] = r.bu_flop_offset;
  j["wall_time_us"] = {{"median", r.wall_time.median_us},
                       {"mean", r.wall_time.mean_us},
                       {"min", r.wall_time.min_us}};
  j["environment"] = {{"rng", r.rng_name},
                      {"seed", r.seed},
                      {"dtype", r.dtype},
                      {"batch", r.batch},
                      {"convention", r.convention_id}};
  return j;
}

}  // namespace vqaf
