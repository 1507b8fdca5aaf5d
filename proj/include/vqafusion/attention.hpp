#pragma once

#include <cstdint>

#include "vqafusion/fusion.hpp"

namespace vqaf {

enum class Nonlinearity { Tanh, Sigmoid };

inline std::string nonlinearity_name(Nonlinearity s) {
  return s == Nonlinearity::Tanh ? "tanh" : "sigmoid";
}

// Two-stage co-attention: a per-location fusion scores every grid cell /
// proposal, softmax over locations yields one distribution per glimpse,
// the weighted sums are concatenated and fused with the question again.
struct AttentionConfig {
  std::size_t glimpses = 2;
  Nonlinearity sigma = Nonlinearity::Tanh;
  FusionSpec inner_fusion;  // applied at each of the G locations
  FusionSpec outer_fusion;  // applied to the attended [t*d_v] feature
};

template <typename T>
struct AttentionModule {
  AttentionConfig config;
  FusionModule<T> inner;
  Tensor<T> proj_alpha;    // [inner_width x glimpses], one logit per glimpse
  FusionModule<T> outer;
  Tensor<T> proj_answers;  // [outer_width x |A|]
  std::size_t d_v = 0, d_q = 0, answers = 0;

  std::uint64_t param_count() const {
    return inner.param_count() + proj_alpha.size() + outer.param_count() +
           proj_answers.size();
  }
};

template <typename T = double>
AttentionModule<T> build_attention(const AttentionConfig& config,
                                   std::size_t d_v, std::size_t d_q,
                                   std::size_t answers) {
  if (config.glimpses < 1)
    throw ConfigError("attention requires at least one glimpse");
  if (answers < 1) throw ConfigError("attention requires answers >= 1");
  AttentionModule<T> m;
  m.config = config;
  m.d_v = d_v;
  m.d_q = d_q;
  m.answers = answers;
  if (config.inner_fusion.d_v != d_v || config.inner_fusion.d_q != d_q)
    throw ConfigError("inner fusion spec widths do not match (d_v, d_q)");
  if (config.outer_fusion.d_v != config.glimpses * d_v ||
      config.outer_fusion.d_q != d_q)
    throw ConfigError("outer fusion spec must take [glimpses*d_v] features");
  m.inner = build<T>(config.inner_fusion);
  m.outer = build<T>(config.outer_fusion);
  // projection seeds are offset from the inner module's stream so that a
  // rebuild with the same config is bit-identical
  Rng rng(config.inner_fusion.seed + 0x9E3779B97F4A7C15ULL);
  m.proj_alpha = detail::init_weight<T>(
      {m.inner.output_width(), config.glimpses}, m.inner.output_width(), rng);
  m.proj_answers = detail::init_weight<T>(
      {m.outer.output_width(), answers}, m.outer.output_width(), rng);
  return m;
}

template <typename T>
Tensor<T> apply_nonlinearity(Nonlinearity s, const Tensor<T>& a) {
  return s == Nonlinearity::Tanh ? tanh(a) : sigmoid(a);
}

template <typename T>
struct Attended {
  Tensor<T> alpha;  // [B x glimpses x G], each row a distribution over G
  Tensor<T> v_att;  // [B x glimpses*d_v]
};

// v: [B x G x d_v], q: [B x d_q]
template <typename T>
Attended<T> attend(const AttentionModule<T>& m, const Tensor<T>& v,
                   const Tensor<T>& q) {
  if (v.rank() != 3 || q.rank() != 2)
    throw DimensionError("attend expects v [B x G x d_v], q [B x d_q]");
  const std::size_t batch = v.extent(0), grid = v.extent(1),
                    width = v.extent(2);
  if (grid == 0) throw DimensionError("attend: G must be >= 1");
  if (width != m.d_v || q.extent(1) != m.d_q || q.extent(0) != batch)
    throw DimensionError("attend: feature shapes do not match the module");
  const std::size_t t = m.config.glimpses;

  // location-major flatten plus explicit question tiling
  Tensor<T> v_flat = v.reshaped({batch * grid, width});
  Tensor<T> q_tiled({batch * grid, m.d_q});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t g = 0; g < grid; ++g)
      std::copy_n(q.data() + b * m.d_q, m.d_q,
                  q_tiled.data() + (b * grid + g) * m.d_q);

  Tensor<T> z = forward(m.inner, v_flat, q_tiled);
  Tensor<T> logits = matmul(apply_nonlinearity(m.config.sigma, z),
                            m.proj_alpha);  // [B*G x t]

  Tensor<T> glimpse_logits({batch, t, grid});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t g = 0; g < grid; ++g)
      for (std::size_t ti = 0; ti < t; ++ti)
        glimpse_logits.at({b, ti, g}) = logits(b * grid + g, ti);

  Attended<T> out;
  out.alpha = softmax(glimpse_logits, 2);
  out.v_att = zeros<T>({batch, t * width});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t ti = 0; ti < t; ++ti)
      for (std::size_t g = 0; g < grid; ++g) {
        const T w = out.alpha.at({b, ti, g});
        const T* src = v.data() + (b * grid + g) * width;
        T* dst = out.v_att.data() + b * t * width + ti * width;
        for (std::size_t c = 0; c < width; ++c) dst[c] += w * src[c];
      }
  return out;
}

// Second fusion on the attended features; returns raw answer logits.
template <typename T>
Tensor<T> classify(const AttentionModule<T>& m, const Tensor<T>& v_att,
                   const Tensor<T>& q, std::size_t answers) {
  if (answers != m.answers)
    throw DimensionError("classify: module was built for " +
                         std::to_string(m.answers) + " answers, got " +
                         std::to_string(answers));
  if (v_att.rank() != 2 || v_att.extent(1) != m.config.glimpses * m.d_v)
    throw DimensionError("classify: attended width must be glimpses*d_v");
  Tensor<T> z = forward(m.outer, v_att, q);
  return matmul(apply_nonlinearity(m.config.sigma, z), m.proj_answers);
}

}  // namespace vqaf
