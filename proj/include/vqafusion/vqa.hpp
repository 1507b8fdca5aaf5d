#pragma once

#include <functional>
#include <vector>

#include "vqafusion/attention.hpp"
#include "vqafusion/fusion.hpp"
#include "vqafusion/profiles.hpp"

namespace vqaf {

// ---------------------------------------------------------------------------
// Synthetic batches
// ---------------------------------------------------------------------------

template <typename T>
struct SyntheticBatch {
  Tensor<T> v;                      // [B x G x d_v]
  Tensor<T> q;                      // [B x d_q]
  std::vector<std::size_t> labels;  // in [0, answers)
};

namespace detail {

// Width of the slice of pooled features the planted labels depend on.
inline constexpr std::size_t kPlantWidth = 8;

// The planting matrix is a fixed function of the geometry, not of the
// batch seed, so every batch in a run is labelled by the same rule.
template <typename T>
Tensor<T> plant_matrix(std::size_t answers, std::size_t d_v,
                       std::size_t d_q) {
  const std::size_t wv = std::min(kPlantWidth, d_v);
  const std::size_t wq = std::min(kPlantWidth, d_q);
  Rng rng(0x5eedc0de ^ (answers * 1315423911u) ^ (d_v << 16) ^ d_q);
  return normal_tensor<T>({answers, wv + wq}, rng);
}

}  // namespace detail

template <typename T = double>
SyntheticBatch<T> synth_batch(const FeatureProfile& profile, std::size_t batch,
                              std::uint64_t seed, std::size_t answers,
                              bool planted,
                              std::size_t d_q = kQuestionWidth) {
  if (batch < 1) throw ConfigError("synth_batch: batch must be >= 1");
  if (answers < 1) throw ConfigError("synth_batch: answers must be >= 1");
  Rng rng(seed);
  SyntheticBatch<T> out;
  out.v = normal_tensor<T>({batch, profile.grid, profile.d_v}, rng);
  out.q = normal_tensor<T>({batch, d_q}, rng);
  out.labels.resize(batch);
  if (!planted) {
    for (std::size_t b = 0; b < batch; ++b)
      out.labels[b] = rng.uniform_index(answers);
    return out;
  }
  const Tensor<T> plant = detail::plant_matrix<T>(answers, profile.d_v, d_q);
  const std::size_t wv = std::min(detail::kPlantWidth, profile.d_v);
  const std::size_t wq = std::min(detail::kPlantWidth, d_q);
  for (std::size_t b = 0; b < batch; ++b) {
    std::vector<T> feat(wv + wq, T{0});
    for (std::size_t g = 0; g < profile.grid; ++g)
      for (std::size_t c = 0; c < wv; ++c)
        feat[c] += out.v.at({b, g, c});
    for (std::size_t c = 0; c < wv; ++c)
      feat[c] /= static_cast<T>(profile.grid);
    for (std::size_t c = 0; c < wq; ++c)
      feat[wv + c] = out.q(b, c);
    std::size_t best = 0;
    T best_score{0};
    for (std::size_t a = 0; a < answers; ++a) {
      T score{0};
      for (std::size_t c = 0; c < feat.size(); ++c)
        score += plant(a, c) * feat[c];
      if (a == 0 || score > best_score) {
        best = a;
        best_score = score;
      }
    }
    out.labels[b] = best;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model assembly
// ---------------------------------------------------------------------------

enum class AttentionPath { None, Co };

inline std::string attention_path_name(AttentionPath p) {
  return p == AttentionPath::None ? "none" : "co";
}

inline AttentionPath parse_attention_path(const std::string& s) {
  if (s == "none") return AttentionPath::None;
  if (s == "co") return AttentionPath::Co;
  throw ConfigError("unknown attention path '" + s + "' (valid: none, co)");
}

// One end-to-end model: features enter either the direct classifier path
// (grid features are mean-pooled first) or the two-stage co-attention
// path. Linear and C-MLP project to the answer space themselves on the
// direct path; the bilinear kinds get a separate projection head.
template <typename T>
struct VqaModel {
  FeatureProfile profile;
  FusionKind kind = FusionKind::MLB;
  AttentionPath path = AttentionPath::None;
  std::size_t answers = 0;
  std::size_t d_q = kQuestionWidth;
  std::uint64_t seed = 1;

  FusionModule<T> fusion;       // direct path
  Tensor<T> classifier;         // direct path, bilinear kinds only
  AttentionModule<T> attention; // co path

  bool has_classifier() const { return classifier.size() > 0; }
};

namespace detail {

// Output widths used when Linear / C-MLP act as the joint embedding of an
// attention stage rather than as the final classifier.
inline std::size_t embedding_width_default(FusionKind kind) {
  switch (kind) {
    case FusionKind::Linear: return 1000;
    case FusionKind::CMLP: return 1600;
    default: return 0;  // derived from the kind's own hyperparameters
  }
}

}  // namespace detail

template <typename T = double>
VqaModel<T> build_vqa_model(const FeatureProfile& profile, FusionKind kind,
                            AttentionPath path, std::size_t answers,
                            std::uint64_t seed,
                            const FusionHyper& hyper = {},
                            std::size_t d_q = kQuestionWidth,
                            std::size_t glimpses = 2) {
  if (path == AttentionPath::Co && profile.kind == FeatureKind::IL)
    throw ConfigError("profile '" + profile.name +
                      "' has no spatial locations; the co-attention path "
                      "requires SG or BU features");
  VqaModel<T> m;
  m.profile = profile;
  m.kind = kind;
  m.path = path;
  m.answers = answers;
  m.d_q = d_q;
  m.seed = seed;

  if (path == AttentionPath::None) {
    FusionSpec spec;
    spec.kind = kind;
    spec.d_v = profile.d_v;
    spec.d_q = d_q;
    spec.hyper = hyper;
    spec.seed = seed;
    spec.d_out =
        (kind == FusionKind::Linear || kind == FusionKind::CMLP) ? answers : 1;
    m.fusion = build<T>(spec);
    if (kind != FusionKind::Linear && kind != FusionKind::CMLP) {
      Rng rng(seed + 0x51ed5eedULL);
      m.classifier = detail::init_weight<T>(
          {m.fusion.output_width(), answers}, m.fusion.output_width(), rng);
    }
    return m;
  }

  AttentionConfig cfg;
  cfg.glimpses = glimpses;
  cfg.inner_fusion.kind = kind;
  cfg.inner_fusion.d_v = profile.d_v;
  cfg.inner_fusion.d_q = d_q;
  cfg.inner_fusion.hyper = hyper;
  cfg.inner_fusion.seed = seed;
  cfg.inner_fusion.d_out = detail::embedding_width_default(kind)
                               ? detail::embedding_width_default(kind)
                               : 1;
  if (hyper.intermediate) cfg.inner_fusion.d_out = hyper.intermediate;
  if (hyper.hidden && kind == FusionKind::CMLP)
    cfg.inner_fusion.d_out = hyper.hidden;
  cfg.outer_fusion = cfg.inner_fusion;
  cfg.outer_fusion.d_v = glimpses * profile.d_v;
  cfg.outer_fusion.seed = seed + 1;
  m.attention = build_attention<T>(cfg, profile.d_v, d_q, answers);
  return m;
}

// Mean over the G locations: [B x G x d_v] -> [B x d_v].
template <typename T>
Tensor<T> mean_pool_grid(const Tensor<T>& v) {
  const std::size_t batch = v.extent(0), grid = v.extent(1),
                    width = v.extent(2);
  Tensor<T> out({batch, width});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t g = 0; g < grid; ++g) {
      const T* src = v.data() + (b * grid + g) * width;
      T* dst = out.data() + b * width;
      for (std::size_t c = 0; c < width; ++c) dst[c] += src[c];
    }
    T* dst = out.data() + b * width;
    for (std::size_t c = 0; c < width; ++c) dst[c] /= static_cast<T>(grid);
  }
  return out;
}

template <typename T>
Tensor<T> forward_logits(const VqaModel<T>& m, const Tensor<T>& v,
                         const Tensor<T>& q,
                         ForwardCache<T>* cache = nullptr,
                         Tensor<T>* joint_out = nullptr) {
  if (v.rank() != 3 || v.extent(1) != m.profile.grid ||
      v.extent(2) != m.profile.d_v)
    throw ConfigError("batch features " + shape_str(v.shape()) +
                      " do not match profile '" + m.profile.name + "'");
  if (m.path == AttentionPath::Co) {
    Attended<T> att = attend(m.attention, v, q);
    return classify(m.attention, att.v_att, q, m.answers);
  }
  Tensor<T> pooled =
      m.profile.grid == 1
          ? v.reshaped({v.extent(0), m.profile.d_v})
          : mean_pool_grid(v);
  Tensor<T> z = forward(m.fusion, pooled, q, cache);
  if (joint_out) *joint_out = z;
  if (!m.has_classifier()) return z;
  return matmul(z, m.classifier);
}

template <typename T>
std::vector<std::size_t> predict(const VqaModel<T>& m,
                                 const SyntheticBatch<T>& batch) {
  Tensor<T> logits = forward_logits(m, batch.v, batch.q);
  const std::size_t rows = logits.extent(0), n = logits.extent(1);
  std::vector<std::size_t> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < n; ++j)
      if (logits(r, j) > logits(r, best)) best = j;  // ties keep lowest index
    out[r] = best;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Toy trainer: plain gradient descent on softmax cross-entropy, direct
// path only. Returns the loss at every step plus the final loss, so the
// trace has steps+1 entries.
// ---------------------------------------------------------------------------

template <typename T>
using BatchFn = std::function<SyntheticBatch<T>(std::size_t step)>;

namespace detail {

template <typename T>
double softmax_xent(const Tensor<T>& logits,
                    const std::vector<std::size_t>& labels,
                    Tensor<T>* grad_logits) {
  const std::size_t rows = logits.extent(0), n = logits.extent(1);
  if (grad_logits) *grad_logits = zeros<T>({rows, n});
  double loss = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = logits.data() + r * n;
    T mx = row[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double denom = 0;
    for (std::size_t j = 0; j < n; ++j)
      denom += std::exp(static_cast<double>(row[j] - mx));
    const double log_denom = std::log(denom);
    loss += log_denom - static_cast<double>(row[labels[r]] - mx);
    if (grad_logits) {
      for (std::size_t j = 0; j < n; ++j) {
        double p = std::exp(static_cast<double>(row[j] - mx)) / denom;
        if (j == labels[r]) p -= 1.0;
        (*grad_logits)(r, j) = static_cast<T>(p / rows);
      }
    }
  }
  return loss / rows;
}

}  // namespace detail

template <typename T>
std::vector<double> train_toy(VqaModel<T>& m, std::size_t steps, double lr,
                              const BatchFn<T>& batch_fn) {
  if (m.path != AttentionPath::None)
    throw ConfigError("toy trainer drives the direct path only");
  if (!(lr >= 0)) throw ConfigError("toy trainer requires lr >= 0");
  std::vector<double> trace;
  trace.reserve(steps + 1);
  for (std::size_t step = 0; step <= steps; ++step) {
    // the final entry re-evaluates on the last trained batch
    const std::size_t idx = steps == 0 ? 0 : std::min(step, steps - 1);
    const SyntheticBatch<T> batch = batch_fn(idx);
    ForwardCache<T> cache;
    Tensor<T> joint;
    Tensor<T> logits = forward_logits(m, batch.v, batch.q, &cache, &joint);
    Tensor<T> dlogits;
    const double loss =
        detail::softmax_xent(logits, batch.labels, &dlogits);
    if (std::isnan(loss))
      throw TrainingError("loss is NaN at step " + std::to_string(step),
                          step);
    trace.push_back(loss);
    if (step == steps) break;

    Tensor<T> dz = dlogits;
    if (m.has_classifier()) dz = matmul_nt(dlogits, m.classifier);
    FusionGrads<T> grads = backward(m.fusion, cache, dz);
    if (m.has_classifier()) {
      Tensor<T> gc = matmul_tn(joint, dlogits);
      for (std::size_t i = 0; i < m.classifier.size(); ++i)
        m.classifier[i] -= static_cast<T>(lr) * gc[i];
    }
    for (auto& [name, g] : grads.grad_params) {
      Tensor<T>& p = m.fusion.param(name);
      for (std::size_t i = 0; i < p.size(); ++i)
        p[i] -= static_cast<T>(lr) * g[i];
    }
    // parameters changed; re-stamp so the next forward's cache matches
    m.fusion.build_id = detail::next_build_id();
  }
  return trace;
}

}  // namespace vqaf
