#pragma once

#include "vqafusion/vqa.hpp"

namespace vqaf {

// Small-dimension setups used to demonstrate that every fusion kind trains
// end to end on planted labels. Shared by the CLI and the test suites.

inline FusionHyper toy_fusion_hyper(FusionKind kind) {
  FusionHyper h;
  switch (kind) {
    case FusionKind::Linear: h.intermediate = 32; break;
    case FusionKind::CMLP: h.hidden = 32; break;
    case FusionKind::MCB: h.sketch_dim = 64; break;
    case FusionKind::MLB: h.d_z = 16; break;
    case FusionKind::MFB:
      h.d_z = 8;
      h.pool_k = 2;
      break;
    case FusionKind::MFH:
      h.d_z = 8;
      h.pool_k = 2;
      h.cascade_m = 2;
      break;
    case FusionKind::Mutan:
      h.d_z = 8;
      h.rank = 3;
      h.d_pv = 8;
      h.d_pq = 8;
      break;
    case FusionKind::Block:
      h.d_z = 8;
      h.rank = 2;
      h.blocks_n = 2;
      h.d_pv = 8;
      h.d_pq = 8;
      break;
  }
  return h;
}

// MCB trains only its classifier head, and the L2-normalized sketch
// features keep its gradients small; it takes a larger step than the rest.
inline double toy_learning_rate(FusionKind kind) {
  return kind == FusionKind::MCB ? 5.0 : 0.5;
}

inline const FeatureProfile& toy_profile() {
  static const FeatureProfile profile{"toy", "toy", FeatureKind::IL, 32, 1};
  return profile;
}

inline constexpr std::size_t kToyAnswers = 4;
inline constexpr std::size_t kToyQuestionWidth = 32;
inline constexpr std::size_t kToyBatch = 64;

template <typename T = double>
VqaModel<T> toy_vqa_model(FusionKind kind, std::uint64_t seed) {
  return build_vqa_model<T>(toy_profile(), kind, AttentionPath::None,
                            kToyAnswers, seed, toy_fusion_hyper(kind),
                            kToyQuestionWidth);
}

// Full-batch gradient descent on one planted batch; the trace has
// steps+1 losses.
template <typename T = double>
std::vector<double> toy_train_run(FusionKind kind, std::size_t steps,
                                  double lr, std::uint64_t seed) {
  VqaModel<T> model = toy_vqa_model<T>(kind, seed);
  const SyntheticBatch<T> batch = synth_batch<T>(
      toy_profile(), kToyBatch, seed + 17, kToyAnswers, true,
      kToyQuestionWidth);
  return train_toy<T>(model, steps, lr,
                      [&batch](std::size_t) { return batch; });
}

}  // namespace vqaf
