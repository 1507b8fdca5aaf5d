#include <catch2/catch_amalgamated.hpp>

#include <numeric>

#include "vqafusion/attention.hpp"

using namespace vqaf;

namespace {

AttentionModule<double> small_attention(std::size_t glimpses,
                                        std::uint64_t seed) {
  AttentionConfig cfg;
  cfg.glimpses = glimpses;
  cfg.inner_fusion.kind = FusionKind::MLB;
  cfg.inner_fusion.d_v = 6;
  cfg.inner_fusion.d_q = 5;
  cfg.inner_fusion.hyper.d_z = 4;
  cfg.inner_fusion.seed = seed;
  cfg.outer_fusion = cfg.inner_fusion;
  cfg.outer_fusion.d_v = glimpses * 6;
  cfg.outer_fusion.seed = seed + 1;
  return build_attention<double>(cfg, 6, 5, 3);
}

}  // namespace

TEST_CASE("equal logits average the locations") {
  auto m = small_attention(2, 1);
  m.proj_alpha = zeros<double>(m.proj_alpha.shape());  // all logits equal
  Rng rng(2);
  Tensor<double> v = normal_tensor<double>({1, 2, 6}, rng);
  Tensor<double> q = normal_tensor<double>({1, 5}, rng);
  Attended<double> att = attend(m, v, q);
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t g = 0; g < 2; ++g)
      CHECK(att.alpha.at({0, t, g}) == Catch::Approx(0.5).margin(1e-12));
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t c = 0; c < 6; ++c)
      CHECK(att.v_att(0, t * 6 + c) ==
            Catch::Approx(0.5 * (v.at({0, 0, c}) + v.at({0, 1, c})))
                .margin(1e-12));
}

TEST_CASE("a single location gets all the attention") {
  auto m = small_attention(2, 3);
  Rng rng(4);
  Tensor<double> v = normal_tensor<double>({2, 1, 6}, rng);
  Tensor<double> q = normal_tensor<double>({2, 5}, rng);
  Attended<double> att = attend(m, v, q);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t t = 0; t < 2; ++t) {
      CHECK(att.alpha.at({b, t, 0}) == 1.0);
      for (std::size_t c = 0; c < 6; ++c)
        CHECK(att.v_att(b, t * 6 + c) == v.at({b, 0, c}));
    }
}

TEST_CASE("alpha slices are probability distributions") {
  auto m = small_attention(3, 5);
  Rng rng(6);
  Tensor<double> v = normal_tensor<double>({2, 7, 6}, rng);
  Tensor<double> q = normal_tensor<double>({2, 5}, rng);
  Attended<double> att = attend(m, v, q);
  REQUIRE(att.alpha.shape() == Shape{2, 3, 7});
  REQUIRE(att.v_att.shape() == Shape{2, 18});  // glimpses * d_v
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t t = 0; t < 3; ++t) {
      double total = 0;
      for (std::size_t g = 0; g < 7; ++g) {
        CHECK(att.alpha.at({b, t, g}) >= 0.0);
        total += att.alpha.at({b, t, g});
      }
      CHECK(total == Catch::Approx(1.0).margin(1e-12));
    }
  // convex combination: each attended coordinate stays inside the
  // location-wise range
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t t = 0; t < 3; ++t)
      for (std::size_t c = 0; c < 6; ++c) {
        double lo = 1e30, hi = -1e30;
        for (std::size_t g = 0; g < 7; ++g) {
          lo = std::min(lo, v.at({b, g, c}));
          hi = std::max(hi, v.at({b, g, c}));
        }
        const double val = att.v_att(b, t * 6 + c);
        CHECK(val >= lo - 1e-12);
        CHECK(val <= hi + 1e-12);
      }
}

TEST_CASE("permuting locations permutes alpha and fixes the pooled feature") {
  auto m = small_attention(2, 7);
  Rng rng(8);
  const std::size_t grid = 5;
  Tensor<double> v = normal_tensor<double>({1, grid, 6}, rng);
  Tensor<double> q = normal_tensor<double>({1, 5}, rng);
  std::vector<std::size_t> perm(grid);
  std::iota(perm.begin(), perm.end(), 0);
  std::swap(perm[0], perm[3]);
  std::swap(perm[1], perm[4]);
  Tensor<double> pv({1, grid, 6});
  for (std::size_t g = 0; g < grid; ++g)
    for (std::size_t c = 0; c < 6; ++c)
      pv.at({0, g, c}) = v.at({0, perm[g], c});

  Attended<double> base = attend(m, v, q);
  Attended<double> permuted = attend(m, pv, q);
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t g = 0; g < grid; ++g)
      CHECK(permuted.alpha.at({0, t, g}) ==
            Catch::Approx(base.alpha.at({0, t, perm[g]})).margin(1e-12));
  CHECK(max_abs_diff(base.v_att, permuted.v_att) < 1e-12);
}

TEST_CASE("classify projects to the configured answer count") {
  auto m = small_attention(2, 9);
  Rng rng(10);
  Tensor<double> v = normal_tensor<double>({2, 4, 6}, rng);
  Tensor<double> q = normal_tensor<double>({2, 5}, rng);
  Attended<double> att = attend(m, v, q);
  Tensor<double> logits = classify(m, att.v_att, q, 3);
  REQUIRE(logits.shape() == Shape{2, 3});
  CHECK_THROWS_AS(classify(m, att.v_att, q, 7), DimensionError);

  m.proj_answers = zeros<double>(m.proj_answers.shape());
  Tensor<double> zeroed = classify(m, att.v_att, q, 3);
  CHECK(sum(zeroed) == 0.0);
}

TEST_CASE("attend validates the grid") {
  auto m = small_attention(2, 11);
  Tensor<double> v({1, 0, 6});
  Tensor<double> q({1, 5});
  CHECK_THROWS_AS(attend(m, v, q), DimensionError);
  Tensor<double> wrong({1, 3, 4});
  CHECK_THROWS_AS(attend(m, wrong, q), DimensionError);
}

TEST_CASE("build_attention validates its specs") {
  AttentionConfig cfg;
  cfg.glimpses = 0;
  cfg.inner_fusion.d_v = 6;
  cfg.inner_fusion.d_q = 5;
  cfg.outer_fusion = cfg.inner_fusion;
  CHECK_THROWS_AS(build_attention<double>(cfg, 6, 5, 3), ConfigError);
  cfg.glimpses = 2;
  CHECK_THROWS_AS(build_attention<double>(cfg, 6, 5, 3), ConfigError);
}
