/* Copyright 2026 The EvDistill Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <cmath>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "evdistill/distill.h"
#include "evdistill/vit.h"
#include "test_util.h"

namespace evdistill {
namespace {

using testing::random_matrix;

EmbeddingCapture random_capture(const ViTConfig& c, uint64_t seed) {
  std::mt19937_64 rng(seed);
  return forward_tokens(ViTParams::init(c, seed), random_matrix(c.tokens(), c.embed_dim, rng));
}

TEST(DistillConfig, ForDepth) {
  const DistillConfig twelve = DistillConfig::for_depth(12);
  EXPECT_EQ(twelve.layers, (std::vector<size_t>{0, 3, 6, 9, 12}));
  EXPECT_EQ(twelve.gammas, (std::vector<double>{1.0, 0.1, 0.4, 0.7, 1.0}));
  const DistillConfig defaults;
  EXPECT_EQ(defaults.layers, twelve.layers);
  EXPECT_EQ(defaults.gammas, twelve.gammas);
  EXPECT_EQ(defaults.beta, 0.5);
  EXPECT_EQ(DistillConfig::for_depth(4).layers, (std::vector<size_t>{0, 1, 2, 3, 4}));
  EXPECT_EQ(DistillConfig::for_depth(2).layers, (std::vector<size_t>{0, 1, 2}));
  EXPECT_EQ(DistillConfig::for_depth(2).gammas, (std::vector<double>{1.0, 0.4, 1.0}));
}

TEST(DistillConfig, ValidateRejects) {
  DistillConfig c = DistillConfig::for_depth(4);
  c.gammas.pop_back();
  EXPECT_THROW(c.validate(4), std::invalid_argument);
  c = DistillConfig::for_depth(4);
  EXPECT_THROW(c.validate(3), std::out_of_range);
  c.beta = 1.5;
  EXPECT_THROW(c.validate(4), std::invalid_argument);
}

TEST(MixTokens, RatioZeroAndOne) {
  std::mt19937_64 rng(1);
  const Tensor ev = random_matrix(9, 4, rng);
  const Tensor im = random_matrix(9, 4, rng);
  const MixedInput none = mix_tokens(ev, im, 0.0, 5);
  EXPECT_EQ(none.tokens, ev);
  EXPECT_TRUE(none.replaced_positions.empty());
  EXPECT_EQ(mix_tokens(ev, im, 1.0, 5).tokens, im);
}

TEST(MixTokens, QuarterOfFourReplacesOne) {
  std::mt19937_64 rng(2);
  const Tensor ev = random_matrix(4, 3, rng);
  const Tensor im = random_matrix(4, 3, rng);
  const MixedInput m = mix_tokens(ev, im, 0.25, 77);
  ASSERT_EQ(m.replaced_positions.size(), 1u);
  const size_t p = m.replaced_positions[0];
  for (size_t r = 0; r < 4; ++r)
    for (size_t c = 0; c < 3; ++c) EXPECT_EQ(m.tokens(r, c), r == p ? im(r, c) : ev(r, c));
  EXPECT_EQ(mix_tokens(ev, im, 0.25, 77).replaced_positions, m.replaced_positions);
}

TEST(MixTokens, PositionCountsAndDistinctness) {
  for (uint64_t seed = 0; seed < 100; ++seed) {
    const size_t k = 1 + seed % 40;
    const double ratio = (seed % 13) / 12.0;
    const auto pos = sample_mix_positions(k, ratio, seed);
    EXPECT_EQ(pos.size(), static_cast<size_t>(std::lround(ratio * static_cast<double>(k))));
    EXPECT_EQ(std::set<size_t>(pos.begin(), pos.end()).size(), pos.size());
    for (size_t p : pos) EXPECT_LT(p, k);
  }
  EXPECT_THROW(sample_mix_positions(4, 1.5, 0), std::invalid_argument);
}

TEST(MixTokens, PositionsAreRoughlyUniform) {
  std::vector<int> hits(16, 0);
  for (uint64_t seed = 0; seed < 4000; ++seed)
    for (size_t p : sample_mix_positions(16, 0.25, seed)) ++hits[p];
  for (int h : hits) EXPECT_NEAR(h, 1000, 150);
}

TEST(WeightedLayerLoss, Examples) {
  std::mt19937_64 rng(3);
  const Tensor x = random_matrix(5, 4, rng);
  EXPECT_EQ(weighted_layer_loss(x, x, Tensor::ones({5})).mean, 0.0);

  const WeightedL1 single =
      weighted_layer_loss(Tensor::matrix({{2.0}}), Tensor::matrix({{0.0}}), Tensor::vector({1.5}));
  EXPECT_EQ(single.sum, 3.0);
  EXPECT_EQ(single.mean, 3.0);

  const Tensor y = random_matrix(5, 4, rng);
  double l1 = 0.0;
  for (size_t i = 0; i < x.size(); ++i) l1 += std::abs(x[i] - y[i]);
  EXPECT_NEAR(weighted_layer_loss(x, y, Tensor::ones({5})).mean, l1 / 20.0, 1e-15);
  EXPECT_THROW(weighted_layer_loss(x, y, Tensor::ones({4})), std::invalid_argument);
}

TEST(DistillLoss, IdenticalCapturesGiveZero) {
  const ViTConfig c;
  const EmbeddingCapture cap = random_capture(c, 4);
  const DistillLoss loss = distill_loss(cap, cap, DistillConfig::for_depth(c.depth));
  EXPECT_EQ(loss.total, 0.0);
  for (const LayerTerm& t : loss.terms) EXPECT_EQ(t.mean, 0.0);
}

TEST(DistillLoss, UniformSourceIsPlainWeightedL1) {
  const ViTConfig c;
  const EmbeddingCapture t = random_capture(c, 5);
  const EmbeddingCapture s = random_capture(c, 6);
  DistillConfig cfg = DistillConfig::for_depth(c.depth);
  cfg.source = AttentionSource::kUniform;
  double expected = 0.0;
  for (size_t i = 0; i < cfg.layers.size(); ++i) {
    const Tensor& a = t.embeddings[cfg.layers[i]];
    const Tensor& b = s.embeddings[cfg.layers[i]];
    double l1 = 0.0;
    for (size_t j = 0; j < a.size(); ++j) l1 += std::abs(a[j] - b[j]);
    expected += cfg.gammas[i] * l1 / static_cast<double>(a.size());
  }
  EXPECT_NEAR(distill_loss(t, s, cfg).total, expected, 1e-12);
}

// Term-by-term recomposition from token_significance and weighted_layer_loss.
TEST(DistillLoss, TeacherSourceMatchesComposition) {
  const ViTConfig c;
  for (uint64_t seed = 0; seed < 10; ++seed) {
    const EmbeddingCapture t = random_capture(c, 10 + seed);
    const EmbeddingCapture s = random_capture(c, 30 + seed);
    for (AttentionSource source : {AttentionSource::kTeacher, AttentionSource::kStudent,
                                   AttentionSource::kTeacherSingleLayer}) {
      DistillConfig cfg = DistillConfig::for_depth(c.depth);
      cfg.source = source;
      const std::vector<Tensor>& attention = source == AttentionSource::kStudent ? s.attention : t.attention;
      const TransitionStack stack = TransitionStack::from_attention(attention);
      double expected = 0.0;
      for (size_t i = 0; i < cfg.layers.size(); ++i) {
        const size_t layer = cfg.layers[i];
        Tensor w = Tensor::ones({c.tokens()});
        if (layer > 0) {
          w = source == AttentionSource::kTeacherSingleLayer
                  ? significance_single_layer(attention[layer - 1], cfg.beta).values
                  : token_significance(stack, layer, cfg.beta).values;
        }
        expected += cfg.gammas[i] * weighted_layer_loss(t.embeddings[layer], s.embeddings[layer], w).mean;
      }
      EXPECT_NEAR(distill_loss(t, s, cfg).total, expected, 1e-13);
    }
  }
}

TEST(DistillLoss, LayerZeroIsAlwaysUniform) {
  const ViTConfig c;
  const EmbeddingCapture t = random_capture(c, 40);
  const Tensor w = layer_weights(t, t.attention, 0, DistillConfig::for_depth(c.depth));
  EXPECT_EQ(w, Tensor::ones({c.tokens()}));
}

TEST(AffinityLoss, Examples) {
  const ViTConfig c;
  const EmbeddingCapture t = random_capture(c, 50);
  const std::vector<size_t> layers = {0, 2, 4};
  EXPECT_EQ(affinity_loss(t, t, layers), 0.0);

  EmbeddingCapture doubled = t;
  for (Tensor& e : doubled.embeddings) e = scale(e, 2.0);
  EXPECT_NEAR(affinity_loss(t, doubled, layers), 0.0, 1e-15);

  EmbeddingCapture basis = t;
  EmbeddingCapture other = t;
  for (size_t l = 0; l < t.embeddings.size(); ++l) {
    basis.embeddings[l] = Tensor({c.tokens(), c.embed_dim});
    other.embeddings[l] = Tensor({c.tokens(), c.embed_dim});
    for (size_t r = 0; r < c.tokens(); ++r) {
      basis.embeddings[l](r, r % c.embed_dim) = 1.0;
      other.embeddings[l](r, 0) = 1.0;
    }
  }
  EXPECT_GT(affinity_loss(basis, other, layers), 0.0);
}

}  // namespace
}  // namespace evdistill
