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

#ifndef EVDISTILL_DISTILL_H_
#define EVDISTILL_DISTILL_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "evdistill/autodiff.h"
#include "evdistill/significance.h"
#include "evdistill/tensor.h"
#include "evdistill/vit.h"

namespace evdistill {

struct DistillConfig {
  // Layer 0 is the patch embedding output and is always weighted uniformly.
  std::vector<size_t> layers = {0, 3, 6, 9, 12};
  std::vector<double> gammas = {1.0, 0.1, 0.4, 0.7, 1.0};
  double beta = kDefaultBeta;
  double mixing_ratio = 0.1;
  AttentionSource source = AttentionSource::kTeacher;
  // 0 rolls out to the last block; h > 0 keeps only h transitions per layer.
  size_t rollout_horizon = 0;
  // Final-layer importance; empty means ones.
  Tensor importance;
  uint64_t seed = 0;

  // Defaults scaled to an encoder of the given depth: layer 0 plus the four
  // quarter-depth layers with gammas 0.1, 0.4, 0.7, 1.0. Coinciding layers
  // keep the larger gamma.
  static DistillConfig for_depth(size_t depth);

  void validate(size_t depth) const;
};

struct MixedInput {
  Tensor tokens;
  std::vector<size_t> replaced_positions;  // sorted
};

// round(ratio * k) distinct positions drawn uniformly from a seeded stream.
std::vector<size_t> sample_mix_positions(size_t tokens, double ratio, uint64_t seed);

// Event tokens with round(ratio * k) rows replaced by the same-position image
// token.
MixedInput mix_tokens(const Tensor& event_tokens, const Tensor& image_tokens, double ratio,
                      uint64_t seed);

struct WeightedL1 {
  double mean = 0.0;  // normalised by k*c
  double sum = 0.0;
};

WeightedL1 weighted_layer_loss(const Tensor& teacher, const Tensor& student, const Tensor& weights);

struct LayerTerm {
  size_t layer = 0;
  double gamma = 0.0;
  double mean = 0.0;
  double sum = 0.0;
};

struct DistillLoss {
  double total = 0.0;
  std::vector<LayerTerm> terms;
};

struct TapedDistillLoss {
  Var total;
  std::vector<LayerTerm> terms;
};

// Per-token weights for regularised layer `layer` under cfg.source.
Tensor layer_weights(const EmbeddingCapture& teacher, std::span<const Tensor> student_attention,
                     size_t layer, const DistillConfig& cfg);

// sum_i gamma_i * weighted mean L1 between teacher and student embeddings at
// each layer. The teacher side is constant. Significance computed from
// student attention is treated as a constant as well.
TapedDistillLoss distill_loss(const EmbeddingCapture& teacher, const TapedCapture& student,
                              const DistillConfig& cfg);
DistillLoss distill_loss(const EmbeddingCapture& teacher, const EmbeddingCapture& student,
                         const DistillConfig& cfg);

// Comparator: per layer, mean squared difference between the row-normalised
// Gram matrices X·Xᵀ of teacher and student, summed over layers.
Var affinity_loss(const EmbeddingCapture& teacher, const TapedCapture& student,
                  std::span<const size_t> layers);
double affinity_loss(const EmbeddingCapture& teacher, const EmbeddingCapture& student,
                     std::span<const size_t> layers);

}  // namespace evdistill

#endif  // EVDISTILL_DISTILL_H_
