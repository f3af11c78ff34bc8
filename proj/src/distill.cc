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

#include "evdistill/distill.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

namespace evdistill {

DistillConfig DistillConfig::for_depth(size_t depth) {
  DistillConfig cfg;
  cfg.layers = {0};
  cfg.gammas = {1.0};
  const double quarter_gammas[] = {0.1, 0.4, 0.7, 1.0};
  for (size_t j = 1; j <= 4; ++j) {
    const size_t layer = (j * depth + 3) / 4;
    if (layer == 0) continue;
    if (cfg.layers.back() == layer) {
      cfg.gammas.back() = quarter_gammas[j - 1];
    } else {
      cfg.layers.push_back(layer);
      cfg.gammas.push_back(quarter_gammas[j - 1]);
    }
  }
  return cfg;
}

void DistillConfig::validate(size_t depth) const {
  if (layers.empty()) throw std::invalid_argument("distill: layer set is empty");
  if (layers.size() != gammas.size()) {
    throw std::invalid_argument("distill: " + std::to_string(layers.size()) + " layers but " +
                                std::to_string(gammas.size()) + " gammas");
  }
  for (size_t l : layers) {
    if (l > depth) {
      throw std::out_of_range("distill: layer " + std::to_string(l) + " exceeds encoder depth " +
                              std::to_string(depth));
    }
  }
  for (double g : gammas) {
    if (!(g >= 0.0) || !std::isfinite(g)) throw std::invalid_argument("distill: gammas must be >= 0");
  }
  if (!(beta >= 0.0 && beta <= 1.0)) throw std::invalid_argument("distill: beta must lie in [0, 1]");
  if (!(mixing_ratio >= 0.0 && mixing_ratio <= 1.0)) {
    throw std::invalid_argument("distill: mixing ratio must lie in [0, 1]");
  }
}

std::vector<size_t> sample_mix_positions(size_t tokens, double ratio, uint64_t seed) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) {
    throw std::invalid_argument("mix_tokens: ratio must lie in [0, 1], got " + std::to_string(ratio));
  }
  const auto count = static_cast<size_t>(std::lround(ratio * static_cast<double>(tokens)));
  std::vector<size_t> order(tokens);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates: the first `count` entries are a uniform sample.
  for (size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<size_t> pick(i, tokens - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  order.resize(count);
  std::sort(order.begin(), order.end());
  return order;
}

MixedInput mix_tokens(const Tensor& event_tokens, const Tensor& image_tokens, double ratio,
                      uint64_t seed) {
  if (!event_tokens.same_shape(image_tokens) || event_tokens.rank() != 2) {
    throw std::invalid_argument("mix_tokens: shape mismatch " + shape_string(event_tokens.dims()) +
                                " vs " + shape_string(image_tokens.dims()));
  }
  MixedInput out{event_tokens, sample_mix_positions(event_tokens.rows(), ratio, seed)};
  for (size_t r : out.replaced_positions)
    for (size_t c = 0; c < out.tokens.cols(); ++c) out.tokens(r, c) = image_tokens(r, c);
  return out;
}

WeightedL1 weighted_layer_loss(const Tensor& teacher, const Tensor& student, const Tensor& weights) {
  if (!teacher.same_shape(student) || teacher.rank() != 2) {
    throw std::invalid_argument("weighted_layer_loss: shape mismatch " +
                                shape_string(teacher.dims()) + " vs " + shape_string(student.dims()));
  }
  if (weights.size() != teacher.rows()) {
    throw std::invalid_argument("weighted_layer_loss: " + std::to_string(weights.size()) +
                                " weights for " + std::to_string(teacher.rows()) + " tokens");
  }
  WeightedL1 out;
  for (size_t r = 0; r < teacher.rows(); ++r)
    for (size_t c = 0; c < teacher.cols(); ++c)
      out.sum += weights[r] * std::abs(teacher(r, c) - student(r, c));
  out.mean = out.sum / static_cast<double>(teacher.size());
  return out;
}

Tensor layer_weights(const EmbeddingCapture& teacher, std::span<const Tensor> student_attention,
                     size_t layer, const DistillConfig& cfg) {
  const size_t k = teacher.embeddings.at(0).rows();
  if (layer == 0) return Tensor::ones({k});
  switch (cfg.source) {
    case AttentionSource::kUniform: return Tensor::ones({k});
    case AttentionSource::kTeacher: {
      TransitionStack stack = TransitionStack::from_attention(teacher.attention);
      return token_significance(stack, layer, cfg.beta, cfg.importance, cfg.rollout_horizon).values;
    }
    case AttentionSource::kStudent: {
      TransitionStack stack = TransitionStack::from_attention(student_attention);
      return token_significance(stack, layer, cfg.beta, cfg.importance, cfg.rollout_horizon).values;
    }
    case AttentionSource::kTeacherSingleLayer:
      return significance_single_layer(teacher.attention.at(layer - 1), cfg.beta, cfg.importance)
          .values;
  }
  return Tensor::ones({k});
}

TapedDistillLoss distill_loss(const EmbeddingCapture& teacher, const TapedCapture& student,
                              const DistillConfig& cfg) {
  const size_t depth = teacher.attention.size();
  cfg.validate(depth);
  if (student.embeddings.size() != teacher.embeddings.size()) {
    throw std::invalid_argument("distill_loss: teacher has " +
                                std::to_string(teacher.embeddings.size()) + " layers, student " +
                                std::to_string(student.embeddings.size()));
  }
  Tape& tape = *student.embeddings.front().tape;
  TapedDistillLoss out;
  std::vector<Var> terms;
  for (size_t i = 0; i < cfg.layers.size(); ++i) {
    const size_t layer = cfg.layers[i];
    const Tensor weights = layer_weights(teacher, student.attention, layer, cfg);
    Var target = tape.constant(teacher.embeddings[layer]);
    Var term = ad::weighted_abs_mean(target, student.embeddings[layer], weights);
    terms.push_back(term);
    const double mean = term.value()[0];
    out.terms.push_back({layer, cfg.gammas[i], mean,
                         mean * static_cast<double>(teacher.embeddings[layer].size())});
  }
  out.total = ad::weighted_sum(terms, cfg.gammas);
  return out;
}

DistillLoss distill_loss(const EmbeddingCapture& teacher, const EmbeddingCapture& student,
                         const DistillConfig& cfg) {
  Tape tape;
  TapedCapture taped;
  for (const Tensor& e : student.embeddings) taped.embeddings.push_back(tape.constant(e));
  taped.attention = student.attention;
  TapedDistillLoss loss = distill_loss(teacher, taped, cfg);
  return {loss.total.value()[0], loss.terms};
}

Var affinity_loss(const EmbeddingCapture& teacher, const TapedCapture& student,
                  std::span<const size_t> layers) {
  if (layers.empty()) throw std::invalid_argument("affinity_loss: layer set is empty");
  Tape& tape = *student.embeddings.front().tape;
  std::vector<Var> terms;
  for (size_t layer : layers) {
    if (layer >= teacher.embeddings.size() || layer >= student.embeddings.size()) {
      throw std::out_of_range("affinity_loss: layer " + std::to_string(layer) + " not captured");
    }
    Var xt = tape.constant(teacher.embeddings[layer]);
    Var xs = student.embeddings[layer];
    if (!xt.value().same_shape(xs.value())) throw std::invalid_argument("affinity_loss: shape mismatch");
    Var gt = ad::normalize_rows(ad::matmul(xt, ad::transpose(xt)));
    Var gs = ad::normalize_rows(ad::matmul(xs, ad::transpose(xs)));
    terms.push_back(ad::mean_squared_diff(gt, gs));
  }
  const std::vector<double> ones(terms.size(), 1.0);
  return ad::weighted_sum(terms, ones);
}

double affinity_loss(const EmbeddingCapture& teacher, const EmbeddingCapture& student,
                     std::span<const size_t> layers) {
  Tape tape;
  TapedCapture taped;
  for (const Tensor& e : student.embeddings) taped.embeddings.push_back(tape.constant(e));
  return affinity_loss(teacher, taped, layers).value()[0];
}

}  // namespace evdistill
