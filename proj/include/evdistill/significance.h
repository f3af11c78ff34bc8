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

#ifndef EVDISTILL_SIGNIFICANCE_H_
#define EVDISTILL_SIGNIFICANCE_H_

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "evdistill/tensor.h"

namespace evdistill {

inline constexpr double kDefaultBeta = 0.5;
// Uniform residual-mixing values for the exact transition product ablation.
inline constexpr std::array<double, 3> kAlphaAblation = {0.90, 0.95, 0.99};

enum class AttentionSource { kTeacher, kStudent, kTeacherSingleLayer, kUniform };

AttentionSource parse_attention_source(std::string_view text);
std::string to_string(AttentionSource source);

// P^(1..n). Each P^(i) is the transpose of block i's head-averaged attention:
// row r holds how much source token r feeds every destination token, so each
// column sums to one.
struct TransitionStack {
  std::vector<Tensor> matrices;

  // Transposes each row-stochastic attention matrix.
  static TransitionStack from_attention(std::span<const Tensor> attention);

  size_t depth() const { return matrices.size(); }
  size_t tokens() const;
  // Throws unless every matrix is square with the same size.
  void validate_shapes() const;
};

bool is_row_stochastic(const Tensor& m, double tol);
bool is_column_stochastic(const Tensor& m, double tol);

// prod_{i=s..n} [alpha_i P^(i) + (1 - alpha_i) I], multiplied left to right in
// increasing i. alphas[j] belongs to layer s + j.
Tensor transition_exact(const TransitionStack& stack, size_t s, std::span<const double> alphas);

// beta * P^(s) ... P^(last) + (1 - beta) I with last = n, or s + horizon - 1
// when horizon > 0.
Tensor transition_approx(const TransitionStack& stack, size_t s, double beta, size_t horizon = 0);

struct SignificanceVector {
  Tensor values;
  size_t source_layer = 0;
  double beta = kDefaultBeta;
  AttentionSource source = AttentionSource::kTeacher;
};

// Rolled-out transition times the final-layer importance vector e (ones when
// empty).
SignificanceVector token_significance(const TransitionStack& stack, size_t s, double beta,
                                      const Tensor& e = {}, size_t horizon = 0);

// Same projection with only one layer's transition.
SignificanceVector significance_single_layer(const Tensor& attention, double beta,
                                             const Tensor& e = {});

SignificanceVector uniform_significance(size_t tokens);

// Frobenius distance of every prefix product P^(1)...P^(i) to the full
// product, for i = 1..n. The last entry is exactly zero.
std::vector<double> convergence_diagnostic(const TransitionStack& stack);

}  // namespace evdistill

#endif  // EVDISTILL_SIGNIFICANCE_H_
