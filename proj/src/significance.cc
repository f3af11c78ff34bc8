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

#include "evdistill/significance.h"

#include <cmath>
#include <stdexcept>

namespace evdistill {

AttentionSource parse_attention_source(std::string_view text) {
  if (text == "teacher") return AttentionSource::kTeacher;
  if (text == "student") return AttentionSource::kStudent;
  if (text == "teacher_single_layer") return AttentionSource::kTeacherSingleLayer;
  if (text == "uniform") return AttentionSource::kUniform;
  throw std::invalid_argument("unknown attention source '" + std::string(text) + "'");
}

std::string to_string(AttentionSource source) {
  switch (source) {
    case AttentionSource::kTeacher: return "teacher";
    case AttentionSource::kStudent: return "student";
    case AttentionSource::kTeacherSingleLayer: return "teacher_single_layer";
    case AttentionSource::kUniform: return "uniform";
  }
  return "teacher";
}

TransitionStack TransitionStack::from_attention(std::span<const Tensor> attention) {
  TransitionStack stack;
  for (const Tensor& a : attention) stack.matrices.push_back(transpose(a));
  stack.validate_shapes();
  return stack;
}

size_t TransitionStack::tokens() const {
  if (matrices.empty()) throw std::invalid_argument("transition stack is empty");
  return matrices.front().rows();
}

void TransitionStack::validate_shapes() const {
  if (matrices.empty()) throw std::invalid_argument("transition stack is empty");
  const size_t k = matrices.front().rank() == 2 ? matrices.front().rows() : 0;
  for (size_t i = 0; i < matrices.size(); ++i) {
    const Tensor& m = matrices[i];
    if (m.rank() != 2 || m.rows() != m.cols() || m.rows() != k) {
      throw std::invalid_argument("transition stack: matrix " + std::to_string(i + 1) + " is " +
                                  shape_string(m.dims()) + ", expected " + shape_string({k, k}));
    }
  }
}

bool is_row_stochastic(const Tensor& m, double tol) {
  for (size_t r = 0; r < m.rows(); ++r) {
    double total = 0.0;
    for (double v : m.row(r)) {
      if (v < 0.0) return false;
      total += v;
    }
    if (std::abs(total - 1.0) > tol) return false;
  }
  return true;
}

bool is_column_stochastic(const Tensor& m, double tol) { return is_row_stochastic(transpose(m), tol); }

namespace {

void check_layer(const TransitionStack& stack, size_t s) {
  stack.validate_shapes();
  if (s < 1 || s > stack.depth()) {
    throw std::out_of_range("source layer " + std::to_string(s) + " outside [1, " +
                            std::to_string(stack.depth()) + "]");
  }
}

void check_unit(double v, const char* what) {
  if (!(v >= 0.0 && v <= 1.0)) {
    throw std::invalid_argument(std::string(what) + " must lie in [0, 1], got " + std::to_string(v));
  }
}

Tensor mix_with_identity(const Tensor& m, double weight) {
  Tensor out = scale(m, weight);
  for (size_t i = 0; i < out.rows(); ++i) out(i, i) += 1.0 - weight;
  return out;
}

SignificanceVector project(const Tensor& transition, const Tensor& e) {
  const size_t k = transition.rows();
  Tensor weights = e.size() == 0 ? Tensor::ones({k}) : e;
  for (double v : weights.data()) {
    if (!(v >= 0.0)) throw std::invalid_argument("importance vector must be nonnegative");
  }
  return SignificanceVector{matvec(transition, weights), 0, kDefaultBeta, AttentionSource::kTeacher};
}

}  // namespace

Tensor transition_exact(const TransitionStack& stack, size_t s, std::span<const double> alphas) {
  check_layer(stack, s);
  const size_t n = stack.depth();
  if (alphas.size() != n - s + 1) {
    throw std::invalid_argument("transition_exact: expected " + std::to_string(n - s + 1) +
                                " alphas, got " + std::to_string(alphas.size()));
  }
  for (double a : alphas) check_unit(a, "alpha");
  Tensor h = Tensor::identity(stack.tokens());
  for (size_t i = s; i <= n; ++i) {
    h = matmul(h, mix_with_identity(stack.matrices[i - 1], alphas[i - s]));
  }
  return h;
}

Tensor transition_approx(const TransitionStack& stack, size_t s, double beta, size_t horizon) {
  check_layer(stack, s);
  check_unit(beta, "beta");
  const size_t last = horizon == 0 ? stack.depth() : std::min(stack.depth(), s + horizon - 1);
  Tensor product = stack.matrices[s - 1];
  for (size_t i = s + 1; i <= last; ++i) product = matmul(product, stack.matrices[i - 1]);
  return mix_with_identity(product, beta);
}

SignificanceVector token_significance(const TransitionStack& stack, size_t s, double beta,
                                      const Tensor& e, size_t horizon) {
  SignificanceVector out = project(transition_approx(stack, s, beta, horizon), e);
  out.source_layer = s;
  out.beta = beta;
  return out;
}

SignificanceVector significance_single_layer(const Tensor& attention, double beta, const Tensor& e) {
  TransitionStack single = TransitionStack::from_attention(std::span(&attention, 1));
  SignificanceVector out = project(transition_approx(single, 1, beta), e);
  out.beta = beta;
  out.source = AttentionSource::kTeacherSingleLayer;
  return out;
}

SignificanceVector uniform_significance(size_t tokens) {
  return SignificanceVector{Tensor::ones({tokens}), 0, 0.0, AttentionSource::kUniform};
}

std::vector<double> convergence_diagnostic(const TransitionStack& stack) {
  stack.validate_shapes();
  std::vector<Tensor> prefixes;
  prefixes.push_back(stack.matrices.front());
  for (size_t i = 1; i < stack.depth(); ++i) prefixes.push_back(matmul(prefixes.back(), stack.matrices[i]));
  const Tensor& full = prefixes.back();
  std::vector<double> out;
  for (const Tensor& p : prefixes) {
    Tensor diff = p;
    for (size_t j = 0; j < diff.size(); ++j) diff[j] -= full[j];
    out.push_back(frobenius_norm(diff));
  }
  return out;
}

}  // namespace evdistill
