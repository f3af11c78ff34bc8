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
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "evdistill/autodiff.h"
#include "evdistill/tensor.h"
#include "test_util.h"

namespace evdistill {
namespace {

using testing::naive_matmul;
using testing::random_matrix;

TEST(Tensor, ShapeAndIndexing) {
  Tensor t({2, 3});
  EXPECT_EQ(t.size(), 6u);
  t(1, 2) = 5.0;
  EXPECT_EQ(t[5], 5.0);
  EXPECT_EQ(shape_string(t.dims()), "[2x3]");
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), std::invalid_argument);
  EXPECT_THROW(t.reshaped({4, 2}), std::invalid_argument);
  EXPECT_EQ(t.reshaped({3, 2})[5], 5.0);
}

TEST(Tensor, MatmulIdentityLeavesMatrix) {
  const Tensor m = Tensor::matrix({{1.5, -2.0}, {0.25, 4.0}});
  EXPECT_EQ(matmul(Tensor::identity(2), m), m);
}

TEST(Tensor, MatmulIdempotentExample) {
  const Tensor p = Tensor::matrix({{1, 1}, {0, 0}});
  EXPECT_EQ(matmul(p, p), p);
}

TEST(Tensor, MatmulMatchesNaiveOracle) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor a = random_matrix(1 + trial % 5, 3 + trial % 4, rng);
    const Tensor b = random_matrix(a.cols(), 2 + trial % 3, rng);
    EXPECT_LE(max_abs_diff(matmul(a, b), naive_matmul(a, b)), 1e-14);
  }
}

TEST(Tensor, MatmulRejectsMismatch) {
  EXPECT_THROW(matmul(Tensor({2, 3}), Tensor({2, 3})), std::invalid_argument);
}

TEST(Tensor, SoftmaxExamples) {
  const Tensor x = Tensor::matrix({{0.0, 0.0}, {1e300, 1e300}, {std::log(1.0), std::log(3.0)}});
  const Tensor y = softmax_rows(x);
  EXPECT_DOUBLE_EQ(y(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(y(1, 0), 0.5);
  EXPECT_DOUBLE_EQ(y(1, 1), 0.5);
  EXPECT_NEAR(y(2, 0), 0.25, 1e-15);
  EXPECT_NEAR(y(2, 1), 0.75, 1e-15);
}

TEST(Tensor, SoftmaxRowsSumToOne) {
  std::mt19937_64 rng(3);
  const Tensor y = softmax_rows(random_matrix(7, 9, rng, -30.0, 30.0));
  for (size_t r = 0; r < y.rows(); ++r) {
    double s = 0.0;
    for (double v : y.row(r)) {
      EXPECT_GE(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Tensor, FrobeniusNorm) {
  EXPECT_DOUBLE_EQ(frobenius_norm(Tensor::matrix({{3, 0}, {0, 4}})), 5.0);
}

TEST(Autodiff, MatmulGradientIsOnesTimesBTranspose) {
  std::mt19937_64 rng(5);
  const Tensor a = random_matrix(3, 4, rng);
  const Tensor b = random_matrix(4, 2, rng);
  Tape tape;
  Var va = tape.parameter(a);
  Var vb = tape.constant(b);
  tape.backward(ad::sum(ad::matmul(va, vb)));
  const Tensor expected = matmul(Tensor::ones({3, 2}), transpose(b));
  EXPECT_LE(max_abs_diff(tape.grad(va), expected), 1e-15);
}

TEST(Autodiff, SquareGradCheck) {
  ScalarFunction f = [](Tape&, std::span<const Var> v) { return ad::sum(ad::mul(v[0], v[0])); };
  const Tensor x = Tensor::vector({3.0});
  const GradCheckReport r = grad_check(f, std::span<const Tensor>(&x, 1), 1e-5);
  EXPECT_DOUBLE_EQ(r.analytic, 6.0);
  EXPECT_NEAR(r.numeric, 6.0, 1e-8);
}

TEST(Autodiff, ConstantFunctionHasZeroGradient) {
  ScalarFunction f = [](Tape& tape, std::span<const Var>) {
    return ad::sum(tape.constant(Tensor::vector({2.0, 5.0})));
  };
  const Tensor x = Tensor::vector({1.0, -1.0});
  const GradCheckReport r = grad_check(f, std::span<const Tensor>(&x, 1), 1e-5);
  EXPECT_EQ(r.analytic, 0.0);
  EXPECT_EQ(r.numeric, 0.0);
  EXPECT_EQ(r.max_relative_error, 0.0);
}

TEST(Autodiff, GradCheckRejectsLargeStep) {
  ScalarFunction f = [](Tape&, std::span<const Var> v) { return ad::sum(v[0]); };
  const Tensor x = Tensor::vector({1.0});
  EXPECT_THROW(grad_check(f, std::span<const Tensor>(&x, 1), 0.1), std::invalid_argument);
}

// Every differentiable op against central differences.
TEST(Autodiff, OpsGradCheck) {
  std::mt19937_64 rng(17);
  const std::vector<Tensor> params = {random_matrix(3, 4, rng), random_matrix(4, 4, rng),
                                      random_matrix(1, 4, rng, 0.5, 1.5),
                                      random_matrix(1, 4, rng)};
  const Tensor weights = Tensor::vector({0.5, 1.5, 1.0});
  const Tensor target_values = random_matrix(3, 4, rng);
  ScalarFunction f = [&](Tape& tape, std::span<const Var> v) {
    Var x = ad::layer_norm_rows(v[0], v[2], v[3]);
    Var h = ad::gelu(ad::add_bias(ad::matmul(x, v[1]), v[3]));
    Var s = ad::softmax_rows(ad::scale(ad::matmul(h, ad::transpose(h)), 0.5));
    Var left = ad::slice_cols(h, 0, 2);
    Var right = ad::slice_cols(h, 2, 2);
    const Var parts[] = {right, left};
    Var swapped = ad::concat_cols(parts);
    Var mixed = ad::select_rows(swapped, v[0], {false, true, false});
    Var n = ad::normalize_rows(ad::add(mixed, tape.constant(Tensor({3, 4}, 0.1))));
    Var target = tape.constant(target_values);
    const Var terms[] = {ad::sum(ad::matmul(s, n)), ad::weighted_abs_mean(n, target, weights),
                         ad::mean_squared_diff(ad::sub(n, h), ad::mul(h, h))};
    const double w[] = {1.0, 0.7, 0.3};
    return ad::weighted_sum(terms, w);
  };
  const GradCheckReport r = grad_check(f, params, 1e-6);
  EXPECT_LE(r.max_relative_error, 1e-7) << "param " << r.worst_param << " element " << r.worst_element;
}

TEST(Autodiff, GeluMatchesErfForm) {
  Tape tape;
  Var x = tape.constant(Tensor::vector({-2.0, 0.0, 1.0}).reshaped({1, 3}));
  const Tensor y = ad::gelu(x).value();
  for (size_t i = 0; i < 3; ++i) {
    const double v = x.value()[i];
    EXPECT_NEAR(y[i], 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0))), 1e-15);
  }
}

}  // namespace
}  // namespace evdistill
