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

#ifndef EVDISTILL_AUTODIFF_H_
#define EVDISTILL_AUTODIFF_H_

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "evdistill/tensor.h"

namespace evdistill {

class Tape;

// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Tensor& value() const;
  bool requires_grad() const;
};

// Reverse-mode recorder. Nodes are appended in evaluation order, so a single
// reverse sweep over the node list is a valid topological order.
class Tape {
 public:
  // Receives the gradient of the node's output and one slot per input; a slot
  // is nullptr when that input does not require a gradient.
  using BackwardFn = std::function<void(const Tensor& out_grad, std::span<Tensor*> in_grads)>;

  Var constant(Tensor value);
  Var parameter(Tensor value);
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

  // Seeds d(loss)/d(loss) = 1 and accumulates into every node that requires a
  // gradient. `loss` must be a single-element tensor.
  void backward(Var loss);

  // Gradient accumulated by the last backward(); zeros when none reached v.
  Tensor grad(Var v) const;

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool has_grad = false;
    std::vector<int> inputs;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

// Differentiable operations. All inputs must live on the same tape.
namespace ad {

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
// x[m×n] + b broadcast over rows; b has n elements.
Var add_bias(Var x, Var b);
Var transpose(Var a);
Var softmax_rows(Var x);
Var layer_norm_rows(Var x, Var gamma, Var beta, double eps = 1e-6);
// Exact (erf) GELU.
Var gelu(Var x);
Var slice_cols(Var x, size_t begin, size_t count);
Var concat_cols(std::span<const Var> parts);
// Row r of the result is row r of `b` when take_b[r], else row r of `a`.
Var select_rows(Var a, Var b, const std::vector<bool>& take_b);
// Divides each row by its Euclidean norm.
Var normalize_rows(Var x);
Var sum(Var x);
// (1/N) * sum_{r,c} w[r] * |a(r,c) - b(r,c)|, N = rows*cols.
Var weighted_abs_mean(Var a, Var b, const Tensor& row_weights);
// mean of (a-b)^2 over all elements.
Var mean_squared_diff(Var a, Var b);
// sum_i weights[i] * scalars[i].
Var weighted_sum(std::span<const Var> scalars, std::span<const double> weights);

}  // namespace ad

using ScalarFunction = std::function<Var(Tape&, std::span<const Var>)>;

struct GradCheckReport {
  double max_relative_error = 0.0;
  size_t worst_param = 0;
  size_t worst_element = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Compares tape gradients of f against central differences for every element
// of every parameter. Relative error is |a - n| / max(1, |a|, |n|).
GradCheckReport grad_check(const ScalarFunction& f, std::span<const Tensor> params,
                           double step = 1e-5);

}  // namespace evdistill

#endif  // EVDISTILL_AUTODIFF_H_
