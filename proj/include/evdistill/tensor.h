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

#ifndef EVDISTILL_TENSOR_H_
#define EVDISTILL_TENSOR_H_

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace evdistill {

// Dense row-major tensor of 64-bit reals. Value semantic.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<size_t> dims, double fill = 0.0);
  Tensor(std::vector<size_t> dims, std::vector<double> data);

  static Tensor zeros(std::vector<size_t> dims) { return Tensor(std::move(dims)); }
  static Tensor ones(std::vector<size_t> dims) { return Tensor(std::move(dims), 1.0); }
  static Tensor identity(size_t n);
  // Rank-2 tensor from nested rows; all rows must have equal length.
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor vector(std::initializer_list<double> values);

  const std::vector<size_t>& dims() const { return dims_; }
  size_t rank() const { return dims_.size(); }
  size_t size() const { return data_.size(); }
  size_t dim(size_t axis) const { return dims_.at(axis); }

  // Rank-2 accessors.
  size_t rows() const { return dims_.at(0); }
  size_t cols() const { return dims_.at(1); }
  double& operator()(size_t r, size_t c) { return data_[r * dims_[1] + c]; }
  double operator()(size_t r, size_t c) const { return data_[r * dims_[1] + c]; }

  double& operator[](size_t i) { return data_[i]; }
  double operator[](size_t i) const { return data_[i]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> row(size_t r) { return {data_.data() + r * dims_[1], dims_[1]}; }
  std::span<const double> row(size_t r) const { return {data_.data() + r * dims_[1], dims_[1]}; }

  Tensor reshaped(std::vector<size_t> dims) const;
  bool same_shape(const Tensor& other) const { return dims_ == other.dims_; }
  bool all_finite() const;
  double sum() const;

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  std::vector<size_t> dims_;
  std::vector<double> data_;
};

std::string shape_string(const std::vector<size_t>& dims);
size_t element_count(const std::vector<size_t>& dims);

// Plain (untracked) linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor softmax_rows(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
// Row sums of a rank-2 tensor times e, i.e. a·e.
Tensor matvec(const Tensor& a, const Tensor& e);
double frobenius_norm(const Tensor& a);
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace evdistill

#endif  // EVDISTILL_TENSOR_H_
