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

#include "evdistill/tensor.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace evdistill {

size_t element_count(const std::vector<size_t>& dims) {
  size_t n = 1;
  for (size_t d : dims) n *= d;
  return n;
}

std::string shape_string(const std::vector<size_t>& dims) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < dims.size(); ++i) os << (i ? "x" : "") << dims[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(std::vector<size_t> dims, double fill)
    : dims_(std::move(dims)), data_(element_count(dims_), fill) {
  for (size_t d : dims_) {
    if (d == 0) throw std::invalid_argument("tensor dims must be positive: " + shape_string(dims_));
  }
}

Tensor::Tensor(std::vector<size_t> dims, std::vector<double> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
  for (size_t d : dims_) {
    if (d == 0) throw std::invalid_argument("tensor dims must be positive: " + shape_string(dims_));
  }
  if (data_.size() != element_count(dims_)) {
    throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                " does not match dims " + shape_string(dims_));
  }
}

Tensor Tensor::identity(size_t n) {
  Tensor t({n, n});
  for (size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const size_t r = rows.size();
  const size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw std::invalid_argument("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::reshaped(std::vector<size_t> dims) const {
  return Tensor(std::move(dims), data_);
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double Tensor::sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

namespace {

void require_rank2(const Tensor& t, const char* what) {
  if (t.rank() != 2) {
    throw std::invalid_argument(std::string(what) + ": expected a matrix, got " +
                                shape_string(t.dims()));
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: inner dimensions differ: " + shape_string(a.dims()) +
                                " x " + shape_string(b.dims()));
  }
  const size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out({m, n});
  for (size_t i = 0; i < m; ++i) {
    double* o = &out(i, 0);
    for (size_t p = 0; p < k; ++p) {
      const double av = a(i, p);
      const double* br = b.row(p).data();
      for (size_t j = 0; j < n; ++j) o[j] += av * br[j];
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  Tensor out({a.cols(), a.rows()});
  for (size_t i = 0; i < a.rows(); ++i)
    for (size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

Tensor softmax_rows(const Tensor& x) {
  require_rank2(x, "softmax_rows");
  Tensor out(x.dims());
  for (size_t i = 0; i < x.rows(); ++i) {
    auto in = x.row(i);
    auto o = out.row(i);
    const double mx = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (size_t j = 0; j < in.size(); ++j) {
      o[j] = std::exp(in[j] - mx);
      total += o[j];
    }
    for (double& v : o) v /= total;
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument("add: shape mismatch " + shape_string(a.dims()) + " vs " +
                                shape_string(b.dims()));
  }
  Tensor out = a;
  for (size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Tensor scale(const Tensor& a, double s) {
  Tensor out = a;
  for (double& v : out.data()) v *= s;
  return out;
}

Tensor matvec(const Tensor& a, const Tensor& e) {
  require_rank2(a, "matvec");
  if (e.size() != a.cols()) {
    throw std::invalid_argument("matvec: vector length " + std::to_string(e.size()) +
                                " does not match " + shape_string(a.dims()));
  }
  Tensor out({a.rows()});
  for (size_t i = 0; i < a.rows(); ++i) {
    double acc = 0.0;
    for (size_t j = 0; j < a.cols(); ++j) acc += a(i, j) * e[j];
    out[i] = acc;
  }
  return out;
}

double frobenius_norm(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v * v;
  return std::sqrt(acc);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("max_abs_diff: shape mismatch");
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace evdistill
