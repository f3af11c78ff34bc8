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

#ifndef EVDISTILL_TESTS_TEST_UTIL_H_
#define EVDISTILL_TESTS_TEST_UTIL_H_

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "evdistill/tensor.h"

namespace evdistill::testing {

// Random rank-2 tensor with entries in [lo, hi).
inline Tensor random_matrix(size_t rows, size_t cols, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t({rows, cols});
  for (double& v : t.data()) v = u(rng);
  return t;
}

// Positive entries scaled so each row sums to one.
inline Tensor random_row_stochastic(size_t k, std::mt19937_64& rng) {
  Tensor t = random_matrix(k, k, rng, 0.01, 1.0);
  for (size_t r = 0; r < k; ++r) {
    double s = 0.0;
    for (double v : t.row(r)) s += v;
    for (double& v : t.row(r)) v /= s;
  }
  return t;
}

inline std::vector<Tensor> random_attention_stack(size_t depth, size_t k, std::mt19937_64& rng) {
  std::vector<Tensor> stack;
  for (size_t i = 0; i < depth; ++i) stack.push_back(random_row_stochastic(k, rng));
  return stack;
}

// Triple-loop product, independent of the library kernel.
inline Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  Tensor out({a.rows(), b.cols()});
  for (size_t i = 0; i < a.rows(); ++i)
    for (size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (size_t p = 0; p < a.cols(); ++p) s += a(i, p) * b(p, j);
      out(i, j) = s;
    }
  return out;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("evdistill_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace evdistill::testing

#endif  // EVDISTILL_TESTS_TEST_UTIL_H_
