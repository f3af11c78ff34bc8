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

#include "evdistill/mask_head.h"

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

namespace evdistill {

Tensor solve_linear(Tensor a, Tensor b) {
  const size_t n = a.rows();
  if (a.cols() != n || b.size() != n) throw std::invalid_argument("solve_linear: shape mismatch");
  for (size_t col = 0; col < n; ++col) {
    size_t pivot = col;
    for (size_t r = col + 1; r < n; ++r)
      if (std::abs(a(r, col)) > std::abs(a(pivot, col))) pivot = r;
    if (std::abs(a(pivot, col)) < 1e-300) throw std::domain_error("solve_linear: singular matrix");
    if (pivot != col) {
      for (size_t c = 0; c < n; ++c) std::swap(a(col, c), a(pivot, c));
      std::swap(b[col], b[pivot]);
    }
    for (size_t r = col + 1; r < n; ++r) {
      const double f = a(r, col) / a(col, col);
      if (f == 0.0) continue;
      for (size_t c = col; c < n; ++c) a(r, c) -= f * a(col, c);
      b[r] -= f * b[col];
    }
  }
  Tensor x({n});
  for (size_t i = n; i-- > 0;) {
    double acc = b[i];
    for (size_t c = i + 1; c < n; ++c) acc -= a(i, c) * x[c];
    x[i] = acc / a(i, i);
  }
  return x;
}

namespace {

// Foreground fraction of every patch of the union of masks.
std::vector<double> patch_coverage(const ViTConfig& config, const MaskSet& masks) {
  const size_t grid = config.grid(), p = config.patch_size;
  std::vector<double> cover(config.tokens(), 0.0);
  for (size_t y = 0; y < masks.height; ++y) {
    for (size_t x = 0; x < masks.width; ++x) {
      bool on = false;
      for (const Mask& m : masks.masks) on = on || m.at(y, x);
      if (on) cover[(y / p) * grid + (x / p)] += 1.0;
    }
  }
  for (double& v : cover) v /= static_cast<double>(p * p);
  return cover;
}

}  // namespace

MaskHead fit_mask_head(const ViTParams& teacher, std::span<const Sample> data, double ridge) {
  if (data.empty()) throw std::invalid_argument("fit_mask_head: no samples");
  const ViTConfig& config = teacher.config;
  const size_t c = config.embed_dim, n = c + 1;
  Tensor gram({n, n});
  Tensor rhs({n});
  for (const Sample& s : data) {
    if (s.masks.height != config.img_size || s.masks.width != config.img_size) {
      throw std::invalid_argument("fit_mask_head: mask dims do not match the encoder input");
    }
    const Tensor final_layer = forward_capture(teacher, s.image).embeddings.back();
    const std::vector<double> target = patch_coverage(config, s.masks);
    std::vector<double> row(n, 1.0);
    for (size_t t = 0; t < final_layer.rows(); ++t) {
      for (size_t j = 0; j < c; ++j) row[j] = final_layer(t, j);
      for (size_t i = 0; i < n; ++i) {
        rhs[i] += row[i] * target[t];
        for (size_t j = 0; j < n; ++j) gram(i, j) += row[i] * row[j];
      }
    }
  }
  for (size_t i = 0; i < c; ++i) gram(i, i) += ridge;
  const Tensor solution = solve_linear(gram, rhs);
  MaskHead head;
  head.weights = Tensor({c});
  for (size_t j = 0; j < c; ++j) head.weights[j] = solution[j];
  head.bias = solution[c];
  return head;
}

Tensor token_scores(const MaskHead& head, const Tensor& final_embeddings) {
  Tensor scores = matvec(final_embeddings, head.weights);
  for (double& v : scores.data()) v += head.bias;
  return scores;
}

MaskSet predict_masks(const MaskHead& head, const ViTConfig& config, const Tensor& final_embeddings) {
  const Tensor scores = token_scores(head, final_embeddings);
  const size_t size = config.img_size, grid = config.grid(), p = config.patch_size;
  std::vector<uint8_t> fg(size * size, 0);
  for (size_t y = 0; y < size; ++y)
    for (size_t x = 0; x < size; ++x)
      fg[y * size + x] = scores[(y / p) * grid + (x / p)] > head.threshold ? 1 : 0;

  MaskSet set{size, size, {}};
  std::vector<size_t> label(size * size, 0);
  std::vector<size_t> stack;
  for (size_t start = 0; start < fg.size(); ++start) {
    if (!fg[start] || label[start]) continue;
    Mask m = Mask::empty(set.masks.size() + 1, size, size);
    label[start] = m.id;
    stack.push_back(start);
    while (!stack.empty()) {
      const size_t i = stack.back();
      stack.pop_back();
      m.cells[i] = 1;
      const size_t y = i / size, x = i % size;
      const size_t neighbours[4] = {y > 0 ? i - size : i, y + 1 < size ? i + size : i,
                                    x > 0 ? i - 1 : i, x + 1 < size ? i + 1 : i};
      for (size_t j : neighbours) {
        if (fg[j] && !label[j]) {
          label[j] = m.id;
          stack.push_back(j);
        }
      }
    }
    set.masks.push_back(std::move(m));
  }
  return set;
}

}  // namespace evdistill
