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

#ifndef EVDISTILL_MASK_HEAD_H_
#define EVDISTILL_MASK_HEAD_H_

#include <span>

#include "evdistill/metrics.h"
#include "evdistill/synth.h"
#include "evdistill/tensor.h"
#include "evdistill/vit.h"

namespace evdistill {

// Minimal per-token foreground classifier over final-layer embeddings. It
// stands in for a segmentation decoder so the metric pipeline can run end to
// end; it is not a promptable mask decoder.
struct MaskHead {
  Tensor weights;  // [c]
  double bias = 0.0;
  double threshold = 0.5;
};

// Ridge regression of each token's foreground fraction on the frozen
// teacher's final embeddings of the training images.
MaskHead fit_mask_head(const ViTParams& teacher, std::span<const Sample> data, double ridge = 1e-3);

Tensor token_scores(const MaskHead& head, const Tensor& final_embeddings);

// Thresholds token scores, paints each selected token's patch, and splits
// the foreground into 4-connected instances (ids 1.. in scan order).
MaskSet predict_masks(const MaskHead& head, const ViTConfig& config, const Tensor& final_embeddings);

// Solves the dense system a·x = b by Gaussian elimination with partial
// pivoting. Throws on a singular matrix.
Tensor solve_linear(Tensor a, Tensor b);

}  // namespace evdistill

#endif  // EVDISTILL_MASK_HEAD_H_
