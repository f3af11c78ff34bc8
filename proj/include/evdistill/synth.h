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

#ifndef EVDISTILL_SYNTH_H_
#define EVDISTILL_SYNTH_H_

#include <cstddef>
#include <cstdint>
#include <vector>

#include "evdistill/events.h"
#include "evdistill/metrics.h"
#include "evdistill/tensor.h"

namespace evdistill {

enum class ShapeKind { kRectangle, kDisk };

// A rectangle is anchored at its top-left corner (x, y) with extent w×h; a
// disk at its centre with the given radius. Velocities are in px/ms.
struct Shape {
  ShapeKind kind = ShapeKind::kRectangle;
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;
  double radius = 0.0;
  double vx = 0.0;
  double vy = 0.0;
  double intensity = 1.0;

  // Pixel (row, col) is covered when its centre lies inside the shape at t.
  bool covers(size_t row, size_t col, double t_ms) const;
};

struct SceneSpec {
  size_t height = 32;
  size_t width = 32;
  std::vector<Shape> shapes;
  double background = 0.1;
  double window_ms = 40.0;
  double threshold = 0.2;  // log-intensity contrast
  double noise_rate_hz = 0.0;  // per pixel
  uint64_t seed = 0;

  // Throws when a shape leaves the image during the window or theta <= 0.
  void validate() const;
  TimeWindow window() const;
};

struct RandomSceneOptions {
  size_t height = 32;
  size_t width = 32;
  size_t max_shapes = 3;
  double window_ms = 40.0;
  double threshold = 0.2;
  double max_speed = 0.15;  // px/ms
};

SceneSpec random_scene(const RandomSceneOptions& options, uint64_t seed);

// H×W×3 grayscale frame at time t (ms), later shapes drawn on top.
Tensor render_frame(const SceneSpec& spec, double t_ms);

// Ideal event camera on log(I + 1) with 1 ms simulation steps and linear
// interpolation of crossing times inside a step. Sorted by timestamp.
std::vector<Event> generate_events(const SceneSpec& spec);

// One mask per visible shape at time t; ids are 1-based shape indices.
// Shapes fully hidden by later shapes are omitted.
MaskSet ground_truth_masks(const SceneSpec& spec, double t_ms);

// Paired training sample: frame and masks at the end of the window, events
// voxelised over the whole window.
struct Sample {
  Tensor image;
  Tensor events;
  MaskSet masks;
};

Sample make_sample(const SceneSpec& spec, VoxelOptions voxel = {}, bool normalize = true);

}  // namespace evdistill

#endif  // EVDISTILL_SYNTH_H_
