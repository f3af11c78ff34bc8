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

#include "evdistill/synth.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace evdistill {

bool Shape::covers(size_t row, size_t col, double t_ms) const {
  const double cx = static_cast<double>(col) + 0.5;
  const double cy = static_cast<double>(row) + 0.5;
  const double px = x + vx * t_ms;
  const double py = y + vy * t_ms;
  if (kind == ShapeKind::kRectangle) return cx >= px && cx < px + w && cy >= py && cy < py + h;
  return (cx - px) * (cx - px) + (cy - py) * (cy - py) <= radius * radius;
}

namespace {

bool inside(const Shape& s, double t, size_t height, size_t width) {
  const double px = s.x + s.vx * t;
  const double py = s.y + s.vy * t;
  const double W = static_cast<double>(width), H = static_cast<double>(height);
  if (s.kind == ShapeKind::kRectangle) {
    return s.w > 0 && s.h > 0 && px >= 0 && py >= 0 && px + s.w <= W && py + s.h <= H;
  }
  return s.radius > 0 && px - s.radius >= 0 && py - s.radius >= 0 && px + s.radius <= W &&
         py + s.radius <= H;
}

}  // namespace

void SceneSpec::validate() const {
  if (height == 0 || width == 0) throw std::invalid_argument("scene: image dims must be positive");
  if (!(threshold > 0.0)) throw std::invalid_argument("scene: event threshold must be > 0");
  if (!(window_ms > 0.0)) throw std::invalid_argument("scene: window must be > 0 ms");
  if (noise_rate_hz < 0.0) throw std::invalid_argument("scene: noise rate must be >= 0");
  for (size_t i = 0; i < shapes.size(); ++i) {
    if (!inside(shapes[i], 0.0, height, width) || !inside(shapes[i], window_ms, height, width)) {
      throw std::invalid_argument("scene: shape " + std::to_string(i) + " leaves the image");
    }
  }
}

TimeWindow SceneSpec::window() const {
  return {0, static_cast<int64_t>(std::llround(window_ms * 1000.0))};
}

SceneSpec random_scene(const RandomSceneOptions& options, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SceneSpec spec;
  spec.height = options.height;
  spec.width = options.width;
  spec.window_ms = options.window_ms;
  spec.threshold = options.threshold;
  spec.seed = seed;
  const double H = static_cast<double>(options.height), W = static_cast<double>(options.width);
  const double min_dim = std::min(H, W);
  const size_t count = 1 + static_cast<size_t>(unit(rng) * static_cast<double>(options.max_shapes));
  for (size_t i = 0; i < std::min(count, options.max_shapes); ++i) {
    for (int attempt = 0; attempt < 100; ++attempt) {
      Shape s;
      s.kind = unit(rng) < 0.5 ? ShapeKind::kRectangle : ShapeKind::kDisk;
      s.vx = (2.0 * unit(rng) - 1.0) * options.max_speed;
      s.vy = (2.0 * unit(rng) - 1.0) * options.max_speed;
      s.intensity = 0.5 + 0.5 * unit(rng);
      if (s.kind == ShapeKind::kRectangle) {
        s.w = std::floor(min_dim * (0.2 + 0.25 * unit(rng)));
        s.h = std::floor(min_dim * (0.2 + 0.25 * unit(rng)));
        s.x = std::floor(unit(rng) * (W - s.w));
        s.y = std::floor(unit(rng) * (H - s.h));
      } else {
        s.radius = min_dim * (0.1 + 0.12 * unit(rng));
        s.x = s.radius + unit(rng) * (W - 2.0 * s.radius);
        s.y = s.radius + unit(rng) * (H - 2.0 * s.radius);
      }
      if (inside(s, 0.0, spec.height, spec.width) &&
          inside(s, spec.window_ms, spec.height, spec.width)) {
        spec.shapes.push_back(s);
        break;
      }
    }
  }
  spec.validate();
  return spec;
}

namespace {

void check_time(const SceneSpec& spec, double t_ms) {
  if (!(t_ms >= 0.0 && t_ms <= spec.window_ms)) {
    throw std::out_of_range("scene: t = " + std::to_string(t_ms) + " ms outside [0, " +
                            std::to_string(spec.window_ms) + "]");
  }
}

std::vector<double> intensity_map(const SceneSpec& spec, double t_ms) {
  std::vector<double> out(spec.height * spec.width, spec.background);
  for (const Shape& s : spec.shapes)
    for (size_t r = 0; r < spec.height; ++r)
      for (size_t c = 0; c < spec.width; ++c)
        if (s.covers(r, c, t_ms)) out[r * spec.width + c] = s.intensity;
  return out;
}

}  // namespace

Tensor render_frame(const SceneSpec& spec, double t_ms) {
  check_time(spec, t_ms);
  const std::vector<double> gray = intensity_map(spec, t_ms);
  Tensor frame({spec.height, spec.width, 3});
  for (size_t i = 0; i < gray.size(); ++i)
    for (size_t c = 0; c < 3; ++c) frame[i * 3 + c] = gray[i];
  return frame;
}

std::vector<Event> generate_events(const SceneSpec& spec) {
  spec.validate();
  const size_t pixels = spec.height * spec.width;
  const double theta = spec.threshold;
  const int64_t end_us = spec.window().end_us;
  const auto steps = static_cast<size_t>(std::ceil(spec.window_ms));

  auto log_map = [&](double t) {
    std::vector<double> l = intensity_map(spec, std::min(t, spec.window_ms));
    for (double& v : l) v = std::log(v + 1.0);
    return l;
  };

  std::vector<Event> events;
  std::vector<double> level = log_map(0.0);
  std::vector<double> reference = level;
  for (size_t step = 0; step < steps; ++step) {
    const double t0 = static_cast<double>(step);
    const double t1 = std::min(t0 + 1.0, spec.window_ms);
    const std::vector<double> next = log_map(t1);
    std::vector<Event> batch;
    for (size_t i = 0; i < pixels; ++i) {
      const double l0 = level[i], l1 = next[i];
      if (l1 == l0) continue;
      const int8_t polarity = l1 > l0 ? 1 : -1;
      while (polarity > 0 ? (l1 - reference[i] >= theta) : (reference[i] - l1 >= theta)) {
        reference[i] += polarity * theta;
        const double frac = (reference[i] - l0) / (l1 - l0);
        const double t_ms = t0 + std::clamp(frac, 0.0, 1.0) * (t1 - t0);
        const auto t_us = std::min(end_us, static_cast<int64_t>(std::floor(t_ms * 1000.0)));
        batch.push_back({t_us, static_cast<int32_t>(i % spec.width),
                         static_cast<int32_t>(i / spec.width), polarity});
      }
    }
    std::stable_sort(batch.begin(), batch.end(),
                     [](const Event& a, const Event& b) { return a.t < b.t; });
    events.insert(events.end(), batch.begin(), batch.end());
    level = next;
  }

  if (spec.noise_rate_hz > 0.0) {
    std::mt19937_64 rng(spec.seed ^ 0x6e6f697365ULL);
    const double expected =
        spec.noise_rate_hz * static_cast<double>(pixels) * spec.window_ms / 1000.0;
    std::poisson_distribution<size_t> count(expected);
    std::uniform_int_distribution<int64_t> when(0, end_us);
    std::uniform_int_distribution<size_t> where(0, pixels - 1);
    std::bernoulli_distribution positive(0.5);
    const size_t n = count(rng);
    for (size_t j = 0; j < n; ++j) {
      const size_t i = where(rng);
      events.push_back({when(rng), static_cast<int32_t>(i % spec.width),
                        static_cast<int32_t>(i / spec.width), static_cast<int8_t>(positive(rng) ? 1 : -1)});
    }
    std::stable_sort(events.begin(), events.end(),
                     [](const Event& a, const Event& b) { return a.t < b.t; });
  }
  return events;
}

MaskSet ground_truth_masks(const SceneSpec& spec, double t_ms) {
  check_time(spec, t_ms);
  MaskSet set{spec.height, spec.width, {}};
  std::vector<size_t> owner(spec.height * spec.width, 0);
  for (size_t s = 0; s < spec.shapes.size(); ++s)
    for (size_t r = 0; r < spec.height; ++r)
      for (size_t c = 0; c < spec.width; ++c)
        if (spec.shapes[s].covers(r, c, t_ms)) owner[r * spec.width + c] = s + 1;
  for (size_t s = 1; s <= spec.shapes.size(); ++s) {
    Mask m = Mask::empty(s, spec.height, spec.width);
    for (size_t i = 0; i < owner.size(); ++i) m.cells[i] = owner[i] == s ? 1 : 0;
    if (m.area() > 0) set.masks.push_back(std::move(m));
  }
  return set;
}

Sample make_sample(const SceneSpec& spec, VoxelOptions voxel, bool normalize) {
  const std::vector<Event> events = generate_events(spec);
  EventVolume volume = voxelize(events, spec.window(), spec.height, spec.width, voxel);
  if (normalize) volume = normalize_volume(volume);
  return Sample{render_frame(spec, spec.window_ms), std::move(volume.grid),
                ground_truth_masks(spec, spec.window_ms)};
}

}  // namespace evdistill
