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
#include <map>

#include <gtest/gtest.h>

#include "evdistill/synth.h"

namespace evdistill {
namespace {

Shape rect(double x, double y, double w, double h, double vx = 0.0, double vy = 0.0,
           double intensity = 0.9) {
  Shape s;
  s.x = x;
  s.y = y;
  s.w = w;
  s.h = h;
  s.vx = vx;
  s.vy = vy;
  s.intensity = intensity;
  return s;
}

Shape disk(double x, double y, double r, double intensity = 0.8) {
  Shape s;
  s.kind = ShapeKind::kDisk;
  s.x = x;
  s.y = y;
  s.radius = r;
  s.intensity = intensity;
  return s;
}

size_t left_edge(const Tensor& frame, size_t row, double background) {
  for (size_t c = 0; c < frame.dim(1); ++c)
    if (frame[(row * frame.dim(1) + c) * 3] != background) return c;
  return frame.dim(1);
}

TEST(Render, EmptySceneIsBackground) {
  SceneSpec spec;
  const Tensor f = render_frame(spec, 10.0);
  for (double v : f.data()) EXPECT_EQ(v, spec.background);
}

TEST(Render, RestingShapeIsStatic) {
  SceneSpec spec;
  spec.shapes = {rect(4, 4, 6, 5)};
  EXPECT_EQ(render_frame(spec, 0.0), render_frame(spec, spec.window_ms));
}

TEST(Render, MovingRectangleKinematics) {
  SceneSpec spec;
  spec.width = 64;
  spec.window_ms = 10.0;
  spec.shapes = {rect(2, 4, 6, 6, 1.0)};
  const size_t at0 = left_edge(render_frame(spec, 0.0), 6, spec.background);
  const size_t at5 = left_edge(render_frame(spec, 5.0), 6, spec.background);
  EXPECT_EQ(at5, at0 + 5);
}

TEST(Render, ChannelsAreEqual) {
  SceneSpec spec;
  spec.shapes = {disk(10, 10, 4)};
  const Tensor f = render_frame(spec, 0.0);
  for (size_t i = 0; i < spec.height * spec.width; ++i) {
    EXPECT_EQ(f[i * 3], f[i * 3 + 1]);
    EXPECT_EQ(f[i * 3], f[i * 3 + 2]);
  }
  EXPECT_THROW(render_frame(spec, spec.window_ms + 1.0), std::out_of_range);
}

TEST(SceneSpec, ValidateRejects) {
  SceneSpec spec;
  spec.shapes = {rect(28, 4, 6, 5)};
  EXPECT_THROW(spec.validate(), std::invalid_argument);
  spec.shapes = {rect(20, 4, 6, 5, 0.2)};  // 20 + 8 + 6 > 32 by the end
  EXPECT_THROW(spec.validate(), std::invalid_argument);
  spec.shapes.clear();
  spec.threshold = 0.0;
  EXPECT_THROW(spec.validate(), std::invalid_argument);
}

TEST(Events, StaticSceneIsSilent) {
  SceneSpec spec;
  spec.shapes = {rect(4, 4, 6, 5), disk(20, 20, 5)};
  EXPECT_TRUE(generate_events(spec).empty());
}

TEST(Events, SweepingEdgeEmitsOnThenOff) {
  SceneSpec spec;
  spec.width = 48;
  spec.window_ms = 20.0;
  spec.shapes = {rect(2, 10, 4, 4, 1.0)};  // passes over column 10 during the window
  std::vector<int8_t> polarities;
  for (const Event& e : generate_events(spec))
    if (e.x == 10 && e.y == 11) polarities.push_back(e.p);
  ASSERT_GE(polarities.size(), 2u);
  EXPECT_EQ(polarities.front(), 1);
  EXPECT_EQ(polarities.back(), -1);
}

TEST(Events, HigherThresholdNeverAddsEvents) {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    SceneSpec spec = random_scene({}, seed);
    const size_t base = generate_events(spec).size();
    spec.threshold *= 2.0;
    EXPECT_LE(generate_events(spec).size(), base);
  }
}

TEST(Events, SortedAndInsideWindow) {
  const SceneSpec spec = random_scene({}, 3);
  const std::vector<Event> events = generate_events(spec);
  for (size_t i = 1; i < events.size(); ++i) EXPECT_LE(events[i - 1].t, events[i].t);
  for (const Event& e : events) {
    EXPECT_GE(e.t, 0);
    EXPECT_LE(e.t, spec.window().end_us);
  }
}

// Net polarity times the threshold tracks each pixel's log-intensity change
// to within one threshold, and pixels whose intensity never changes are silent.
TEST(Events, PairingConsistency) {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    const SceneSpec spec = random_scene({}, seed);
    std::map<size_t, int> net;
    std::map<size_t, int> count;
    for (const Event& e : generate_events(spec)) {
      const size_t i = static_cast<size_t>(e.y) * spec.width + static_cast<size_t>(e.x);
      net[i] += e.p;
      ++count[i];
    }
    std::vector<Tensor> frames;
    for (double t = 0.0; t <= spec.window_ms; t += 1.0) frames.push_back(render_frame(spec, t));
    const Tensor& a = frames.front();
    const Tensor& b = frames.back();
    for (size_t i = 0; i < spec.height * spec.width; ++i) {
      const double delta = std::log(b[i * 3] + 1.0) - std::log(a[i * 3] + 1.0);
      EXPECT_LT(std::abs(net[i] * spec.threshold - delta), spec.threshold + 1e-12);
      bool constant = true;
      for (const Tensor& f : frames) constant = constant && f[i * 3] == a[i * 3];
      if (constant) {
        EXPECT_EQ(count[i], 0);
      }
    }
  }
}

TEST(Events, NoiseIsOptIn) {
  SceneSpec spec;
  spec.noise_rate_hz = 50.0;
  spec.seed = 4;
  const std::vector<Event> noisy = generate_events(spec);
  // Expected count 50 Hz * 1024 px * 0.04 s = 2048.
  EXPECT_NEAR(static_cast<double>(noisy.size()), 2048.0, 200.0);
  EXPECT_EQ(generate_events(spec), noisy);
}

TEST(Masks, SingleDiskMatchesFootprint) {
  SceneSpec spec;
  spec.shapes = {disk(12, 14, 5)};
  const MaskSet m = ground_truth_masks(spec, 0.0);
  ASSERT_EQ(m.masks.size(), 1u);
  for (size_t r = 0; r < spec.height; ++r)
    for (size_t c = 0; c < spec.width; ++c) EXPECT_EQ(m.masks[0].at(r, c), spec.shapes[0].covers(r, c, 0.0));
}

TEST(Masks, DisjointAndOccluded) {
  SceneSpec spec;
  spec.shapes = {rect(2, 2, 6, 6), rect(20, 20, 5, 5)};
  const MaskSet two = ground_truth_masks(spec, 0.0);
  ASSERT_EQ(two.masks.size(), 2u);
  EXPECT_EQ(intersection(two.masks[0], two.masks[1]), 0u);

  spec.shapes = {rect(2, 2, 8, 8), rect(6, 6, 8, 8)};
  const MaskSet over = ground_truth_masks(spec, 0.0);
  ASSERT_EQ(over.masks.size(), 2u);
  EXPECT_EQ(over.masks[1].area(), 64u);
  EXPECT_EQ(over.masks[0].area(), 64u - 16u);

  spec.shapes = {rect(4, 4, 2, 2), rect(2, 2, 8, 8)};
  const MaskSet hidden = ground_truth_masks(spec, 0.0);
  ASSERT_EQ(hidden.masks.size(), 1u);
  EXPECT_EQ(hidden.masks[0].id, 2u);
}

TEST(Masks, CellsCarryShapeIntensity) {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    const SceneSpec spec = random_scene({}, seed);
    const Tensor frame = render_frame(spec, spec.window_ms);
    for (const Mask& m : ground_truth_masks(spec, spec.window_ms).masks)
      for (size_t i = 0; i < m.cells.size(); ++i)
        if (m.cells[i]) {
          EXPECT_EQ(frame[i * 3], spec.shapes[m.id - 1].intensity);
        }
  }
}

TEST(Sample, DeterministicPerSeed) {
  const Sample a = make_sample(random_scene({}, 9));
  const Sample b = make_sample(random_scene({}, 9));
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.events, b.events);
  ASSERT_EQ(a.masks.masks.size(), b.masks.masks.size());
  EXPECT_EQ(a.events.dims(), (std::vector<size_t>{32, 32, 3}));
}

}  // namespace
}  // namespace evdistill
