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
#include <set>

#include <gtest/gtest.h>

#include "evdistill/tensor_dump.h"
#include "evdistill/trainer.h"
#include "test_util.h"

namespace evdistill {
namespace {

std::vector<Sample> small_data(size_t n, uint64_t seed = 0) {
  std::vector<Sample> data;
  for (size_t i = 0; i < n; ++i) data.push_back(make_sample(random_scene({}, seed + i)));
  return data;
}

TrainConfig short_config(size_t steps, const std::string& plan = "embed+all_mlps") {
  TrainConfig c = TrainConfig::tiny_profile(4);
  c.epochs = 2;
  c.steps_per_epoch = steps / 2;
  c.decay_epoch = 2;
  c.batch_size = 2;
  c.plan = TrainablePlan::parse(plan, 4);
  return c;
}

TEST(LearningRate, SingleDecayEvent) {
  const TrainConfig c = TrainConfig::full_scale_profile();
  EXPECT_EQ(lr_at(c, 1), 2e-4);
  EXPECT_EQ(lr_at(c, 3), 2e-4);
  EXPECT_DOUBLE_EQ(lr_at(c, 4), 1.8e-4);
  EXPECT_DOUBLE_EQ(lr_at(c, 5), 1.8e-4);
  TrainConfig flat = c;
  flat.decay_factor = 1.0;
  for (size_t e = 1; e <= 5; ++e) EXPECT_EQ(lr_at(flat, e), 2e-4);
}

TEST(Profiles, FullScaleProfileValues) {
  const TrainConfig c = TrainConfig::full_scale_profile();
  EXPECT_EQ(c.total_steps(), 13500u);
  EXPECT_EQ(c.batch_size, 24u);
  EXPECT_EQ(c.plan.to_string(), "embed+mlps:3,6,9,12");
  EXPECT_NO_THROW(c.validate(ViTConfig::vit_b()));
}

TEST(TrainConfig, ValidateRejects) {
  TrainConfig c = TrainConfig::tiny_profile(4);
  c.decay_epoch = 9;
  EXPECT_THROW(c.validate(ViTConfig{}), std::invalid_argument);
  c = TrainConfig::tiny_profile(4);
  c.decay_factor = 0.0;
  EXPECT_THROW(c.validate(ViTConfig{}), std::invalid_argument);
}

ViTParams scalar_param(double value) {
  ViTParams p;
  p.tensors["w"] = Tensor({1}, std::vector<double>{value});
  p.trainable = {"w"};
  return p;
}

TEST(Adam, BiasCorrectedSteps) {
  TrainState state = make_state(scalar_param(1.0));
  const AdamConfig adam;
  const double lr = 0.1;
  const double g1 = 0.5, g2 = -0.25;
  adam_step(state, {{"w", Tensor({1}, std::vector<double>{g1})}}, lr, adam);
  // First step moves by lr * g / (|g| + eps).
  EXPECT_NEAR(state.student.at("w")[0], 1.0 - lr * g1 / (std::abs(g1) + adam.eps), 1e-15);

  adam_step(state, {{"w", Tensor({1}, std::vector<double>{g2})}}, lr, adam);
  const double m = 0.9 * (0.1 * g1) + 0.1 * g2;
  const double v = 0.999 * (0.001 * g1 * g1) + 0.001 * g2 * g2;
  const double expected = 1.0 - lr * g1 / (std::abs(g1) + adam.eps) -
                          lr * (m / (1 - 0.81)) / (std::sqrt(v / (1 - 0.999 * 0.999)) + adam.eps);
  EXPECT_NEAR(state.student.at("w")[0], expected, 1e-14);
  EXPECT_EQ(state.step, 2u);
}

TEST(Adam, RejectsBadGradients) {
  TrainState state = make_state(scalar_param(1.0));
  EXPECT_THROW(adam_step(state, {}, 0.1, {}), TrainingError);
  EXPECT_THROW(adam_step(state, {{"w", Tensor({2})}}, 0.1, {}), TrainingError);
  EXPECT_THROW(adam_step(state, {{"w", Tensor({1}, std::vector<double>{NAN})}}, 0.1, {}),
               TrainingError);
  EXPECT_EQ(state.student.at("w")[0], 1.0);
}

TEST(Seeds, DeriveSeedIsStableAndSpread) {
  EXPECT_EQ(derive_seed(1, 2, 3), derive_seed(1, 2, 3));
  std::set<uint64_t> seen;
  for (uint64_t step = 0; step < 50; ++step)
    for (uint64_t slot = 0; slot < 5; ++slot) seen.insert(derive_seed(7, step, slot));
  EXPECT_EQ(seen.size(), 250u);
}

TEST(Trainer, BatchIndicesDistinctAndDeterministic) {
  TrainConfig c = short_config(4);
  c.batch_size = 3;
  const Trainer trainer(ViTParams::init(ViTConfig{}, 1), small_data(6), c);
  for (uint64_t step = 0; step < 10; ++step) {
    const std::vector<size_t> idx = trainer.batch_indices(step);
    ASSERT_EQ(idx.size(), 3u);
    EXPECT_EQ(std::set<size_t>(idx.begin(), idx.end()).size(), 3u);
    for (size_t i : idx) EXPECT_LT(i, 6u);
    EXPECT_EQ(idx, trainer.batch_indices(step));
  }
}

TEST(Trainer, FullMixingFromTeacherGivesZeroLoss) {
  const ViTParams teacher = ViTParams::init(ViTConfig{}, 3);
  TrainConfig c = short_config(4);
  c.distill.mixing_ratio = 1.0;
  const Trainer trainer(teacher, small_data(2), c);
  const ViTParams student = apply_plan(teacher, c.plan, 0);
  for (size_t i = 0; i < 2; ++i) EXPECT_EQ(trainer.sample_loss(student, i, 5, false, false).total, 0.0);
}

TEST(Trainer, ZeroLearningRateKeepsParameters) {
  TrainConfig c = short_config(4);
  c.lr = 0.0;
  const Trainer trainer(ViTParams::init(ViTConfig{}, 3), small_data(3), c);
  TrainState state = make_state(apply_plan(ViTParams::init(ViTConfig{}, 4), c.plan, 1));
  const ViTParams before = state.student;
  const std::vector<StepRecord> history = trainer.run(state);
  EXPECT_EQ(history.size(), 4u);
  for (const auto& [name, t] : before.tensors) EXPECT_EQ(state.student.at(name), t) << name;
}

TEST(Trainer, FrozenTensorsNeverMove) {
  const TrainConfig c = short_config(4, "embed+mlps:2");
  const Trainer trainer(ViTParams::init(ViTConfig{}, 3), small_data(3), c);
  TrainState state = make_state(apply_plan(ViTParams::init(ViTConfig{}, 4), c.plan, 1));
  const ViTParams before = state.student;
  trainer.run(state);
  size_t moved = 0;
  for (const auto& [name, t] : before.tensors) {
    if (state.student.trainable.contains(name)) {
      moved += state.student.at(name) == t ? 0 : 1;
    } else {
      EXPECT_EQ(state.student.at(name), t) << name;
    }
  }
  EXPECT_GT(moved, 0u);
}

TEST(Trainer, HistoryRecordsEpochAndLr) {
  const TrainConfig c = short_config(4);
  const Trainer trainer(ViTParams::init(ViTConfig{}, 3), small_data(2), c);
  TrainState state = make_state(apply_plan(ViTParams::init(ViTConfig{}, 4), c.plan, 1));
  const std::vector<StepRecord> h = trainer.run(state);
  ASSERT_EQ(h.size(), 4u);
  EXPECT_EQ(h[0].epoch, 1u);
  EXPECT_EQ(h[3].epoch, 2u);
  EXPECT_EQ(h[0].lr, c.lr);
  EXPECT_DOUBLE_EQ(h[3].lr, c.lr * c.decay_factor);
  EXPECT_EQ(h[0].terms.size(), c.distill.layers.size());
}

TEST(Trainer, ResumeIsBitwise) {
  testing::TempDir dir("trainer");
  const TrainConfig c = short_config(6);
  const Trainer trainer(ViTParams::init(ViTConfig{}, 3), small_data(3), c);
  const ViTParams init = apply_plan(ViTParams::init(ViTConfig{}, 4), c.plan, 1);

  TrainState straight = make_state(init);
  const std::vector<StepRecord> full = trainer.run(straight);

  TrainState first = make_state(init);
  trainer.run(first, 3);
  save_checkpoint(dir / "half.evdt", first);
  TrainState resumed = load_checkpoint(dir / "half.evdt").state;
  const std::vector<StepRecord> rest = trainer.run(resumed);
  ASSERT_EQ(rest.size(), 3u);
  for (size_t i = 0; i < 3; ++i) EXPECT_EQ(rest[i].total, full[3 + i].total);
  for (const auto& [name, t] : straight.student.tensors) EXPECT_EQ(resumed.student.at(name), t) << name;
  EXPECT_EQ(resumed.step, straight.step);
}

TEST(Checkpoint, RoundTripWithTeacherAndHead) {
  testing::TempDir dir("trainer");
  const ViTParams teacher = ViTParams::init(ViTConfig{}, 8);
  TrainState state = make_state(apply_plan(teacher, TrainablePlan::parse("lora:2:mlps:1", 4), 2));
  state.step = 11;
  MaskHead head{Tensor({32}), 0.25, 0.4};
  head.weights[3] = -1.5;
  save_checkpoint(dir / "ck.evdt", state, &teacher, &head);
  const Checkpoint ck = load_checkpoint(dir / "ck.evdt");
  EXPECT_EQ(ck.state.step, 11u);
  EXPECT_EQ(ck.state.student.trainable, state.student.trainable);
  EXPECT_EQ(ck.state.student.tensors.size(), state.student.tensors.size());
  for (const auto& [name, t] : state.student.tensors) EXPECT_EQ(ck.state.student.at(name), t);
  ASSERT_TRUE(ck.teacher.has_value());
  for (const auto& [name, t] : teacher.tensors) EXPECT_EQ(ck.teacher->at(name), t);
  ASSERT_TRUE(ck.head.has_value());
  EXPECT_EQ(ck.head->weights, head.weights);
  EXPECT_EQ(ck.head->bias, 0.25);
  EXPECT_EQ(ck.head->threshold, 0.4);
}

TEST(Checkpoint, MissingEntriesAreReported) {
  testing::TempDir dir("trainer");
  save_tensor_dump(dir / "empty.evdt", {});
  EXPECT_THROW(load_checkpoint(dir / "empty.evdt"), TensorDumpError);
}

TEST(GradCheck, DistillLossSmallEncoder) {
  const ViTConfig config{16, 8, 3, 8, 2, 2, 16};
  const ViTParams teacher = ViTParams::init(config, 1);
  const ViTParams student = apply_plan(ViTParams::init(config, 2), TrainablePlan::parse("all", 2), 0);
  RandomSceneOptions opts;
  opts.height = opts.width = 16;
  const Sample sample = make_sample(random_scene(opts, 3));
  DistillConfig cfg = DistillConfig::for_depth(2);
  cfg.mixing_ratio = 0.5;
  const GradCheckReport report = check_distill_gradients(teacher, student, sample, cfg, 9);
  EXPECT_LT(report.max_relative_error, 1e-4);
}

TEST(Evaluate, PerfectHeadScoresOne) {
  const ViTParams student = ViTParams::init(ViTConfig{}, 2);
  // One shape covering the whole frame; a head that fires everywhere.
  SceneSpec spec;
  Shape s;
  s.w = 32;
  s.h = 32;
  spec.shapes = {s};
  const std::vector<Sample> data = {make_sample(spec), make_sample(spec)};
  const MaskHead head{Tensor({32}), 1.0, 0.5};
  const EvalResult r = evaluate(student, head, data);
  ASSERT_EQ(r.frames.size(), 2u);
  EXPECT_EQ(r.pooled.mIoU, 1.0);
  EXPECT_EQ(r.pooled.aIoU, 1.0);
  EXPECT_EQ(r.pooled.tp, 2u);
}

}  // namespace
}  // namespace evdistill
