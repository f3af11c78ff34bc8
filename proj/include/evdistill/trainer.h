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

#ifndef EVDISTILL_TRAINER_H_
#define EVDISTILL_TRAINER_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "evdistill/autodiff.h"
#include "evdistill/distill.h"
#include "evdistill/mask_head.h"
#include "evdistill/metrics.h"
#include "evdistill/synth.h"
#include "evdistill/vit.h"

namespace evdistill {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

enum class Objective { kWeightedL1, kAffinity };

struct TrainConfig {
  size_t epochs = 5;
  size_t steps_per_epoch = 40;
  size_t batch_size = 4;
  double lr = 2e-4;
  double decay_factor = 0.9;
  size_t decay_epoch = 4;
  AdamConfig adam;
  uint64_t seed = 0;
  DistillConfig distill;
  TrainablePlan plan;
  Objective objective = Objective::kWeightedL1;

  // 5 epochs of 2700 steps (13,500 iterations), batch 24, lr 2e-4, decay 0.9
  // at epoch 4, embed + MLPs of blocks 3, 6, 9, 12.
  static TrainConfig full_scale_profile();
  // Desk-scale profile for the 32px / 4-block encoder: 200 steps, lr 1e-3.
  static TrainConfig tiny_profile(size_t depth = 4);

  size_t total_steps() const { return epochs * steps_per_epoch; }
  void validate(const ViTConfig& config) const;
};

// One learning-rate decay event when the epoch reaches decay_epoch.
double lr_at(const TrainConfig& config, size_t epoch);

struct TrainState {
  ViTParams student;
  std::map<std::string, Tensor> first_moment;
  std::map<std::string, Tensor> second_moment;
  uint64_t step = 0;  // completed optimizer steps

  // 1-based epoch of the next step.
  size_t epoch(size_t steps_per_epoch) const { return static_cast<size_t>(step / steps_per_epoch) + 1; }
};

// Zero moments for exactly the trainable parameters.
TrainState make_state(ViTParams student);

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bias-corrected Adam on trainable parameters. Every gradient is checked
// before any parameter moves; a non-finite entry throws and names the tensor.
void adam_step(TrainState& state, const std::map<std::string, Tensor>& grads, double lr,
               const AdamConfig& adam);

struct StepRecord {
  uint64_t step = 0;
  size_t epoch = 1;
  double lr = 0.0;
  double total = 0.0;
  std::vector<LayerTerm> terms;  // batch means
};

struct SampleLoss {
  double total = 0.0;
  std::vector<LayerTerm> terms;
  std::map<std::string, Tensor> grads;  // empty unless requested
};

// Splitmix-style seed derivation, so every step's randomness depends only on
// (seed, step, slot) and a resumed run replays it exactly.
uint64_t derive_seed(uint64_t seed, uint64_t step, uint64_t slot);

class Trainer {
 public:
  Trainer(ViTParams teacher, std::vector<Sample> data, TrainConfig config);

  const TrainConfig& config() const { return config_; }
  const ViTParams& teacher() const { return teacher_; }
  std::span<const Sample> data() const { return data_; }

  // Loss of one sample. The student sees mixed tokens unless eval is set, in
  // which case it sees events only.
  SampleLoss sample_loss(const ViTParams& student, size_t index, uint64_t mix_seed, bool eval,
                         bool with_grads) const;

  std::vector<size_t> batch_indices(uint64_t step) const;

  // One optimizer step on the batch for state.step.
  StepRecord step(TrainState& state) const;

  // Runs `steps` optimizer steps, default until total_steps().
  std::vector<StepRecord> run(TrainState& state, std::optional<size_t> steps = {}) const;

  // Mean eval-mode loss over all samples.
  double eval_loss(const ViTParams& student) const;

 private:
  ViTParams teacher_;
  std::vector<Sample> data_;
  TrainConfig config_;
  std::vector<EmbeddingCapture> teacher_cache_;
};

// Gradient check of the distillation objective with respect to every
// trainable student tensor. Mixed-in image tokens are fixed inputs computed
// from the unperturbed student, matching how a training step treats them.
GradCheckReport check_distill_gradients(const ViTParams& teacher, const ViTParams& student,
                                        const Sample& sample, const DistillConfig& cfg,
                                        uint64_t mix_seed, double step = 1e-5);

// Patch tokens X^(0) computed without a tape.
Tensor embed_tokens(const ViTParams& params, const Tensor& image);

struct Checkpoint {
  TrainState state;
  std::optional<ViTParams> teacher;
  std::optional<MaskHead> head;
};

// Entries: meta.vit, meta.state, student.*, adam.m.*, adam.v.*, and
// optionally teacher.* and head.*; all f64.
void save_checkpoint(const std::filesystem::path& path, const TrainState& state,
                     const ViTParams* teacher = nullptr, const MaskHead* head = nullptr);
Checkpoint load_checkpoint(const std::filesystem::path& path);

void write_history_csv(const std::filesystem::path& path, std::span<const StepRecord> history);

struct EvalResult {
  std::vector<MetricsReport> frames;
  MetricsReport pooled;
};

// Event-only forward, mask head, and metrics for every sample.
EvalResult evaluate(const ViTParams& student, const MaskHead& head, std::span<const Sample> data,
                    AiouDenominator denominator = AiouDenominator::kMaskTotal);

}  // namespace evdistill

#endif  // EVDISTILL_TRAINER_H_
