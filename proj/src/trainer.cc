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

#include "evdistill/trainer.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <iomanip>
#include <random>
#include <sstream>

#include "evdistill/tensor_dump.h"

namespace evdistill {

TrainConfig TrainConfig::full_scale_profile() {
  TrainConfig c;
  c.epochs = 5;
  c.steps_per_epoch = 2700;
  c.batch_size = 24;
  c.lr = 2e-4;
  c.decay_factor = 0.9;
  c.decay_epoch = 4;
  c.distill = DistillConfig{};
  c.plan = TrainablePlan::parse("embed+mlps:3,6,9,12", 12);
  return c;
}

TrainConfig TrainConfig::tiny_profile(size_t depth) {
  TrainConfig c;
  c.epochs = 5;
  c.steps_per_epoch = 40;
  c.batch_size = 4;
  c.lr = 1e-3;
  c.distill = DistillConfig::for_depth(depth);
  c.plan = TrainablePlan::parse("embed+all_mlps", depth);
  return c;
}

void TrainConfig::validate(const ViTConfig& config) const {
  if (!(lr >= 0.0)) throw std::invalid_argument("train: lr must be >= 0");
  if (epochs == 0 || steps_per_epoch == 0 || batch_size == 0) {
    throw std::invalid_argument("train: epochs, steps_per_epoch and batch_size must be >= 1");
  }
  if (decay_epoch < 1 || decay_epoch > epochs) {
    throw std::invalid_argument("train: decay_epoch must lie in [1, epochs]");
  }
  if (!(decay_factor > 0.0 && decay_factor <= 1.0)) {
    throw std::invalid_argument("train: decay_factor must lie in (0, 1]");
  }
  distill.validate(config.depth);
  plan.validate(config);
}

double lr_at(const TrainConfig& config, size_t epoch) {
  return epoch >= config.decay_epoch ? config.lr * config.decay_factor : config.lr;
}

TrainState make_state(ViTParams student) {
  TrainState state;
  for (const std::string& name : student.trainable) {
    state.first_moment[name] = Tensor(student.at(name).dims());
    state.second_moment[name] = Tensor(student.at(name).dims());
  }
  state.student = std::move(student);
  return state;
}

void adam_step(TrainState& state, const std::map<std::string, Tensor>& grads, double lr,
               const AdamConfig& adam) {
  for (const std::string& name : state.student.trainable) {
    auto it = grads.find(name);
    if (it == grads.end()) throw TrainingError("adam_step: no gradient for " + name);
    if (!it->second.same_shape(state.student.at(name))) {
      throw TrainingError("adam_step: gradient shape mismatch for " + name);
    }
    if (!it->second.all_finite()) throw TrainingError("adam_step: non-finite gradient in " + name);
  }
  const double t = static_cast<double>(state.step + 1);
  const double c1 = 1.0 - std::pow(adam.beta1, t);
  const double c2 = 1.0 - std::pow(adam.beta2, t);
  for (const std::string& name : state.student.trainable) {
    const Tensor& g = grads.at(name);
    Tensor& p = state.student.tensors.at(name);
    Tensor& m = state.first_moment.at(name);
    Tensor& v = state.second_moment.at(name);
    for (size_t i = 0; i < p.size(); ++i) {
      m[i] = adam.beta1 * m[i] + (1.0 - adam.beta1) * g[i];
      v[i] = adam.beta2 * v[i] + (1.0 - adam.beta2) * g[i] * g[i];
      p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + adam.eps);
    }
  }
  ++state.step;
}

uint64_t derive_seed(uint64_t seed, uint64_t step, uint64_t slot) {
  uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (step + 1) + 0xbf58476d1ce4e5b9ULL * (slot + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Tensor embed_tokens(const ViTParams& params, const Tensor& image) {
  Tensor tokens = matmul(patchify(params.config, image), params.at("patch_embed.w"));
  const Tensor& b = params.at("patch_embed.b");
  const Tensor& pos = params.at("pos_embed");
  for (size_t r = 0; r < tokens.rows(); ++r)
    for (size_t c = 0; c < tokens.cols(); ++c) tokens(r, c) += b[c] + pos(r, c);
  return tokens;
}

Trainer::Trainer(ViTParams teacher, std::vector<Sample> data, TrainConfig config)
    : teacher_(std::move(teacher)), data_(std::move(data)), config_(std::move(config)) {
  if (data_.empty()) throw std::invalid_argument("trainer: no training samples");
  config_.validate(teacher_.config);
  // The teacher is frozen, so its captures are computed once.
  for (const Sample& s : data_) teacher_cache_.push_back(forward_capture(teacher_, s.image));
}

namespace {

double max_abs_embedding(const TapedCapture& capture) {
  double m = 0.0;
  for (const Var& v : capture.embeddings)
    for (double x : v.value().data()) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

SampleLoss Trainer::sample_loss(const ViTParams& student, size_t index, uint64_t mix_seed,
                                bool eval, bool with_grads) const {
  const Sample& sample = data_.at(index);
  const EmbeddingCapture& teacher_capture = teacher_cache_.at(index);
  Tape tape;
  BoundParams bound = with_grads ? bind_params(tape, student) : bind_constants(tape, student);
  Var tokens = embed_patches(bound, sample.events);
  const double ratio = eval ? 0.0 : config_.distill.mixing_ratio;
  if (ratio > 0.0) {
    const size_t k = student.config.tokens();
    std::vector<bool> take_image(k, false);
    for (size_t p : sample_mix_positions(k, ratio, mix_seed)) take_image[p] = true;
    Var image_tokens = tape.constant(embed_tokens(student, sample.image));
    tokens = ad::select_rows(tokens, image_tokens, take_image);
  }
  TapedCapture student_capture = run_blocks(bound, tokens);

  SampleLoss out;
  Var total;
  if (config_.objective == Objective::kAffinity) {
    total = affinity_loss(teacher_capture, student_capture, config_.distill.layers);
  } else {
    TapedDistillLoss loss = distill_loss(teacher_capture, student_capture, config_.distill);
    total = loss.total;
    out.terms = std::move(loss.terms);
  }
  out.total = total.value()[0];
  if (!std::isfinite(out.total)) {
    std::ostringstream msg;
    msg << "non-finite loss on sample " << index << ";";
    for (const LayerTerm& t : out.terms) msg << " layer " << t.layer << "=" << t.mean;
    msg << "; max |embedding| = " << max_abs_embedding(student_capture);
    throw TrainingError(msg.str());
  }
  if (with_grads) {
    tape.backward(total);
    for (const std::string& name : student.trainable) out.grads[name] = tape.grad(bound.at(name));
  }
  return out;
}

std::vector<size_t> Trainer::batch_indices(uint64_t step) const {
  const size_t n = data_.size();
  const size_t b = config_.batch_size;
  std::vector<size_t> indices;
  if (b >= n) {
    for (size_t i = 0; i < b; ++i) indices.push_back(i % n);
    return indices;
  }
  // Draws with the same sampler as token mixing; ratio b/n picks exactly b.
  std::mt19937_64 rng(derive_seed(config_.seed, step, 0));
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  for (size_t i = 0; i < b; ++i) {
    std::uniform_int_distribution<size_t> pick(i, n - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  order.resize(b);
  return order;
}

StepRecord Trainer::step(TrainState& state) const {
  StepRecord record;
  record.step = state.step;
  record.epoch = state.epoch(config_.steps_per_epoch);
  record.lr = lr_at(config_, record.epoch);
  const std::vector<size_t> batch = batch_indices(state.step);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  std::map<std::string, Tensor> grads;
  for (const std::string& name : state.student.trainable) {
    grads[name] = Tensor(state.student.at(name).dims());
  }
  // Per-sample passes run concurrently; reduction is in slot order.
  std::vector<std::future<SampleLoss>> pending;
  for (size_t slot = 0; slot < batch.size(); ++slot) {
    pending.push_back(std::async(std::launch::async, [&, slot] {
      return sample_loss(state.student, batch[slot],
                         derive_seed(config_.seed, state.step, slot + 1), false, true);
    }));
  }
  for (size_t slot = 0; slot < batch.size(); ++slot) {
    SampleLoss loss = pending[slot].get();
    record.total += loss.total * inv_b;
    if (record.terms.empty()) {
      record.terms = loss.terms;
      for (LayerTerm& t : record.terms) t.mean = t.sum = 0.0;
    }
    for (size_t i = 0; i < loss.terms.size(); ++i) {
      record.terms[i].mean += loss.terms[i].mean * inv_b;
      record.terms[i].sum += loss.terms[i].sum * inv_b;
    }
    for (auto& [name, g] : grads) {
      const Tensor& sg = loss.grads.at(name);
      for (size_t i = 0; i < g.size(); ++i) g[i] += sg[i] * inv_b;
    }
  }
  adam_step(state, grads, record.lr, config_.adam);
  return record;
}

std::vector<StepRecord> Trainer::run(TrainState& state, std::optional<size_t> steps) const {
  const size_t count = steps.value_or(config_.total_steps() > state.step
                                          ? config_.total_steps() - static_cast<size_t>(state.step)
                                          : 0);
  std::vector<StepRecord> history;
  history.reserve(count);
  for (size_t i = 0; i < count; ++i) history.push_back(step(state));
  return history;
}

double Trainer::eval_loss(const ViTParams& student) const {
  double total = 0.0;
  for (size_t i = 0; i < data_.size(); ++i) total += sample_loss(student, i, 0, true, false).total;
  return total / static_cast<double>(data_.size());
}

GradCheckReport check_distill_gradients(const ViTParams& teacher, const ViTParams& student,
                                        const Sample& sample, const DistillConfig& cfg,
                                        uint64_t mix_seed, double step) {
  const EmbeddingCapture teacher_capture = forward_capture(teacher, sample.image);
  const size_t k = student.config.tokens();
  std::vector<bool> take_image(k, false);
  for (size_t p : sample_mix_positions(k, cfg.mixing_ratio, mix_seed)) take_image[p] = true;
  const Tensor image_tokens = embed_tokens(student, sample.image);

  std::vector<Tensor> params;
  for (const std::string& name : student.trainable_names()) params.push_back(student.at(name));

  ScalarFunction f = [&](Tape& tape, std::span<const Var> vars) {
    BoundParams bound = bind_params(tape, student, vars);
    Var tokens = embed_patches(bound, sample.events);
    tokens = ad::select_rows(tokens, tape.constant(image_tokens), take_image);
    return distill_loss(teacher_capture, run_blocks(bound, tokens), cfg).total;
  };
  return grad_check(f, params, step);
}

namespace {

Tensor vit_meta(const ViTConfig& c) {
  return Tensor({7}, std::vector<double>{double(c.img_size), double(c.patch_size),
                                         double(c.in_channels), double(c.embed_dim),
                                         double(c.depth), double(c.num_heads),
                                         double(c.mlp_hidden)});
}

ViTConfig vit_from_meta(const Tensor& t) {
  if (t.size() != 7) throw TensorDumpError("checkpoint: meta.vit must hold 7 values");
  auto at = [&](size_t i) { return static_cast<size_t>(t[i]); };
  ViTConfig c{at(0), at(1), at(2), at(3), at(4), at(5), at(6)};
  c.validate();
  return c;
}

ViTParams params_with_prefix(std::span<const DumpEntry> entries, const std::string& prefix,
                             const ViTConfig& config) {
  ViTParams p;
  p.config = config;
  for (const DumpEntry& e : entries)
    if (e.name.starts_with(prefix)) p.tensors[e.name.substr(prefix.size())] = e.tensor;
  for (const ParamSpec& spec : parameter_layout(config, TrainablePlan{})) {
    auto it = p.tensors.find(spec.name);
    if (it == p.tensors.end()) throw TensorDumpError("checkpoint: missing " + prefix + spec.name);
    if (it->second.dims() != spec.dims) {
      throw TensorDumpError("checkpoint: " + prefix + spec.name + " has shape " +
                            shape_string(it->second.dims()) + ", config expects " +
                            shape_string(spec.dims));
    }
  }
  return p;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const TrainState& state,
                     const ViTParams* teacher, const MaskHead* head) {
  std::vector<DumpEntry> entries;
  entries.push_back({"meta.vit", DType::kF64, vit_meta(state.student.config)});
  entries.push_back({"meta.state", DType::kF64,
                     Tensor({1}, std::vector<double>{static_cast<double>(state.step)})});
  for (const auto& [name, t] : state.student.tensors) entries.push_back({"student." + name, DType::kF64, t});
  for (const auto& [name, t] : state.first_moment) entries.push_back({"adam.m." + name, DType::kF64, t});
  for (const auto& [name, t] : state.second_moment) entries.push_back({"adam.v." + name, DType::kF64, t});
  if (teacher) {
    for (const auto& [name, t] : teacher->tensors) entries.push_back({"teacher." + name, DType::kF64, t});
  }
  if (head) {
    entries.push_back({"head.w", DType::kF64, head->weights});
    entries.push_back({"head.b", DType::kF64,
                       Tensor({2}, std::vector<double>{head->bias, head->threshold})});
  }
  save_tensor_dump(path, entries);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::vector<DumpEntry> entries = load_tensor_dump(path);
  const DumpEntry* meta = find_entry(entries, "meta.vit");
  const DumpEntry* state_meta = find_entry(entries, "meta.state");
  if (!meta || !state_meta) throw TensorDumpError("checkpoint: missing meta entries in " + path.string());
  const ViTConfig config = vit_from_meta(meta->tensor);

  Checkpoint ck;
  ck.state.student = params_with_prefix(entries, "student.", config);
  ck.state.step = static_cast<uint64_t>(state_meta->tensor[0]);
  for (const DumpEntry& e : entries) {
    if (e.name.starts_with("adam.m.")) {
      const std::string name = e.name.substr(7);
      if (!ck.state.student.tensors.contains(name)) {
        throw TensorDumpError("checkpoint: moment for unknown tensor " + name);
      }
      ck.state.first_moment[name] = e.tensor;
      ck.state.student.trainable.insert(name);
    } else if (e.name.starts_with("adam.v.")) {
      ck.state.second_moment[e.name.substr(7)] = e.tensor;
    }
  }
  for (const std::string& name : ck.state.student.trainable) {
    if (!ck.state.second_moment.contains(name)) {
      throw TensorDumpError("checkpoint: missing second moment for " + name);
    }
  }
  if (std::any_of(entries.begin(), entries.end(),
                  [](const DumpEntry& e) { return e.name.starts_with("teacher."); })) {
    ck.teacher = params_with_prefix(entries, "teacher.", config);
  }
  const DumpEntry* hw = find_entry(entries, "head.w");
  const DumpEntry* hb = find_entry(entries, "head.b");
  if (hw && hb) {
    if (hw->tensor.size() != config.embed_dim) throw TensorDumpError("checkpoint: head width mismatch");
    ck.head = MaskHead{hw->tensor, hb->tensor[0], hb->tensor.size() > 1 ? hb->tensor[1] : 0.5};
  }
  return ck;
}

void write_history_csv(const std::filesystem::path& path, std::span<const StepRecord> history) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "step,epoch,lr,total";
  if (!history.empty())
    for (const LayerTerm& t : history.front().terms) out << ",layer_" << t.layer;
  out << '\n' << std::setprecision(17);
  for (const StepRecord& r : history) {
    out << r.step << ',' << r.epoch << ',' << r.lr << ',' << r.total;
    for (const LayerTerm& t : r.terms) out << ',' << t.mean;
    out << '\n';
  }
}

EvalResult evaluate(const ViTParams& student, const MaskHead& head, std::span<const Sample> data,
                    AiouDenominator denominator) {
  EvalResult result;
  std::vector<std::future<MetricsReport>> pending;
  for (const Sample& s : data) {
    pending.push_back(std::async(std::launch::async, [&] {
      const EmbeddingCapture capture = forward_capture(student, s.events);
      const MaskSet pred = predict_masks(head, student.config, capture.embeddings.back());
      return compute_report(s.masks, pred, denominator);
    }));
  }
  for (auto& f : pending) result.frames.push_back(f.get());
  result.pooled = pool_reports(result.frames);
  return result;
}

}  // namespace evdistill
