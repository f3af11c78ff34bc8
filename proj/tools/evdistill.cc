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

// evdistill command-line tool: train, eval, significance, params, voxelize,
// synth, gradcheck.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "evdistill/config.h"
#include "evdistill/dataset.h"
#include "evdistill/events.h"
#include "evdistill/mask_io.h"
#include "evdistill/metrics.h"
#include "evdistill/significance.h"
#include "evdistill/synth.h"
#include "evdistill/tensor_dump.h"
#include "evdistill/trainer.h"
#include "evdistill/vit.h"

namespace fs = std::filesystem;
using namespace evdistill;

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

// Teacher weights: from teacher_checkpoint when set, else a seeded init.
ViTParams make_teacher(const RunConfig& config) {
  if (config.teacher_checkpoint.empty()) return ViTParams::init(config.vit, config.seed);
  Checkpoint ck = load_checkpoint(config.teacher_checkpoint);
  ViTParams teacher = ck.teacher ? *ck.teacher : ck.state.student;
  if (!(teacher.config == config.vit)) {
    throw std::runtime_error("teacher checkpoint encoder shape differs from config vit section");
  }
  teacher.trainable.clear();
  return teacher;
}

// ---- train -----------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string output;
  std::string resume;
  std::optional<size_t> steps;
};

int cmd_train(const TrainArgs& args) {
  RunConfig config = load_run_config(args.config);
  if (!args.output.empty()) config.output_dir = args.output;
  const fs::path out = config.output_dir;
  fs::create_directories(out);

  const ViTParams teacher = make_teacher(config);
  std::vector<Sample> data = load_run_data(config);
  TrainState state;
  if (args.resume.empty()) {
    state = make_state(apply_plan(teacher, config.train.plan, derive_seed(config.seed, 0, 1)));
  } else {
    state = load_checkpoint(args.resume).state;
    const ViTParams planned = apply_plan(teacher, config.train.plan, derive_seed(config.seed, 0, 1));
    if (!(state.student.config == config.vit) || state.student.trainable != planned.trainable) {
      throw std::runtime_error("resume checkpoint does not match the configured encoder and plan");
    }
  }

  const Trainer trainer(teacher, data, config.train);
  std::optional<size_t> steps = args.steps;
  if (steps) {
    const size_t left = config.train.total_steps() > state.step
                            ? config.train.total_steps() - static_cast<size_t>(state.step)
                            : 0;
    steps = std::min(*steps, left);
  }
  const std::vector<StepRecord> history = trainer.run(state, steps);
  const MaskHead head = fit_mask_head(teacher, data);

  save_checkpoint(out / "checkpoint.evdt", state, &teacher, &head);
  write_history_csv(out / "loss.csv", history);
  write_text(out / "config.resolved.json", to_json(config).dump(2) + "\n");

  std::cout << "steps " << history.size() << " (through step " << state.step << ")";
  if (!history.empty()) {
    std::cout << " loss " << fmt("%.6f", history.front().total) << " -> "
              << fmt("%.6f", history.back().total);
  }
  std::cout << "\nwrote " << (out / "checkpoint.evdt").string() << "\n";
  return 0;
}

// ---- eval ------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string pred;
  std::string config;
  std::string denominator;
  std::string out;
};

int cmd_eval(const EvalArgs& args) {
  std::optional<RunConfig> config;
  if (!args.config.empty()) config = load_run_config(args.config);
  AiouDenominator denominator = config ? config->aiou_denominator : AiouDenominator::kMaskTotal;
  if (!args.denominator.empty()) denominator = parse_aiou_denominator(args.denominator);

  const std::vector<fs::path> dirs = list_sample_dirs(args.data);
  if (dirs.empty()) throw std::runtime_error("no sample directories under " + args.data);

  std::vector<MetricsReport> frames;
  if (!args.pred.empty()) {
    // Predicted masks from <pred>/<sample>/masks.rle; a missing file means no
    // predictions for that frame.
    for (const fs::path& dir : dirs) {
      const MaskSet gt = load_masks(dir / "masks.rle");
      const fs::path pred_file = fs::path(args.pred) / dir.filename() / "masks.rle";
      MaskSet pred{gt.height, gt.width, {}};
      if (fs::exists(pred_file)) pred = load_masks(pred_file);
      frames.push_back(compute_report(gt, pred, denominator));
    }
  } else {
    if (args.checkpoint.empty()) throw std::runtime_error("eval needs --checkpoint or --pred");
    const Checkpoint ck = load_checkpoint(args.checkpoint);
    if (!ck.head) throw std::runtime_error("checkpoint has no mask head");
    const ViTConfig& vit = ck.state.student.config;
    EventConfig events;
    if (config) {
      if (!(config->vit == vit)) throw std::runtime_error("config vit section does not match checkpoint");
      events = config->events;
    }
    events.bins = vit.in_channels;
    std::vector<Sample> data;
    for (const fs::path& dir : dirs) data.push_back(load_sample_dir(dir, events));
    for (size_t i = 0; i < data.size(); ++i) {
      if (data[i].events.dim(0) != vit.img_size || data[i].events.dim(1) != vit.img_size) {
        throw std::runtime_error(dirs[i].string() + ": sample size " +
                                 shape_string(data[i].events.dims()) +
                                 " does not match checkpoint img_size " +
                                 std::to_string(vit.img_size));
      }
    }
    frames = evaluate(ck.state.student, *ck.head, data, denominator).frames;
  }

  std::string json = "{\"frames\":[";
  for (size_t i = 0; i < frames.size(); ++i) {
    json += (i ? "," : "");
    json += "{\"sample\":" + nlohmann::json(dirs[i].filename().string()).dump() +
            ",\"report\":" + to_json(frames[i]) + "}";
  }
  json += "],\"pooled\":" + to_json(pool_reports(frames)) + "}\n";
  if (args.out.empty()) {
    std::cout << json;
  } else {
    write_text(args.out, json);
  }
  return 0;
}

// ---- significance ----------------------------------------------------------

struct SignificanceArgs {
  std::string dump;
  size_t layer = 0;
  double beta = kDefaultBeta;
  size_t horizon = 0;
  std::string out;
};

// Rank-2 entries in file order, or the slices of rank-3 entries.
std::vector<Tensor> attention_from_dump(const std::vector<DumpEntry>& entries) {
  std::vector<Tensor> attention;
  for (const DumpEntry& e : entries) {
    const Tensor& t = e.tensor;
    if (t.rank() == 2) {
      attention.push_back(t);
    } else if (t.rank() == 3) {
      const size_t r = t.dim(1), c = t.dim(2);
      for (size_t i = 0; i < t.dim(0); ++i) {
        std::vector<double> slice(t.data().begin() + i * r * c, t.data().begin() + (i + 1) * r * c);
        attention.emplace_back(std::vector<size_t>{r, c}, std::move(slice));
      }
    } else {
      throw std::runtime_error("entry '" + e.name + "' has rank " + std::to_string(t.rank()) +
                               "; expected attention matrices");
    }
  }
  if (attention.empty()) throw std::runtime_error("dump holds no attention matrices");
  return attention;
}

int cmd_significance(const SignificanceArgs& args) {
  const std::vector<Tensor> attention = attention_from_dump(load_tensor_dump(args.dump));
  const TransitionStack stack = TransitionStack::from_attention(attention);
  stack.validate_shapes();
  for (size_t i = 0; i < attention.size(); ++i) {
    if (!is_row_stochastic(attention[i], 1e-5)) {
      throw std::runtime_error("attention matrix " + std::to_string(i + 1) + " is not row-stochastic");
    }
  }
  if (args.layer > stack.depth()) {
    throw std::runtime_error("--layer must be in [1, " + std::to_string(stack.depth()) + "]");
  }

  std::ostringstream csv;
  csv << "quantity,layer,index,value\n";
  const size_t first = args.layer == 0 ? 1 : args.layer;
  const size_t last = args.layer == 0 ? stack.depth() : args.layer;
  for (size_t s = first; s <= last; ++s) {
    const SignificanceVector sig = token_significance(stack, s, args.beta, {}, args.horizon);
    for (size_t t = 0; t < sig.values.size(); ++t) {
      csv << "significance," << s << ',' << t << ',' << fmt("%.17g", sig.values[t]) << '\n';
    }
  }
  const std::vector<double> diag = convergence_diagnostic(stack);
  for (size_t i = 0; i < diag.size(); ++i) {
    csv << "convergence," << i + 1 << ",," << fmt("%.17g", diag[i]) << '\n';
  }
  if (args.out.empty()) {
    std::cout << csv.str();
  } else {
    write_text(args.out, csv.str());
  }
  return 0;
}

// ---- params ----------------------------------------------------------------

struct ParamsArgs {
  std::string preset;
  std::string config;
  std::vector<std::string> plans;
};

const std::vector<std::string>& default_plans() {
  static const std::vector<std::string> plans = {
      "embed",
      "embed+mlps:3,6,9,12",
      "embed+blocks:3,6,9,12",
      "embed+all_mlps",
      "all",
      "lora:16:mlps:3,6,9,12",
      "lora:64:mlps:3,6,9,12",
      "lora:256:mlps:3,6,9,12",
      "lora:16:blocks:all",
      "lora:64:blocks:all",
      "lora:256:blocks:all",
  };
  return plans;
}

int cmd_params(const ParamsArgs& args) {
  ViTConfig vit;
  if (!args.config.empty()) {
    vit = load_run_config(args.config).vit;
  } else if (args.preset == "vit-b") {
    vit = ViTConfig::vit_b();
  } else if (args.preset != "tiny") {
    throw std::runtime_error("unknown preset '" + args.preset + "' (vit-b or tiny)");
  }
  const std::vector<std::string>& plans = args.plans.empty() ? default_plans() : args.plans;
  const size_t base = count_total(vit, TrainablePlan{});
  std::cout << "plan,trainable,millions,percent_of_base\n";
  for (const std::string& text : plans) {
    const TrainablePlan plan = TrainablePlan::parse(text, vit.depth);
    plan.validate(vit);
    const size_t n = count_trainable(vit, plan);
    std::cout << text << ',' << n << ',' << fmt("%.1f", n / 1e6) << ','
              << fmt("%.2f", 100.0 * static_cast<double>(n) / static_cast<double>(base)) << '\n';
  }
  std::cout << "# base encoder parameters: " << base << "\n";
  return 0;
}

// ---- voxelize --------------------------------------------------------------

struct VoxelizeArgs {
  std::string events;
  std::string out;
  size_t bins = kDefaultBins;
  double window_ms = 40.0;
  int64_t start_us = 0;
  size_t height = 0;
  size_t width = 0;
  bool signed_polarity = false;
  bool normalize = false;
  bool f32 = false;
};

int cmd_voxelize(const VoxelizeArgs& args) {
  std::optional<size_t> h, w;
  if (args.height) h = args.height;
  if (args.width) w = args.width;
  const EventFile file = read_events(args.events, h, w);
  if (!file.height || !file.width) {
    throw std::runtime_error("sensor size unknown: add a '# H= W=' header or pass --height/--width");
  }
  const TimeWindow window{args.start_us,
                          args.start_us + static_cast<int64_t>(std::llround(args.window_ms * 1000.0))};
  EventVolume volume = voxelize(file.events, window, *file.height, *file.width,
                                VoxelOptions{args.bins, args.signed_polarity});
  if (args.normalize) volume = normalize_volume(volume);
  const DumpEntry entry{"events", args.f32 ? DType::kF32 : DType::kF64, volume.grid};
  save_tensor_dump(args.out, std::span<const DumpEntry>(&entry, 1));
  return 0;
}

// ---- synth -----------------------------------------------------------------

struct SynthArgs {
  std::string out;
  std::string scene;
  size_t count = 1;
  uint64_t seed = 0;
  RandomSceneOptions options;
  double noise_hz = 0.0;
};

int cmd_synth(const SynthArgs& args) {
  if (!args.scene.empty()) {
    std::ifstream in(args.scene);
    if (!in) throw std::runtime_error("cannot open " + args.scene);
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError("<file>", std::string("parse error: ") + e.what());
    }
    save_sample_dir(args.out, scene_from_json(doc));
    return 0;
  }
  for (size_t i = 0; i < args.count; ++i) {
    SceneSpec spec = random_scene(args.options, args.seed + i);
    spec.noise_rate_hz = args.noise_hz;
    char name[32];
    std::snprintf(name, sizeof(name), "sample_%03zu", i);
    save_sample_dir(fs::path(args.out) / name, spec);
  }
  return 0;
}

// ---- gradcheck -------------------------------------------------------------

struct GradcheckArgs {
  std::string config;
  double step = 1e-5;
  std::optional<double> mixing_ratio;
  std::string plan;
  double tolerance = 1e-4;
};

int cmd_gradcheck(const GradcheckArgs& args) {
  RunConfig config;
  if (!args.config.empty()) config = load_run_config(args.config);
  config.data.synthetic.count = 1;
  const std::vector<Sample> data = load_run_data(config);
  const ViTParams teacher = make_teacher(config);
  TrainablePlan plan = config.train.plan;
  if (!args.plan.empty()) plan = TrainablePlan::parse(args.plan, config.vit.depth);
  const ViTParams student =
      apply_plan(ViTParams::init(config.vit, derive_seed(config.seed, 0, 2)), plan,
                 derive_seed(config.seed, 0, 1));
  DistillConfig distill = config.train.distill;
  if (args.mixing_ratio) distill.mixing_ratio = *args.mixing_ratio;
  const GradCheckReport r =
      check_distill_gradients(teacher, student, data[0], distill, derive_seed(config.seed, 0, 3), args.step);
  const std::vector<std::string> names = student.trainable_names();
  std::cout << "parameters " << student.trainable_count() << "\n"
            << "max_relative_error " << fmt("%.3e", r.max_relative_error) << " at "
            << names.at(r.worst_param) << "[" << r.worst_element << "]"
            << " analytic " << fmt("%.9g", r.analytic) << " numeric " << fmt("%.9g", r.numeric) << "\n";
  return r.max_relative_error <= args.tolerance ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Event-encoder distillation toolkit"};
  app.require_subcommand(1);

  TrainArgs train;
  CLI::App* train_cmd = app.add_subcommand("train", "Distil a student encoder from a run config");
  train_cmd->add_option("config", train.config, "Run config (JSON)")->required();
  train_cmd->add_option("--output", train.output, "Output directory (overrides output.dir)");
  train_cmd->add_option("--resume", train.resume, "Continue from a checkpoint");
  train_cmd->add_option("--steps", train.steps, "Stop after this many steps");

  EvalArgs eval;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Score predicted masks against ground truth");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Trained checkpoint with mask head");
  eval_cmd->add_option("--data", eval.data, "Directory of sample directories")->required();
  eval_cmd->add_option("--pred", eval.pred, "Read predicted masks instead of running the model");
  eval_cmd->add_option("--config", eval.config, "Run config for event and metric settings");
  eval_cmd->add_option("--denominator", eval.denominator, "aIoU denominator: mask_total or image_area");
  eval_cmd->add_option("--out", eval.out, "Report path (default stdout)");

  SignificanceArgs sig;
  CLI::App* sig_cmd = app.add_subcommand("significance", "Token significance from attention matrices");
  sig_cmd->add_option("dump", sig.dump, "Tensor dump of attention matrices, block order")->required();
  sig_cmd->add_option("--layer", sig.layer, "Source layer s (1-based); 0 emits every layer");
  sig_cmd->add_option("--beta", sig.beta, "Transition mixing beta")->check(CLI::Range(0.0, 1.0));
  sig_cmd->add_option("--horizon", sig.horizon, "Transitions kept per layer; 0 rolls out to the end");
  sig_cmd->add_option("--out", sig.out, "CSV path (default stdout)");

  ParamsArgs params;
  params.preset = "vit-b";
  CLI::App* params_cmd = app.add_subcommand("params", "Count trainable parameters of a plan");
  params_cmd->add_option("--preset", params.preset, "vit-b or tiny");
  params_cmd->add_option("--config", params.config, "Take the encoder shape from a run config");
  params_cmd->add_option("--plan", params.plans, "Trainable plan (repeatable)");

  VoxelizeArgs vox;
  CLI::App* vox_cmd = app.add_subcommand("voxelize", "Events text file to a voxel-grid tensor dump");
  vox_cmd->add_option("events", vox.events, "Event text file")->required();
  vox_cmd->add_option("--out", vox.out, "Output tensor dump")->required();
  vox_cmd->add_option("--bins", vox.bins, "Temporal bins")->check(CLI::PositiveNumber);
  vox_cmd->add_option("--window-ms", vox.window_ms, "Window length in ms")->check(CLI::PositiveNumber);
  vox_cmd->add_option("--start-us", vox.start_us, "Window start in microseconds");
  vox_cmd->add_option("--height", vox.height, "Sensor rows (overrides header)");
  vox_cmd->add_option("--width", vox.width, "Sensor columns (overrides header)");
  vox_cmd->add_flag("--signed", vox.signed_polarity, "Accumulate polarity instead of counts");
  vox_cmd->add_flag("--normalize", vox.normalize, "Scale each bin by its max magnitude");
  vox_cmd->add_flag("--f32", vox.f32, "Store 32-bit floats");

  SynthArgs synth;
  CLI::App* synth_cmd = app.add_subcommand("synth", "Write synthetic sample directories");
  synth_cmd->add_option("--out", synth.out, "Sample directory (with --scene) or dataset root")->required();
  synth_cmd->add_option("--scene", synth.scene, "Scene spec JSON; writes one sample to --out");
  synth_cmd->add_option("--count", synth.count, "Random scenes to write");
  synth_cmd->add_option("--seed", synth.seed, "Seed of the first random scene");
  synth_cmd->add_option("--size", synth.options.height, "Image side in pixels");
  synth_cmd->add_option("--max-shapes", synth.options.max_shapes, "Shapes per random scene");
  synth_cmd->add_option("--window-ms", synth.options.window_ms, "Window length in ms");
  synth_cmd->add_option("--threshold", synth.options.threshold, "Log-intensity contrast threshold");
  synth_cmd->add_option("--max-speed", synth.options.max_speed, "Largest shape speed in px/ms");
  synth_cmd->add_option("--noise-hz", synth.noise_hz, "Background noise events per pixel per second");

  GradcheckArgs gc;
  CLI::App* gc_cmd = app.add_subcommand("gradcheck", "Compare distillation gradients to central differences");
  gc_cmd->add_option("--config", gc.config, "Run config (default: desk-scale profile)");
  gc_cmd->add_option("--step", gc.step, "Finite-difference step");
  gc_cmd->add_option("--mixing-ratio", gc.mixing_ratio, "Override distill.mixing_ratio");
  gc_cmd->add_option("--plan", gc.plan, "Override train.plan");
  gc_cmd->add_option("--tolerance", gc.tolerance, "Exit 3 when the error exceeds this");

  CLI11_PARSE(app, argc, argv);
  synth.options.width = synth.options.height;

  try {
    if (*train_cmd) return cmd_train(train);
    if (*eval_cmd) return cmd_eval(eval);
    if (*sig_cmd) return cmd_significance(sig);
    if (*params_cmd) return cmd_params(params);
    if (*vox_cmd) return cmd_voxelize(vox);
    if (*synth_cmd) return cmd_synth(synth);
    if (*gc_cmd) return cmd_gradcheck(gc);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
