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

#include "evdistill/config.h"

#include <fstream>
#include <set>

namespace evdistill {

ConfigError::ConfigError(const std::string& key, const std::string& what)
    : std::runtime_error("config key '" + key + "': " + what), key_(key) {}

namespace {

using nlohmann::json;

std::string join(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

void reject_unknown(const json& obj, const std::string& prefix, const std::set<std::string>& known) {
  if (!obj.is_object()) throw ConfigError(prefix.empty() ? "<root>" : prefix, "expected an object");
  for (const auto& [key, value] : obj.items()) {
    if (!known.contains(key)) throw ConfigError(join(prefix, key), "unknown key");
  }
}

template <typename T>
void read(const json& obj, const std::string& prefix, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(join(prefix, key), e.what());
  }
}

ViTConfig parse_vit(const json& j) {
  reject_unknown(j, "vit", {"img_size", "patch_size", "in_channels", "embed_dim", "depth",
                            "num_heads", "mlp_hidden"});
  ViTConfig c;
  read(j, "vit", "img_size", c.img_size);
  read(j, "vit", "patch_size", c.patch_size);
  read(j, "vit", "in_channels", c.in_channels);
  read(j, "vit", "embed_dim", c.embed_dim);
  read(j, "vit", "depth", c.depth);
  read(j, "vit", "num_heads", c.num_heads);
  read(j, "vit", "mlp_hidden", c.mlp_hidden);
  try {
    c.validate();
  } catch (const std::exception& e) {
    throw ConfigError("vit", e.what());
  }
  return c;
}

void parse_distill(const json& j, DistillConfig& d) {
  reject_unknown(j, "distill", {"layers", "gammas", "beta", "mixing_ratio", "attention_source",
                                "rollout_horizon", "importance"});
  read(j, "distill", "layers", d.layers);
  read(j, "distill", "gammas", d.gammas);
  read(j, "distill", "beta", d.beta);
  read(j, "distill", "mixing_ratio", d.mixing_ratio);
  read(j, "distill", "rollout_horizon", d.rollout_horizon);
  if (j.contains("attention_source")) {
    std::string s;
    read(j, "distill", "attention_source", s);
    try {
      d.source = parse_attention_source(s);
    } catch (const std::exception& e) {
      throw ConfigError("distill.attention_source", e.what());
    }
  }
  if (j.contains("importance") && !j.at("importance").is_null()) {
    std::vector<double> e;
    read(j, "distill", "importance", e);
    d.importance = e.empty() ? Tensor() : Tensor({e.size()}, e);
  }
}

void parse_train(const json& j, size_t depth, TrainConfig& t) {
  reject_unknown(j, "train", {"epochs", "steps_per_epoch", "batch_size", "lr", "decay_factor",
                              "decay_epoch", "adam", "plan", "objective"});
  read(j, "train", "epochs", t.epochs);
  read(j, "train", "steps_per_epoch", t.steps_per_epoch);
  read(j, "train", "batch_size", t.batch_size);
  read(j, "train", "lr", t.lr);
  read(j, "train", "decay_factor", t.decay_factor);
  read(j, "train", "decay_epoch", t.decay_epoch);
  if (j.contains("adam")) {
    const json& a = j.at("adam");
    reject_unknown(a, "train.adam", {"beta1", "beta2", "eps"});
    read(a, "train.adam", "beta1", t.adam.beta1);
    read(a, "train.adam", "beta2", t.adam.beta2);
    read(a, "train.adam", "eps", t.adam.eps);
  }
  if (j.contains("plan")) {
    std::string plan;
    read(j, "train", "plan", plan);
    try {
      t.plan = TrainablePlan::parse(plan, depth);
    } catch (const std::exception& e) {
      throw ConfigError("train.plan", e.what());
    }
  }
  if (j.contains("objective")) {
    std::string o;
    read(j, "train", "objective", o);
    if (o == "weighted_l1") {
      t.objective = Objective::kWeightedL1;
    } else if (o == "affinity") {
      t.objective = Objective::kAffinity;
    } else {
      throw ConfigError("train.objective", "expected weighted_l1 or affinity");
    }
  }
}

}  // namespace

RunConfig parse_run_config(const json& doc) {
  reject_unknown(doc, "", {"seed", "vit", "distill", "train", "data", "events", "metrics",
                           "teacher_checkpoint", "output"});
  RunConfig c;
  read(doc, "", "seed", c.seed);
  if (doc.contains("vit")) c.vit = parse_vit(doc.at("vit"));
  c.train = TrainConfig::tiny_profile(c.vit.depth);
  if (doc.contains("distill")) parse_distill(doc.at("distill"), c.train.distill);
  if (doc.contains("train")) parse_train(doc.at("train"), c.vit.depth, c.train);
  c.train.seed = c.seed;
  c.train.distill.seed = c.seed;
  if (doc.contains("data")) {
    const json& d = doc.at("data");
    reject_unknown(d, "data", {"dir", "synthetic"});
    read(d, "data", "dir", c.data.dir);
    if (d.contains("synthetic")) {
      const json& s = d.at("synthetic");
      reject_unknown(s, "data.synthetic", {"count", "seed", "max_shapes", "threshold", "max_speed"});
      read(s, "data.synthetic", "count", c.data.synthetic.count);
      read(s, "data.synthetic", "seed", c.data.synthetic.seed);
      read(s, "data.synthetic", "max_shapes", c.data.synthetic.max_shapes);
      read(s, "data.synthetic", "threshold", c.data.synthetic.threshold);
      read(s, "data.synthetic", "max_speed", c.data.synthetic.max_speed);
    }
  }
  if (doc.contains("events")) {
    const json& e = doc.at("events");
    reject_unknown(e, "events", {"bins", "window_ms", "signed", "normalize"});
    read(e, "events", "bins", c.events.bins);
    read(e, "events", "window_ms", c.events.window_ms);
    read(e, "events", "signed", c.events.signed_polarity);
    read(e, "events", "normalize", c.events.normalize);
    if (c.events.bins != c.vit.in_channels) {
      throw ConfigError("events.bins", "must equal vit.in_channels (" +
                                           std::to_string(c.vit.in_channels) + ")");
    }
    if (!(c.events.window_ms > 0.0)) throw ConfigError("events.window_ms", "must be > 0");
  }
  if (doc.contains("metrics")) {
    const json& m = doc.at("metrics");
    reject_unknown(m, "metrics", {"aiou_denominator"});
    std::string denom = "mask_total";
    read(m, "metrics", "aiou_denominator", denom);
    try {
      c.aiou_denominator = parse_aiou_denominator(denom);
    } catch (const std::exception& e) {
      throw ConfigError("metrics.aiou_denominator", e.what());
    }
  }
  read(doc, "", "teacher_checkpoint", c.teacher_checkpoint);
  if (doc.contains("output")) {
    const json& o = doc.at("output");
    reject_unknown(o, "output", {"dir"});
    read(o, "output", "dir", c.output_dir);
  }
  try {
    c.train.validate(c.vit);
  } catch (const std::exception& e) {
    throw ConfigError("train", e.what());
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("<file>", "cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("<file>", std::string("parse error: ") + e.what());
  }
  return parse_run_config(doc);
}

json to_json(const RunConfig& c) {
  const DistillConfig& d = c.train.distill;
  json importance = nullptr;
  if (d.importance.size() > 0) {
    importance = std::vector<double>(d.importance.data().begin(), d.importance.data().end());
  }
  return json{
      {"seed", c.seed},
      {"vit",
       {{"img_size", c.vit.img_size},
        {"patch_size", c.vit.patch_size},
        {"in_channels", c.vit.in_channels},
        {"embed_dim", c.vit.embed_dim},
        {"depth", c.vit.depth},
        {"num_heads", c.vit.num_heads},
        {"mlp_hidden", c.vit.mlp_hidden}}},
      {"distill",
       {{"layers", d.layers},
        {"gammas", d.gammas},
        {"beta", d.beta},
        {"mixing_ratio", d.mixing_ratio},
        {"attention_source", to_string(d.source)},
        {"rollout_horizon", d.rollout_horizon},
        {"importance", importance}}},
      {"train",
       {{"epochs", c.train.epochs},
        {"steps_per_epoch", c.train.steps_per_epoch},
        {"batch_size", c.train.batch_size},
        {"lr", c.train.lr},
        {"decay_factor", c.train.decay_factor},
        {"decay_epoch", c.train.decay_epoch},
        {"adam", {{"beta1", c.train.adam.beta1}, {"beta2", c.train.adam.beta2}, {"eps", c.train.adam.eps}}},
        {"plan", c.train.plan.to_string()},
        {"objective", c.train.objective == Objective::kAffinity ? "affinity" : "weighted_l1"}}},
      {"data",
       {{"dir", c.data.dir},
        {"synthetic",
         {{"count", c.data.synthetic.count},
          {"seed", c.data.synthetic.seed},
          {"max_shapes", c.data.synthetic.max_shapes},
          {"threshold", c.data.synthetic.threshold},
          {"max_speed", c.data.synthetic.max_speed}}}}},
      {"events",
       {{"bins", c.events.bins},
        {"window_ms", c.events.window_ms},
        {"signed", c.events.signed_polarity},
        {"normalize", c.events.normalize}}},
      {"metrics",
       {{"aiou_denominator",
         c.aiou_denominator == AiouDenominator::kMaskTotal ? "mask_total" : "image_area"}}},
      {"teacher_checkpoint", c.teacher_checkpoint},
      {"output", {{"dir", c.output_dir}}},
  };
}

json to_json(const SceneSpec& spec) {
  json shapes = json::array();
  for (const Shape& s : spec.shapes) {
    json j{{"kind", s.kind == ShapeKind::kDisk ? "disk" : "rectangle"},
           {"x", s.x},
           {"y", s.y},
           {"vx", s.vx},
           {"vy", s.vy},
           {"intensity", s.intensity}};
    if (s.kind == ShapeKind::kDisk) {
      j["radius"] = s.radius;
    } else {
      j["w"] = s.w;
      j["h"] = s.h;
    }
    shapes.push_back(j);
  }
  return json{{"height", spec.height},       {"width", spec.width},
              {"background", spec.background}, {"window_ms", spec.window_ms},
              {"threshold", spec.threshold},   {"noise_rate_hz", spec.noise_rate_hz},
              {"seed", spec.seed},             {"shapes", shapes}};
}

SceneSpec scene_from_json(const json& doc) {
  reject_unknown(doc, "scene", {"height", "width", "background", "window_ms", "threshold",
                                "noise_rate_hz", "seed", "shapes"});
  SceneSpec spec;
  read(doc, "scene", "height", spec.height);
  read(doc, "scene", "width", spec.width);
  read(doc, "scene", "background", spec.background);
  read(doc, "scene", "window_ms", spec.window_ms);
  read(doc, "scene", "threshold", spec.threshold);
  read(doc, "scene", "noise_rate_hz", spec.noise_rate_hz);
  read(doc, "scene", "seed", spec.seed);
  if (doc.contains("shapes")) {
    size_t i = 0;
    for (const json& j : doc.at("shapes")) {
      const std::string prefix = "scene.shapes." + std::to_string(i++);
      reject_unknown(j, prefix, {"kind", "x", "y", "w", "h", "radius", "vx", "vy", "intensity"});
      Shape s;
      std::string kind = "rectangle";
      read(j, prefix, "kind", kind);
      if (kind == "disk") {
        s.kind = ShapeKind::kDisk;
      } else if (kind != "rectangle") {
        throw ConfigError(prefix + ".kind", "expected rectangle or disk");
      }
      read(j, prefix, "x", s.x);
      read(j, prefix, "y", s.y);
      read(j, prefix, "w", s.w);
      read(j, prefix, "h", s.h);
      read(j, prefix, "radius", s.radius);
      read(j, prefix, "vx", s.vx);
      read(j, prefix, "vy", s.vy);
      read(j, prefix, "intensity", s.intensity);
      spec.shapes.push_back(s);
    }
  }
  try {
    spec.validate();
  } catch (const std::exception& e) {
    throw ConfigError("scene", e.what());
  }
  return spec;
}

}  // namespace evdistill
