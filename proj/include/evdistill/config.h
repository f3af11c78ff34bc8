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

#ifndef EVDISTILL_CONFIG_H_
#define EVDISTILL_CONFIG_H_

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "json.hpp"

#include "evdistill/metrics.h"
#include "evdistill/synth.h"
#include "evdistill/trainer.h"
#include "evdistill/vit.h"

namespace evdistill {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& key, const std::string& what);
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

struct EventConfig {
  size_t bins = kDefaultBins;
  double window_ms = 40.0;
  bool signed_polarity = false;
  bool normalize = true;

  VoxelOptions voxel() const { return {bins, signed_polarity}; }
};

struct SyntheticDataConfig {
  size_t count = 8;
  uint64_t seed = 1;
  size_t max_shapes = 3;
  double threshold = 0.2;
  double max_speed = 0.15;
};

struct DataConfig {
  std::string dir;  // sample directories; synthetic data when empty
  SyntheticDataConfig synthetic;
};

// Everything a run needs. Defaults are the desk-scale profile: a 32px,
// 4-block encoder trained for 200 steps at lr 1e-3 on synthetic scenes.
struct RunConfig {
  uint64_t seed = 0;
  ViTConfig vit;
  TrainConfig train = TrainConfig::tiny_profile(4);
  DataConfig data;
  EventConfig events;
  AiouDenominator aiou_denominator = AiouDenominator::kMaskTotal;
  std::string teacher_checkpoint;
  std::string output_dir = "run";
};

// Missing keys keep their defaults; layer-dependent defaults (distillation
// layers, trainable plan) follow vit.depth. Unknown keys and bad values throw
// ConfigError naming the dotted key.
RunConfig parse_run_config(const nlohmann::json& doc);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& config);

nlohmann::json to_json(const SceneSpec& spec);
SceneSpec scene_from_json(const nlohmann::json& doc);

}  // namespace evdistill

#endif  // EVDISTILL_CONFIG_H_
