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

#ifndef EVDISTILL_DATASET_H_
#define EVDISTILL_DATASET_H_

#include <filesystem>
#include <vector>

#include "evdistill/config.h"
#include "evdistill/synth.h"

namespace evdistill {

// A sample directory holds frame.evdt (entry "frame", H×W×3), events.txt,
// masks.rle and, for synthetic samples, scene.json.
void save_sample_dir(const std::filesystem::path& dir, const SceneSpec& spec);

// Voxelises events.txt over [0, window]. The window comes from scene.json
// when present, else from events.window_ms.
Sample load_sample_dir(const std::filesystem::path& dir, const EventConfig& events);

// Subdirectories of `root` containing frame.evdt, in name order.
std::vector<std::filesystem::path> list_sample_dirs(const std::filesystem::path& root);

// Every subdirectory of `root` containing frame.evdt, in name order.
std::vector<Sample> load_dataset(const std::filesystem::path& root, const EventConfig& events);

// Random scenes sized to the encoder input, generated from data.synthetic.
std::vector<SceneSpec> synthetic_scenes(const RunConfig& config);

// Samples from data.dir, or synthetic scenes when it is empty.
std::vector<Sample> load_run_data(const RunConfig& config);

}  // namespace evdistill

#endif  // EVDISTILL_DATASET_H_
