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

#include "evdistill/dataset.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "evdistill/mask_io.h"
#include "evdistill/tensor_dump.h"

namespace evdistill {

namespace fs = std::filesystem;

void save_sample_dir(const fs::path& dir, const SceneSpec& spec) {
  fs::create_directories(dir);
  const DumpEntry frame{"frame", DType::kF32, render_frame(spec, spec.window_ms)};
  save_tensor_dump(dir / "frame.evdt", std::span<const DumpEntry>(&frame, 1));
  const std::vector<Event> events = generate_events(spec);
  write_events(dir / "events.txt", events, spec.height, spec.width);
  save_masks(dir / "masks.rle", ground_truth_masks(spec, spec.window_ms));
  std::ofstream out(dir / "scene.json");
  out << to_json(spec).dump(2) << "\n";
  if (!out) throw std::runtime_error("cannot write " + (dir / "scene.json").string());
}

Sample load_sample_dir(const fs::path& dir, const EventConfig& events) {
  const std::vector<DumpEntry> entries = load_tensor_dump(dir / "frame.evdt");
  const DumpEntry* frame = find_entry(entries, "frame");
  if (frame == nullptr || frame->tensor.rank() != 3) {
    throw std::runtime_error(dir.string() + ": frame.evdt has no rank-3 'frame' entry");
  }
  const size_t h = frame->tensor.dim(0);
  const size_t w = frame->tensor.dim(1);

  TimeWindow window{0, static_cast<int64_t>(std::llround(events.window_ms * 1000.0))};
  if (fs::exists(dir / "scene.json")) {
    std::ifstream in(dir / "scene.json");
    window = scene_from_json(nlohmann::json::parse(in)).window();
  }
  const EventFile file = read_events(dir / "events.txt", h, w);
  EventVolume volume = voxelize(file.events, window, h, w, events.voxel());
  if (events.normalize) volume = normalize_volume(volume);

  MaskSet masks = load_masks(dir / "masks.rle");
  if (masks.height != h || masks.width != w) {
    throw std::runtime_error(dir.string() + ": masks.rle size differs from frame");
  }
  return Sample{frame->tensor, std::move(volume.grid), std::move(masks)};
}

std::vector<fs::path> list_sample_dirs(const fs::path& root) {
  if (!fs::is_directory(root)) throw std::runtime_error("not a directory: " + root.string());
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && fs::exists(entry.path() / "frame.evdt")) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  return dirs;
}

std::vector<Sample> load_dataset(const fs::path& root, const EventConfig& events) {
  const std::vector<fs::path> dirs = list_sample_dirs(root);
  if (dirs.empty()) throw std::runtime_error("no sample directories under " + root.string());
  std::vector<Sample> samples;
  samples.reserve(dirs.size());
  for (const fs::path& dir : dirs) samples.push_back(load_sample_dir(dir, events));
  return samples;
}

std::vector<SceneSpec> synthetic_scenes(const RunConfig& config) {
  RandomSceneOptions options;
  options.height = config.vit.img_size;
  options.width = config.vit.img_size;
  options.max_shapes = config.data.synthetic.max_shapes;
  options.window_ms = config.events.window_ms;
  options.threshold = config.data.synthetic.threshold;
  options.max_speed = config.data.synthetic.max_speed;
  std::vector<SceneSpec> scenes;
  for (size_t i = 0; i < config.data.synthetic.count; ++i) {
    scenes.push_back(random_scene(options, config.data.synthetic.seed + i));
  }
  return scenes;
}

std::vector<Sample> load_run_data(const RunConfig& config) {
  std::vector<Sample> samples;
  if (!config.data.dir.empty()) {
    samples = load_dataset(config.data.dir, config.events);
  } else {
    for (const SceneSpec& spec : synthetic_scenes(config)) {
      samples.push_back(make_sample(spec, config.events.voxel(), config.events.normalize));
    }
  }
  for (const Sample& s : samples) {
    if (s.image.dim(0) != config.vit.img_size || s.image.dim(1) != config.vit.img_size) {
      throw std::runtime_error("sample size " + shape_string(s.image.dims()) +
                               " does not match vit.img_size " +
                               std::to_string(config.vit.img_size));
    }
  }
  return samples;
}

}  // namespace evdistill
