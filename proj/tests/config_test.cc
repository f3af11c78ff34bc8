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

#include <fstream>

#include <gtest/gtest.h>

#include "evdistill/config.h"
#include "evdistill/dataset.h"
#include "evdistill/mask_io.h"
#include "test_util.h"

namespace evdistill {
namespace {

using nlohmann::json;

std::string error_key(const json& doc) {
  try {
    parse_run_config(doc);
  } catch (const ConfigError& e) {
    return e.key();
  }
  return "";
}

TEST(RunConfig, EmptyDocumentGivesTinyDefaults) {
  const RunConfig c = parse_run_config(json::object());
  EXPECT_EQ(c.vit, ViTConfig{});
  EXPECT_EQ(c.train.total_steps(), 200u);
  EXPECT_EQ(c.train.lr, 1e-3);
  EXPECT_EQ(c.train.distill.layers, DistillConfig::for_depth(4).layers);
  EXPECT_EQ(c.aiou_denominator, AiouDenominator::kMaskTotal);
}

TEST(RunConfig, UnknownKeysNameTheirPath) {
  EXPECT_EQ(error_key(json{{"sede", 1}}), "sede");
  EXPECT_EQ(error_key(json{{"train", {{"adam", {{"beta3", 0.9}}}}}}), "train.adam.beta3");
  EXPECT_EQ(error_key(json{{"data", {{"synthetic", {{"cnt", 2}}}}}}), "data.synthetic.cnt");
}

TEST(RunConfig, BadValuesNameTheirKey) {
  EXPECT_EQ(error_key(json{{"train", {{"lr", "fast"}}}}), "train.lr");
  EXPECT_EQ(error_key(json{{"train", {{"plan", "mlps:9"}}}}), "train.plan");
  EXPECT_EQ(error_key(json{{"train", {{"objective", "l2"}}}}), "train.objective");
  EXPECT_EQ(error_key(json{{"events", {{"bins", 5}}}}), "events.bins");
  EXPECT_EQ(error_key(json{{"vit", {{"embed_dim", 30}}}}), "vit");
  EXPECT_EQ(error_key(json{{"distill", {{"attention_source", "oracle"}}}}), "distill.attention_source");
  EXPECT_EQ(error_key(json{{"metrics", {{"aiou_denominator", "pixels"}}}}), "metrics.aiou_denominator");
  EXPECT_EQ(error_key(json{{"distill", {{"mixing_ratio", 1.5}}}}), "train");
}

TEST(RunConfig, SeedPropagates) {
  const RunConfig c = parse_run_config(json{{"seed", 17}});
  EXPECT_EQ(c.train.seed, 17u);
  EXPECT_EQ(c.train.distill.seed, 17u);
}

TEST(RunConfig, DepthScalesDefaults) {
  const RunConfig c = parse_run_config(json{{"vit", {{"depth", 8}}}});
  EXPECT_EQ(c.train.distill.layers, DistillConfig::for_depth(8).layers);
}

TEST(RunConfig, JsonRoundTrip) {
  const json doc = {{"seed", 3},
                    {"distill", {{"beta", 0.7}, {"mixing_ratio", 0.25}, {"attention_source", "student"},
                                 {"rollout_horizon", 2}, {"importance", std::vector<double>(16, 2.0)}}},
                    {"train", {{"epochs", 2}, {"steps_per_epoch", 3}, {"plan", "lora:4:mlps:2,4"},
                               {"decay_epoch", 2}, {"objective", "affinity"}}},
                    {"events", {{"bins", 3}, {"window_ms", 20.0}, {"signed", true}}},
                    {"metrics", {{"aiou_denominator", "image_area"}}},
                    {"output", {{"dir", "out"}}}};
  const RunConfig a = parse_run_config(doc);
  const json once = to_json(a);
  const RunConfig b = parse_run_config(once);
  EXPECT_EQ(to_json(b), once);
  EXPECT_EQ(b.train.plan.to_string(), "lora:4:mlps:2,4");
  EXPECT_EQ(b.train.distill.source, AttentionSource::kStudent);
  EXPECT_EQ(b.aiou_denominator, AiouDenominator::kImageArea);
  EXPECT_TRUE(b.events.signed_polarity);
}

TEST(RunConfig, FileErrors) {
  testing::TempDir dir("config");
  EXPECT_THROW(load_run_config(dir.path() / "missing.json"), ConfigError);
  std::ofstream(dir.path() / "bad.json") << "{ not json";
  EXPECT_THROW(load_run_config(dir.path() / "bad.json"), ConfigError);
}

TEST(SceneJson, RoundTrip) {
  const SceneSpec spec = random_scene({}, 12);
  const SceneSpec back = scene_from_json(to_json(spec));
  EXPECT_EQ(to_json(back), to_json(spec));
  EXPECT_EQ(render_frame(back, 5.0), render_frame(spec, 5.0));
  EXPECT_THROW(scene_from_json(json{{"shapes", {{{"kind", "star"}}}}}), ConfigError);
}

TEST(Dataset, SampleDirectoryRoundTrip) {
  testing::TempDir dir("config");
  const SceneSpec spec = random_scene({}, 4);
  save_sample_dir(dir.path() / "a", spec);
  for (const char* f : {"frame.evdt", "events.txt", "masks.rle", "scene.json"})
    EXPECT_TRUE(std::filesystem::exists(dir.path() / "a" / f)) << f;
  const Sample direct = make_sample(spec);
  const Sample loaded = load_sample_dir(dir.path() / "a", EventConfig{});
  EXPECT_EQ(loaded.events, direct.events);
  ASSERT_EQ(loaded.masks.masks.size(), direct.masks.masks.size());
  for (size_t i = 0; i < direct.masks.masks.size(); ++i)
    EXPECT_EQ(loaded.masks.masks[i].cells, direct.masks.masks[i].cells);
  for (size_t i = 0; i < direct.image.size(); ++i)
    EXPECT_NEAR(loaded.image[i], direct.image[i], 1e-7);
}

TEST(Dataset, ListingIsSortedAndFiltered) {
  testing::TempDir dir("config");
  save_sample_dir(dir.path() / "b", random_scene({}, 1));
  save_sample_dir(dir.path() / "a", random_scene({}, 2));
  std::filesystem::create_directories(dir.path() / "c");
  const auto dirs = list_sample_dirs(dir.path());
  ASSERT_EQ(dirs.size(), 2u);
  EXPECT_EQ(dirs[0].filename(), "a");
  EXPECT_EQ(dirs[1].filename(), "b");
  EXPECT_EQ(load_dataset(dir.path(), EventConfig{}).size(), 2u);
}

TEST(Dataset, SyntheticScenesFollowConfig) {
  RunConfig c;
  c.data.synthetic.count = 3;
  c.data.synthetic.seed = 10;
  const std::vector<SceneSpec> scenes = synthetic_scenes(c);
  ASSERT_EQ(scenes.size(), 3u);
  for (size_t i = 0; i < 3; ++i) EXPECT_EQ(scenes[i].seed, 10 + i);
  EXPECT_EQ(load_run_data(c).size(), 3u);
}

}  // namespace
}  // namespace evdistill
