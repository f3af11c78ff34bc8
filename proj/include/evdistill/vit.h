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

#ifndef EVDISTILL_VIT_H_
#define EVDISTILL_VIT_H_

#include <cstddef>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "evdistill/autodiff.h"
#include "evdistill/tensor.h"

namespace evdistill {

struct ViTConfig {
  size_t img_size = 32;
  size_t patch_size = 8;
  size_t in_channels = 3;
  size_t embed_dim = 32;
  size_t depth = 4;
  size_t num_heads = 4;
  size_t mlp_hidden = 128;

  size_t grid() const { return img_size / patch_size; }
  size_t tokens() const { return grid() * grid(); }
  size_t patch_dim() const { return patch_size * patch_size * in_channels; }
  size_t head_dim() const { return embed_dim / num_heads; }

  // Throws std::invalid_argument on inconsistent sizes.
  void validate() const;

  // ViT-B at 512x512 input: patch 16, width 768, 12 blocks, 12 heads, MLP 3072.
  static ViTConfig vit_b();

  friend bool operator==(const ViTConfig&, const ViTConfig&) = default;
};

enum class AffineSite { kQkv, kProj, kMlpIn, kMlpOut };

struct LoraSite {
  size_t layer = 1;  // 1-based block index
  AffineSite site = AffineSite::kMlpIn;

  friend auto operator<=>(const LoraSite&, const LoraSite&) = default;
};

// Both MLP maps of each listed block.
std::vector<LoraSite> lora_mlp_sites(std::span<const size_t> layers);
// Every affine map (qkv, proj, both MLP maps) of each listed block.
std::vector<LoraSite> lora_block_sites(std::span<const size_t> layers);

// Which parameters a training run may update. "Embed" always means the patch
// projection (weights and bias); positional embeddings stay frozen unless the
// mode is kAll.
struct TrainablePlan {
  enum class Mode { kNone, kEmbed, kEmbedMlps, kEmbedBlocks, kEmbedAllMlps, kAll, kLora };

  Mode mode = Mode::kNone;
  std::vector<size_t> layers;  // kEmbedMlps / kEmbedBlocks
  size_t lora_rank = 0;
  std::vector<LoraSite> lora_sites;

  // Grammar: none | embed | embed+mlps:3,6,9,12 | embed+blocks:1,2 |
  // embed+all_mlps | all | lora:<rank>:mlps:<layers|all> |
  // lora:<rank>:blocks:<layers|all>. Layer lists of "all" are resolved
  // against `depth`.
  static TrainablePlan parse(std::string_view text, size_t depth);
  std::string to_string() const;

  void validate(const ViTConfig& config) const;
};

struct ParamSpec {
  std::string name;
  std::vector<size_t> dims;
  bool trainable = false;
};

// Every parameter (including LoRA adapters for a LoRA plan) with its shape and
// trainability under `plan`, in canonical name order.
std::vector<ParamSpec> parameter_layout(const ViTConfig& config, const TrainablePlan& plan);

// Exact number of scalars marked trainable. Analytic; never allocates weights.
size_t count_trainable(const ViTConfig& config, const TrainablePlan& plan);
size_t count_total(const ViTConfig& config, const TrainablePlan& plan);

struct ViTParams {
  ViTConfig config;
  std::map<std::string, Tensor> tensors;
  std::set<std::string> trainable;

  // Gaussian fan-in initialisation from a fixed seed; no adapters, nothing
  // trainable.
  static ViTParams init(const ViTConfig& config, uint64_t seed);

  const Tensor& at(const std::string& name) const;
  std::vector<std::string> trainable_names() const;  // sorted
  size_t trainable_count() const;
};

// Marks parameters trainable according to `plan`. A LoRA plan attaches
// adapters first (see apply_lora).
ViTParams apply_plan(ViTParams params, const TrainablePlan& plan, uint64_t seed = 0);

// Adds W += B·A adapters (A: r×in small random, B: out×r zero) at each site.
// The base map at a site becomes frozen and the adapters trainable.
ViTParams apply_lora(ViTParams params, size_t rank, std::span<const LoraSite> sites,
                     uint64_t seed = 0);

std::string site_prefix(const LoraSite& site);

// Per-layer embeddings X^(0..n) and head-averaged attention A^(1..n);
// attention[i - 1] belongs to block i.
struct EmbeddingCapture {
  std::vector<Tensor> embeddings;
  std::vector<Tensor> attention;
};

// Capture whose embeddings are still on a tape.
struct TapedCapture {
  std::vector<Var> embeddings;
  std::vector<Tensor> attention;

  EmbeddingCapture detach() const;
};

// Parameters placed on a tape by name.
struct BoundParams {
  const ViTConfig* config = nullptr;
  std::map<std::string, Var> vars;

  Var at(const std::string& name) const;
  bool has(const std::string& name) const { return vars.contains(name); }
};

// Trainable tensors become tape parameters, the rest constants.
BoundParams bind_params(Tape& tape, const ViTParams& params);
// Like bind_params but every tensor is a constant.
BoundParams bind_constants(Tape& tape, const ViTParams& params);
// Trainable tensors are taken from `trainable_vars`, in trainable_names() order.
BoundParams bind_params(Tape& tape, const ViTParams& params, std::span<const Var> trainable_vars);

// H×W×C image into k rows of flattened (dy, dx, channel) patches.
Tensor patchify(const ViTConfig& config, const Tensor& image);

// X^(0): patch projection plus positional embedding.
Var embed_patches(const BoundParams& params, const Tensor& image);
TapedCapture run_blocks(const BoundParams& params, Var tokens);

EmbeddingCapture forward_capture(const ViTParams& params, const Tensor& image);
EmbeddingCapture forward_tokens(const ViTParams& params, const Tensor& tokens);

}  // namespace evdistill

#endif  // EVDISTILL_VIT_H_
