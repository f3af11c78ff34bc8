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

#include "evdistill/vit.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

namespace evdistill {

void ViTConfig::validate() const {
  if (img_size == 0 || patch_size == 0 || in_channels == 0 || embed_dim == 0 || depth == 0 ||
      num_heads == 0 || mlp_hidden == 0) {
    throw std::invalid_argument("vit config: all sizes must be positive");
  }
  if (img_size % patch_size != 0) {
    throw std::invalid_argument("vit config: img_size " + std::to_string(img_size) +
                                " not divisible by patch_size " + std::to_string(patch_size));
  }
  if (embed_dim % num_heads != 0) {
    throw std::invalid_argument("vit config: embed_dim " + std::to_string(embed_dim) +
                                " not divisible by num_heads " + std::to_string(num_heads));
  }
}

ViTConfig ViTConfig::vit_b() {
  return ViTConfig{.img_size = 512,
                   .patch_size = 16,
                   .in_channels = 3,
                   .embed_dim = 768,
                   .depth = 12,
                   .num_heads = 12,
                   .mlp_hidden = 3072};
}

std::vector<LoraSite> lora_mlp_sites(std::span<const size_t> layers) {
  std::vector<LoraSite> sites;
  for (size_t l : layers) {
    sites.push_back({l, AffineSite::kMlpIn});
    sites.push_back({l, AffineSite::kMlpOut});
  }
  return sites;
}

std::vector<LoraSite> lora_block_sites(std::span<const size_t> layers) {
  std::vector<LoraSite> sites;
  for (size_t l : layers) {
    for (AffineSite s : {AffineSite::kQkv, AffineSite::kProj, AffineSite::kMlpIn,
                         AffineSite::kMlpOut}) {
      sites.push_back({l, s});
    }
  }
  return sites;
}

std::string site_prefix(const LoraSite& site) {
  const std::string block = "block." + std::to_string(site.layer) + ".";
  switch (site.site) {
    case AffineSite::kQkv: return block + "attn.qkv";
    case AffineSite::kProj: return block + "attn.proj";
    case AffineSite::kMlpIn: return block + "mlp.fc1";
    case AffineSite::kMlpOut: return block + "mlp.fc2";
  }
  return block;
}

namespace {

std::vector<size_t> parse_layer_list(std::string_view text, size_t depth) {
  std::vector<size_t> layers;
  if (text == "all") {
    for (size_t l = 1; l <= depth; ++l) layers.push_back(l);
    return layers;
  }
  size_t start = 0;
  while (start <= text.size()) {
    const size_t comma = std::min(text.find(',', start), text.size());
    std::string_view item = text.substr(start, comma - start);
    size_t value = 0;
    auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), value);
    if (item.empty() || ec != std::errc() || ptr != item.data() + item.size()) {
      throw std::invalid_argument("trainable plan: bad layer '" + std::string(item) + "'");
    }
    layers.push_back(value);
    start = comma + 1;
  }
  return layers;
}

std::string join_layers(const std::vector<size_t>& layers) {
  std::string out;
  for (size_t i = 0; i < layers.size(); ++i) out += (i ? "," : "") + std::to_string(layers[i]);
  return out;
}

}  // namespace

TrainablePlan TrainablePlan::parse(std::string_view text, size_t depth) {
  using M = Mode;
  TrainablePlan plan;
  if (text == "none") return plan;
  if (text == "embed") return {M::kEmbed, {}, 0, {}};
  if (text == "embed+all_mlps") return {M::kEmbedAllMlps, {}, 0, {}};
  if (text == "all") return {M::kAll, {}, 0, {}};
  if (text.starts_with("embed+mlps:")) {
    return {M::kEmbedMlps, parse_layer_list(text.substr(11), depth), 0, {}};
  }
  if (text.starts_with("embed+blocks:")) {
    return {M::kEmbedBlocks, parse_layer_list(text.substr(13), depth), 0, {}};
  }
  if (text.starts_with("lora:")) {
    std::string_view rest = text.substr(5);
    const size_t colon = rest.find(':');
    if (colon == std::string_view::npos) throw std::invalid_argument("trainable plan: lora needs a rank");
    size_t rank = 0;
    std::string_view rank_text = rest.substr(0, colon);
    auto [ptr, ec] = std::from_chars(rank_text.data(), rank_text.data() + rank_text.size(), rank);
    if (ec != std::errc() || ptr != rank_text.data() + rank_text.size() || rank == 0) {
      throw std::invalid_argument("trainable plan: bad lora rank '" + std::string(rank_text) + "'");
    }
    rest = rest.substr(colon + 1);
    plan.mode = M::kLora;
    plan.lora_rank = rank;
    if (rest.starts_with("mlps:")) {
      plan.layers = parse_layer_list(rest.substr(5), depth);
      plan.lora_sites = lora_mlp_sites(plan.layers);
    } else if (rest.starts_with("blocks:")) {
      plan.layers = parse_layer_list(rest.substr(7), depth);
      plan.lora_sites = lora_block_sites(plan.layers);
    } else {
      throw std::invalid_argument("trainable plan: lora sites must be mlps:... or blocks:...");
    }
    return plan;
  }
  throw std::invalid_argument("trainable plan: unknown plan '" + std::string(text) + "'");
}

std::string TrainablePlan::to_string() const {
  switch (mode) {
    case Mode::kNone: return "none";
    case Mode::kEmbed: return "embed";
    case Mode::kEmbedMlps: return "embed+mlps:" + join_layers(layers);
    case Mode::kEmbedBlocks: return "embed+blocks:" + join_layers(layers);
    case Mode::kEmbedAllMlps: return "embed+all_mlps";
    case Mode::kAll: return "all";
    case Mode::kLora: {
      const bool blocks = std::any_of(lora_sites.begin(), lora_sites.end(), [](const LoraSite& s) {
        return s.site == AffineSite::kQkv;
      });
      return "lora:" + std::to_string(lora_rank) + (blocks ? ":blocks:" : ":mlps:") +
             join_layers(layers);
    }
  }
  return "none";
}

void TrainablePlan::validate(const ViTConfig& config) const {
  for (size_t l : layers) {
    if (l < 1 || l > config.depth) {
      throw std::out_of_range("trainable plan: layer " + std::to_string(l) + " outside [1, " +
                              std::to_string(config.depth) + "]");
    }
  }
  if (mode == Mode::kLora) {
    if (lora_rank == 0) throw std::invalid_argument("trainable plan: lora rank must be >= 1");
    for (const LoraSite& s : lora_sites) {
      if (s.layer < 1 || s.layer > config.depth) {
        throw std::out_of_range("trainable plan: lora site layer " + std::to_string(s.layer) +
                                " outside [1, " + std::to_string(config.depth) + "]");
      }
    }
  }
}

namespace {

std::pair<size_t, size_t> site_shape(const ViTConfig& c, AffineSite site) {
  switch (site) {
    case AffineSite::kQkv: return {c.embed_dim, 3 * c.embed_dim};
    case AffineSite::kProj: return {c.embed_dim, c.embed_dim};
    case AffineSite::kMlpIn: return {c.embed_dim, c.mlp_hidden};
    case AffineSite::kMlpOut: return {c.mlp_hidden, c.embed_dim};
  }
  return {0, 0};
}

std::vector<ParamSpec> base_layout(const ViTConfig& c) {
  std::vector<ParamSpec> specs;
  specs.push_back({"patch_embed.w", {c.patch_dim(), c.embed_dim}, false});
  specs.push_back({"patch_embed.b", {c.embed_dim}, false});
  specs.push_back({"pos_embed", {c.tokens(), c.embed_dim}, false});
  for (size_t l = 1; l <= c.depth; ++l) {
    const std::string b = "block." + std::to_string(l) + ".";
    specs.push_back({b + "norm1.gamma", {c.embed_dim}, false});
    specs.push_back({b + "norm1.beta", {c.embed_dim}, false});
    for (AffineSite s : {AffineSite::kQkv, AffineSite::kProj}) {
      auto [in, out] = site_shape(c, s);
      const std::string p = site_prefix({l, s});
      specs.push_back({p + ".w", {in, out}, false});
      specs.push_back({p + ".b", {out}, false});
    }
    specs.push_back({b + "norm2.gamma", {c.embed_dim}, false});
    specs.push_back({b + "norm2.beta", {c.embed_dim}, false});
    for (AffineSite s : {AffineSite::kMlpIn, AffineSite::kMlpOut}) {
      auto [in, out] = site_shape(c, s);
      const std::string p = site_prefix({l, s});
      specs.push_back({p + ".w", {in, out}, false});
      specs.push_back({p + ".b", {out}, false});
    }
  }
  return specs;
}

size_t block_of(const std::string& name) {
  if (!name.starts_with("block.")) return 0;
  return std::stoul(name.substr(6, name.find('.', 6) - 6));
}

bool is_mlp(const std::string& name) { return name.find(".mlp.") != std::string::npos; }

bool plan_marks(const TrainablePlan& plan, const std::string& name) {
  using M = TrainablePlan::Mode;
  const bool embed = name.starts_with("patch_embed.");
  const bool adapter = name.ends_with(".lora_a") || name.ends_with(".lora_b");
  const size_t block = block_of(name);
  const auto listed = [&](size_t l) {
    return std::find(plan.layers.begin(), plan.layers.end(), l) != plan.layers.end();
  };
  switch (plan.mode) {
    case M::kNone: return false;
    case M::kEmbed: return embed;
    case M::kEmbedMlps: return embed || (is_mlp(name) && !adapter && listed(block));
    case M::kEmbedBlocks: return embed || (block != 0 && !adapter && listed(block));
    case M::kEmbedAllMlps: return embed || (is_mlp(name) && !adapter);
    case M::kAll: return true;
    case M::kLora: return embed || adapter;
  }
  return false;
}

}  // namespace

std::vector<ParamSpec> parameter_layout(const ViTConfig& config, const TrainablePlan& plan) {
  config.validate();
  plan.validate(config);
  std::vector<ParamSpec> specs = base_layout(config);
  if (plan.mode == TrainablePlan::Mode::kLora) {
    for (const LoraSite& site : plan.lora_sites) {
      auto [in, out] = site_shape(config, site.site);
      const std::string p = site_prefix(site);
      specs.push_back({p + ".lora_a", {plan.lora_rank, in}, false});
      specs.push_back({p + ".lora_b", {out, plan.lora_rank}, false});
    }
  }
  for (ParamSpec& s : specs) s.trainable = plan_marks(plan, s.name);
  return specs;
}

size_t count_trainable(const ViTConfig& config, const TrainablePlan& plan) {
  size_t total = 0;
  for (const ParamSpec& s : parameter_layout(config, plan))
    if (s.trainable) total += element_count(s.dims);
  return total;
}

size_t count_total(const ViTConfig& config, const TrainablePlan& plan) {
  size_t total = 0;
  for (const ParamSpec& s : parameter_layout(config, plan)) total += element_count(s.dims);
  return total;
}

ViTParams ViTParams::init(const ViTConfig& config, uint64_t seed) {
  config.validate();
  ViTParams params;
  params.config = config;
  std::mt19937_64 rng(seed);
  for (const ParamSpec& spec : base_layout(config)) {
    Tensor t(spec.dims);
    if (spec.name.ends_with(".gamma")) {
      t = Tensor(spec.dims, 1.0);
    } else if (spec.name.ends_with(".w")) {
      std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(spec.dims[0])));
      for (double& v : t.data()) v = normal(rng);
    } else if (spec.name == "pos_embed") {
      std::normal_distribution<double> normal(0.0, 0.5);
      for (double& v : t.data()) v = normal(rng);
    }
    params.tensors.emplace(spec.name, std::move(t));
  }
  return params;
}

const Tensor& ViTParams::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw std::out_of_range("vit params: no tensor named " + name);
  return it->second;
}

std::vector<std::string> ViTParams::trainable_names() const {
  return {trainable.begin(), trainable.end()};
}

size_t ViTParams::trainable_count() const {
  size_t n = 0;
  for (const std::string& name : trainable) n += at(name).size();
  return n;
}

ViTParams apply_lora(ViTParams params, size_t rank, std::span<const LoraSite> sites, uint64_t seed) {
  if (rank == 0) throw std::invalid_argument("apply_lora: rank must be >= 1");
  std::mt19937_64 rng(seed ^ 0x10a4a5e5ULL);
  std::normal_distribution<double> normal(0.0, 0.01);
  for (const LoraSite& site : sites) {
    if (site.layer < 1 || site.layer > params.config.depth) {
      throw std::out_of_range("apply_lora: site layer " + std::to_string(site.layer) +
                              " outside [1, " + std::to_string(params.config.depth) + "]");
    }
    auto [in, out] = site_shape(params.config, site.site);
    const std::string p = site_prefix(site);
    Tensor a({rank, in});
    for (double& v : a.data()) v = normal(rng);
    params.tensors[p + ".lora_a"] = std::move(a);
    params.tensors[p + ".lora_b"] = Tensor({out, rank});
    params.trainable.erase(p + ".w");
    params.trainable.erase(p + ".b");
    params.trainable.insert(p + ".lora_a");
    params.trainable.insert(p + ".lora_b");
  }
  return params;
}

ViTParams apply_plan(ViTParams params, const TrainablePlan& plan, uint64_t seed) {
  plan.validate(params.config);
  if (plan.mode == TrainablePlan::Mode::kLora) {
    params = apply_lora(std::move(params), plan.lora_rank, plan.lora_sites, seed);
  }
  params.trainable.clear();
  for (const auto& [name, tensor] : params.tensors) {
    if (plan_marks(plan, name)) params.trainable.insert(name);
  }
  return params;
}

EmbeddingCapture TapedCapture::detach() const {
  EmbeddingCapture out;
  for (const Var& v : embeddings) out.embeddings.push_back(v.value());
  out.attention = attention;
  return out;
}

Var BoundParams::at(const std::string& name) const {
  auto it = vars.find(name);
  if (it == vars.end()) throw std::out_of_range("bound params: no tensor named " + name);
  return it->second;
}

BoundParams bind_params(Tape& tape, const ViTParams& params) {
  BoundParams bound{&params.config, {}};
  for (const auto& [name, t] : params.tensors) {
    bound.vars[name] = params.trainable.contains(name) ? tape.parameter(t) : tape.constant(t);
  }
  return bound;
}

BoundParams bind_constants(Tape& tape, const ViTParams& params) {
  BoundParams bound{&params.config, {}};
  for (const auto& [name, t] : params.tensors) bound.vars[name] = tape.constant(t);
  return bound;
}

BoundParams bind_params(Tape& tape, const ViTParams& params, std::span<const Var> trainable_vars) {
  const std::vector<std::string> names = params.trainable_names();
  if (names.size() != trainable_vars.size()) {
    throw std::invalid_argument("bind_params: expected " + std::to_string(names.size()) +
                                " trainable vars, got " + std::to_string(trainable_vars.size()));
  }
  BoundParams bound{&params.config, {}};
  for (const auto& [name, t] : params.tensors) {
    if (!params.trainable.contains(name)) bound.vars[name] = tape.constant(t);
  }
  for (size_t i = 0; i < names.size(); ++i) {
    if (!trainable_vars[i].value().same_shape(params.at(names[i]))) {
      throw std::invalid_argument("bind_params: shape mismatch for " + names[i]);
    }
    bound.vars[names[i]] = trainable_vars[i];
  }
  return bound;
}

Tensor patchify(const ViTConfig& config, const Tensor& image) {
  const size_t s = config.img_size, p = config.patch_size, ch = config.in_channels;
  if (image.dims() != std::vector<size_t>{s, s, ch}) {
    throw std::invalid_argument("patchify: expected input " + shape_string({s, s, ch}) + ", got " +
                                shape_string(image.dims()));
  }
  if (!image.all_finite()) throw std::invalid_argument("patchify: non-finite input");
  const size_t grid = config.grid();
  Tensor out({config.tokens(), config.patch_dim()});
  for (size_t gy = 0; gy < grid; ++gy) {
    for (size_t gx = 0; gx < grid; ++gx) {
      const size_t token = gy * grid + gx;
      size_t col = 0;
      for (size_t dy = 0; dy < p; ++dy)
        for (size_t dx = 0; dx < p; ++dx)
          for (size_t c = 0; c < ch; ++c)
            out(token, col++) = image[((gy * p + dy) * s + (gx * p + dx)) * ch + c];
    }
  }
  return out;
}

namespace {

Var affine(const BoundParams& p, const std::string& prefix, Var x) {
  Var y = ad::add_bias(ad::matmul(x, p.at(prefix + ".w")), p.at(prefix + ".b"));
  if (p.has(prefix + ".lora_a")) {
    Var low = ad::matmul(x, ad::transpose(p.at(prefix + ".lora_a")));
    y = ad::add(y, ad::matmul(low, ad::transpose(p.at(prefix + ".lora_b"))));
  }
  return y;
}

}  // namespace

Var embed_patches(const BoundParams& params, const Tensor& image) {
  const ViTConfig& config = *params.config;
  Tape& tape = *params.at("pos_embed").tape;
  Var patches = tape.constant(patchify(config, image));
  Var proj = ad::add_bias(ad::matmul(patches, params.at("patch_embed.w")), params.at("patch_embed.b"));
  return ad::add(proj, params.at("pos_embed"));
}

TapedCapture run_blocks(const BoundParams& params, Var tokens) {
  const ViTConfig& config = *params.config;
  const size_t k = config.tokens(), c = config.embed_dim, heads = config.num_heads;
  const size_t d = config.head_dim();
  if (tokens.value().dims() != std::vector<size_t>{k, c}) {
    throw std::invalid_argument("run_blocks: expected tokens " + shape_string({k, c}) + ", got " +
                                shape_string(tokens.value().dims()));
  }
  if (!tokens.value().all_finite()) throw std::invalid_argument("run_blocks: non-finite tokens");
  TapedCapture capture;
  capture.embeddings.push_back(tokens);
  Var x = tokens;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  for (size_t l = 1; l <= config.depth; ++l) {
    const std::string b = "block." + std::to_string(l) + ".";
    Var h = ad::layer_norm_rows(x, params.at(b + "norm1.gamma"), params.at(b + "norm1.beta"));
    Var qkv = affine(params, b + "attn.qkv", h);
    std::vector<Var> outs;
    Tensor mean_attn({k, k});
    for (size_t hd = 0; hd < heads; ++hd) {
      Var q = ad::slice_cols(qkv, hd * d, d);
      Var kk = ad::slice_cols(qkv, c + hd * d, d);
      Var v = ad::slice_cols(qkv, 2 * c + hd * d, d);
      Var attn = ad::softmax_rows(ad::scale(ad::matmul(q, ad::transpose(kk)), inv_sqrt_d));
      const Tensor& av = attn.value();
      for (size_t i = 0; i < av.size(); ++i) mean_attn[i] += av[i];
      outs.push_back(ad::matmul(attn, v));
    }
    capture.attention.push_back(scale(mean_attn, 1.0 / static_cast<double>(heads)));
    x = ad::add(x, affine(params, b + "attn.proj", ad::concat_cols(outs)));
    Var m = ad::layer_norm_rows(x, params.at(b + "norm2.gamma"), params.at(b + "norm2.beta"));
    m = affine(params, b + "mlp.fc2", ad::gelu(affine(params, b + "mlp.fc1", m)));
    x = ad::add(x, m);
    capture.embeddings.push_back(x);
  }
  return capture;
}

EmbeddingCapture forward_capture(const ViTParams& params, const Tensor& image) {
  Tape tape;
  BoundParams bound = bind_constants(tape, params);
  return run_blocks(bound, embed_patches(bound, image)).detach();
}

EmbeddingCapture forward_tokens(const ViTParams& params, const Tensor& tokens) {
  Tape tape;
  BoundParams bound = bind_constants(tape, params);
  return run_blocks(bound, tape.constant(tokens)).detach();
}

}  // namespace evdistill
