// Copyright 2026 The SimMAT Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "simmat/mat.hpp"

#include <set>

#include "simmat/ops.hpp"

namespace simmat {

std::string to_string(MatVariant v) {
  switch (v) {
    case MatVariant::kScratchPatchEmbed: return "scratch-patch-embed";
    case MatVariant::kRandomInitEmbed: return "random-init-embed";
    case MatVariant::kLinearProjection: return "linear-projection";
    case MatVariant::kConvStack: return "conv-stack";
    case MatVariant::kTransposeToBatch: return "transpose-to-batch";
    case MatVariant::kIdentity: return "identity";
  }
  return "unknown";
}

MatVariant mat_variant_from_string(const std::string& s) {
  for (auto v : {MatVariant::kScratchPatchEmbed, MatVariant::kRandomInitEmbed, MatVariant::kLinearProjection,
                 MatVariant::kConvStack, MatVariant::kTransposeToBatch, MatVariant::kIdentity}) {
    if (to_string(v) == s) return v;
  }
  throw ConfigError("unknown transfer layer variant '" + s + "'");
}

void MatConfig::validate() const {
  if (channels < 1) throw ConfigError("transfer layer: channels must be >= 1, got " + std::to_string(channels));
  if (variant == MatVariant::kConvStack) {
    if (layers < 1) throw ConfigError("transfer layer: layers must be >= 1");
    if (kernel < 1 || kernel % 2 == 0) throw ConfigError("transfer layer: kernel must be odd and positive");
    if (hidden < 1) throw ConfigError("transfer layer: hidden width must be >= 1");
  }
  if (variant == MatVariant::kIdentity && channels != 3) {
    throw ConfigError("transfer layer: identity needs 3 channels, got " + std::to_string(channels));
  }
}

bool MatConfig::uses_pretrained_embed() const {
  return variant == MatVariant::kLinearProjection || variant == MatVariant::kConvStack ||
         variant == MatVariant::kTransposeToBatch || variant == MatVariant::kIdentity;
}

void to_json(nlohmann::json& j, const MatConfig& c) {
  j = {{"variant", to_string(c.variant)}, {"channels", c.channels}, {"layers", c.layers},
       {"kernel", c.kernel},               {"hidden", c.hidden},     {"freeze_pretrained_embed", c.freeze_pretrained_embed}};
}

void from_json(const nlohmann::json& j, MatConfig& c) {
  MatConfig d;
  c.variant = mat_variant_from_string(j.value("variant", to_string(d.variant)));
  c.channels = j.value("channels", d.channels);
  c.layers = j.value("layers", d.layers);
  c.kernel = j.value("kernel", d.kernel);
  c.hidden = j.value("hidden", d.hidden);
  c.freeze_pretrained_embed = j.value("freeze_pretrained_embed", d.freeze_pretrained_embed);
}

void to_json(nlohmann::json& j, const FlopsReport& r) {
  j = {{"mat_macs", r.mat_macs},
       {"embed_macs", r.embed_macs},
       {"encoder_macs", r.encoder_macs},
       {"total_macs", r.total()},
       {"ratio_vs_conv_stack", r.ratio_vs_conv_stack}};
}

namespace {

// Conv layers of the stack as (cin, cout, k).
struct ConvShape {
  std::int64_t cin, cout, k;
};

std::vector<ConvShape> conv_layers(const MatConfig& c) {
  if (c.variant == MatVariant::kLinearProjection) return {{c.channels, 3, 1}};
  if (c.variant != MatVariant::kConvStack) return {};
  if (c.layers == 1) return {{c.channels, 3, 1}};
  std::vector<ConvShape> out{{c.channels, c.hidden, c.kernel}};
  for (int i = 1; i + 1 < c.layers; ++i) out.push_back({c.hidden, c.hidden, c.kernel});
  out.push_back({c.hidden, 3, 1});
  return out;
}

bool own_embed(const MatConfig& c) {
  return c.variant == MatVariant::kScratchPatchEmbed || c.variant == MatVariant::kRandomInitEmbed;
}

}  // namespace

std::vector<ParamSpec> mat_param_specs(const MatConfig& config, const ModelConfig& mc) {
  config.validate();
  std::vector<ParamSpec> s;
  if (own_embed(config)) {
    const std::int64_t p = mc.patch_size;
    s.push_back({"mat.patch_embed.weight", {mc.embed_dim, config.channels, p, p}, InitKind::kKaimingUniform,
                 static_cast<double>(config.channels * p * p)});
    s.push_back({"mat.patch_embed.bias", {mc.embed_dim}, InitKind::kZeros, 0.0});
  }
  const auto layers = conv_layers(config);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const std::string name = "mat.convs." + std::to_string(i);
    s.push_back({name + ".weight", {l.cout, l.cin, l.k, l.k}, InitKind::kKaimingUniform,
                 static_cast<double>(l.cin * l.k * l.k)});
    s.push_back({name + ".bias", {l.cout}, InitKind::kZeros, 0.0});
  }
  return s;
}

void build_mat(const MatConfig& config, Model& model, std::uint64_t seed) {
  config.validate();
  auto& store = model.params();
  for (const auto& p : store.items()) {
    if (p.name.starts_with("mat.")) throw StateError("transfer layer already built into this model");
  }
  if (config.uses_pretrained_embed() && !store.contains("encoder.patch_embed.weight")) {
    throw ConfigError("transfer layer '" + to_string(config.variant) + "' needs the pretrained patch embedding");
  }
  for (const auto& spec : mat_param_specs(config, model.config())) store.add(spec.name, init_param(spec, seed), true);
  // Full finetuning trains whatever the forward pass uses; an unused embed stays frozen.
  const bool full = model.peft().strategy == PeftStrategy::kFullFinetuning;
  if (!config.uses_pretrained_embed() || (config.freeze_pretrained_embed && !full)) {
    store.set_trainable_prefix("encoder.patch_embed.", false);
  }
}

std::int64_t mat_param_count(const MatConfig& config) {
  config.validate();
  if (config.variant != MatVariant::kConvStack && config.variant != MatVariant::kLinearProjection) {
    throw ConfigError("closed-form count covers conv-stack and linear-projection only; got '" +
                      to_string(config.variant) + "'");
  }
  const std::int64_t c = config.channels;
  if (config.variant == MatVariant::kLinearProjection || config.layers == 1) return 3 * c + 3;
  const std::int64_t d = config.hidden, k2 = static_cast<std::int64_t>(config.kernel) * config.kernel;
  return (c * d * k2 + d) + (config.layers - 2) * (d * d * k2 + d) + (3 * d + 3);
}

namespace {

FlopsReport raw_flops(const MatConfig& config, const ModelConfig& mc, int resolution) {
  const std::int64_t hw = static_cast<std::int64_t>(resolution) * resolution;
  const std::int64_t n = hw / (static_cast<std::int64_t>(mc.patch_size) * mc.patch_size);
  const std::int64_t d = mc.embed_dim, p2 = static_cast<std::int64_t>(mc.patch_size) * mc.patch_size;
  const std::int64_t per_block = 4 * n * d * d + 2 * n * n * d + 2 * n * d * mc.mlp_dim();
  const std::int64_t encoder = mc.depth * per_block + n * d * mc.decoder_dim;

  FlopsReport r;
  for (const auto& l : conv_layers(config)) r.mat_macs += l.cin * l.cout * l.k * l.k * hw;
  switch (config.variant) {
    case MatVariant::kScratchPatchEmbed:
    case MatVariant::kRandomInitEmbed:
      r.embed_macs = n * d * config.channels * p2;
      r.encoder_macs = encoder;
      break;
    case MatVariant::kLinearProjection:
    case MatVariant::kConvStack:
    case MatVariant::kIdentity:
      r.embed_macs = n * d * 3 * p2;
      r.encoder_macs = encoder;
      break;
    case MatVariant::kTransposeToBatch:
      r.embed_macs = config.channels * n * d * 3 * p2;
      r.encoder_macs = config.channels * encoder;
      break;
  }
  return r;
}

}  // namespace

FlopsReport flops_report(const MatConfig& config, const ModelConfig& mc, int resolution) {
  config.validate();
  mc.validate();
  if (resolution <= 0 || resolution % mc.patch_size != 0) {
    throw ConfigError("flops: resolution " + std::to_string(resolution) + " not divisible by patch size");
  }
  auto r = raw_flops(config, mc, resolution);
  MatConfig reference = config;
  reference.variant = MatVariant::kConvStack;
  const auto base = raw_flops(reference, mc, resolution);
  r.ratio_vs_conv_stack = static_cast<double>(r.total()) / static_cast<double>(base.total());
  return r;
}

template <class T>
std::vector<BasicVar<T>> mat_forward(const BasicModel<T>& model, const MatConfig& config, const BasicVar<T>& x) {
  if (x.shape().size() != 3) throw DimensionError("transfer layer expects [C,H,W], got " + shape_str(x.shape()));
  if (x.dim(0) != config.channels) {
    throw DimensionError("transfer layer: axis 0 (channels) is " + std::to_string(x.dim(0)) + ", config expects " +
                         std::to_string(config.channels));
  }
  const auto& store = model.params();
  switch (config.variant) {
    case MatVariant::kScratchPatchEmbed:
    case MatVariant::kRandomInitEmbed:
      return {model.embed_with(x, store.get("mat.patch_embed.weight"), store.get("mat.patch_embed.bias"))};
    case MatVariant::kLinearProjection:
    case MatVariant::kConvStack: {
      const auto layers = conv_layers(config);
      BasicVar<T> h = x;
      for (std::size_t i = 0; i < layers.size(); ++i) {
        const std::string name = "mat.convs." + std::to_string(i);
        h = ops::conv2d(h, store.get(name + ".weight"), store.get(name + ".bias"), 1,
                        static_cast<int>(layers[i].k / 2));
        if (i + 1 < layers.size()) h = ops::relu(h);
      }
      return {model.patch_embed(h)};
    }
    case MatVariant::kIdentity:
      return {model.patch_embed(x)};
    case MatVariant::kTransposeToBatch: {
      std::vector<BasicVar<T>> out;
      out.reserve(static_cast<std::size_t>(config.channels));
      for (int c = 0; c < config.channels; ++c) out.push_back(model.patch_embed(ops::repeat_channel(x, c, 3)));
      return out;
    }
  }
  throw ConfigError("unknown transfer layer variant");
}

template <class T>
BasicVar<T> simmat_encode(const BasicModel<T>& model, const MatConfig& config, const BasicVar<T>& x) {
  auto tokens = mat_forward(model, config, x);
  if (tokens.size() == 1) return model.encode_image(tokens.front());
  std::vector<BasicVar<T>> encoded;
  encoded.reserve(tokens.size());
  for (const auto& t : tokens) encoded.push_back(model.encode_image(t));
  return ops::mean_of(encoded);
}

template <class T>
BasicVar<T> simmat_forward(const BasicModel<T>& model, const MatConfig& config, const BasicVar<T>& x,
                           const PromptPoint& point) {
  return model.decode_mask(simmat_encode(model, config, x), model.encode_prompt(point));
}

#define SIMMAT_INSTANTIATE_MAT(T)                                                                          \
  template std::vector<BasicVar<T>> mat_forward(const BasicModel<T>&, const MatConfig&, const BasicVar<T>&); \
  template BasicVar<T> simmat_encode(const BasicModel<T>&, const MatConfig&, const BasicVar<T>&);           \
  template BasicVar<T> simmat_forward(const BasicModel<T>&, const MatConfig&, const BasicVar<T>&,           \
                                      const PromptPoint&);
SIMMAT_INSTANTIATE_MAT(float)
SIMMAT_INSTANTIATE_MAT(double)
#undef SIMMAT_INSTANTIATE_MAT

Checkpoint make_transfer_checkpoint(const Model& model, const MatConfig& config) {
  auto ckpt = make_checkpoint(model);
  ckpt.metadata["mat"] = nlohmann::json(config).dump();
  return ckpt;
}

void save_transfer_checkpoint(const Model& model, const MatConfig& config, const std::filesystem::path& path) {
  write_checkpoint(make_transfer_checkpoint(model, config), path);
}

MatConfig restore_mat(const Checkpoint& ckpt, Model& model) {
  auto it = ckpt.metadata.find("mat");
  if (it == ckpt.metadata.end()) throw FormatError("checkpoint carries no transfer layer");
  MatConfig config;
  try {
    config = nlohmann::json::parse(it->second).get<MatConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("transfer layer metadata corrupt: ") + e.what());
  }
  std::set<std::string> known;
  for (const auto& spec : mat_param_specs(config, model.config())) {
    const auto* entry = ckpt.find(spec.name);
    if (!entry) throw FormatError("tensor '" + spec.name + "' missing from checkpoint");
    if (entry->tensor.shape() != spec.shape) {
      throw FormatError("tensor '" + spec.name + "' has shape " + shape_str(entry->tensor.shape()) +
                        ", config expects " + shape_str(spec.shape));
    }
    model.params().add(spec.name, entry->tensor, entry->trainable);
    known.insert(spec.name);
  }
  for (const auto& e : ckpt.tensors) {
    if (e.name.starts_with("mat.") && !known.count(e.name)) {
      throw FormatError("unexpected tensor '" + e.name + "' in checkpoint");
    }
  }
  return config;
}

}  // namespace simmat
