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

#include "simmat/model.hpp"

#include <cmath>
#include <numbers>

#include "simmat/ops.hpp"
#include "simmat/rng.hpp"

namespace simmat {

void ModelConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) throw ConfigError(std::string("model config: ") + name + " must be positive");
  };
  positive(image_size, "image_size");
  positive(patch_size, "patch_size");
  positive(embed_dim, "embed_dim");
  positive(depth, "depth");
  positive(heads, "heads");
  positive(decoder_dim, "decoder_dim");
  positive(decoder_depth, "decoder_depth");
  positive(fourier_bands, "fourier_bands");
  if (!(mlp_ratio > 0.0) || mlp_dim() <= 0) throw ConfigError("model config: mlp_ratio must be positive");
  if (image_size % patch_size != 0) throw ConfigError("model config: image_size not divisible by patch_size");
  if (embed_dim % heads != 0) throw ConfigError("model config: embed_dim not divisible by heads");
  if (patch_size < 2 || patch_size % 2 != 0) throw ConfigError("model config: patch_size must be even (two-stage upsampling)");
  if (decoder_dim % 4 != 0) throw ConfigError("model config: decoder_dim must be divisible by 4");
}

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::vit_b() {
  ModelConfig c;
  c.image_size = 1024;
  c.patch_size = 16;
  c.embed_dim = 768;
  c.depth = 12;
  c.heads = 12;
  c.mlp_ratio = 4.0;
  c.decoder_dim = 256;
  c.decoder_depth = 2;
  c.fourier_bands = 128;
  return c;
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"image_size", c.image_size},       {"patch_size", c.patch_size},
       {"embed_dim", c.embed_dim},         {"depth", c.depth},
       {"heads", c.heads},                 {"mlp_ratio", c.mlp_ratio},
       {"decoder_dim", c.decoder_dim},     {"decoder_depth", c.decoder_depth},
       {"fourier_bands", c.fourier_bands}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.image_size = j.value("image_size", d.image_size);
  c.patch_size = j.value("patch_size", d.patch_size);
  c.embed_dim = j.value("embed_dim", d.embed_dim);
  c.depth = j.value("depth", d.depth);
  c.heads = j.value("heads", d.heads);
  c.mlp_ratio = j.value("mlp_ratio", d.mlp_ratio);
  c.decoder_dim = j.value("decoder_dim", d.decoder_dim);
  c.decoder_depth = j.value("decoder_depth", d.decoder_depth);
  c.fourier_bands = j.value("fourier_bands", d.fourier_bands);
}

std::string to_string(PeftStrategy s) {
  switch (s) {
    case PeftStrategy::kNone: return "none";
    case PeftStrategy::kLora: return "lora";
    case PeftStrategy::kMlpAdapter: return "mlp-adapter";
    case PeftStrategy::kPromptTuning: return "prompt-tuning";
    case PeftStrategy::kFullFinetuning: return "full-finetuning";
  }
  return "none";
}

PeftStrategy peft_strategy_from_string(const std::string& s) {
  if (s == "none") return PeftStrategy::kNone;
  if (s == "lora") return PeftStrategy::kLora;
  if (s == "mlp-adapter" || s == "adapter") return PeftStrategy::kMlpAdapter;
  if (s == "prompt-tuning") return PeftStrategy::kPromptTuning;
  if (s == "full-finetuning" || s == "full") return PeftStrategy::kFullFinetuning;
  throw ConfigError("unknown finetuning strategy '" + s + "'");
}

void to_json(nlohmann::json& j, const PeftState& s) {
  j = {{"strategy", to_string(s.strategy)}, {"rank", s.rank},
       {"lora_scale", s.lora_scale},        {"bottleneck", s.bottleneck},
       {"adapter_scale", s.adapter_scale},  {"prompt_tokens", s.prompt_tokens},
       {"merged", s.merged}};
}

void from_json(const nlohmann::json& j, PeftState& s) {
  s.strategy = peft_strategy_from_string(j.value("strategy", std::string("none")));
  s.rank = j.value("rank", 0);
  s.lora_scale = j.value("lora_scale", 0.0);
  s.bottleneck = j.value("bottleneck", 0);
  s.adapter_scale = j.value("adapter_scale", 0.0);
  s.prompt_tokens = j.value("prompt_tokens", 0);
  s.merged = j.value("merged", false);
}

namespace {

constexpr double kLinearStd = 0.02;

void add_linear(std::vector<ParamSpec>& out, const std::string& prefix, std::int64_t out_dim,
                std::int64_t in_dim, bool bias = true) {
  out.push_back({prefix + ".weight", {out_dim, in_dim}, InitKind::kTruncNormal, kLinearStd});
  if (bias) out.push_back({prefix + ".bias", {out_dim}, InitKind::kZeros, 0.0});
}

void add_norm(std::vector<ParamSpec>& out, const std::string& prefix, std::int64_t dim) {
  out.push_back({prefix + ".weight", {dim}, InitKind::kOnes, 0.0});
  out.push_back({prefix + ".bias", {dim}, InitKind::kZeros, 0.0});
}

void add_attention(std::vector<ParamSpec>& out, const std::string& prefix, std::int64_t dim) {
  for (const char* p : {"q", "k", "v", "proj"}) add_linear(out, prefix + "." + p, dim, dim);
}

int upsample_first_stride(const ModelConfig& c) { return c.patch_size / 2; }

}  // namespace

std::vector<ParamSpec> model_param_specs(const ModelConfig& c) {
  c.validate();
  const std::int64_t d = c.embed_dim, p = c.patch_size, dd = c.decoder_dim;
  std::vector<ParamSpec> s;
  s.push_back({"encoder.patch_embed.weight", {d, 3, p, p}, InitKind::kKaimingUniform, static_cast<double>(3 * p * p)});
  s.push_back({"encoder.patch_embed.bias", {d}, InitKind::kZeros, 0.0});
  s.push_back({"encoder.pos_embed", {c.num_tokens(), d}, InitKind::kTruncNormal, kLinearStd});
  for (int i = 0; i < c.depth; ++i) {
    const std::string b = "encoder.blocks." + std::to_string(i);
    add_norm(s, b + ".norm1", d);
    add_attention(s, b + ".attn", d);
    add_norm(s, b + ".norm2", d);
    add_linear(s, b + ".mlp.fc1", c.mlp_dim(), d);
    add_linear(s, b + ".mlp.fc2", d, c.mlp_dim());
  }
  add_linear(s, "encoder.neck", dd, d);

  s.push_back({"prompt.label_embed", {2, dd}, InitKind::kTruncNormal, kLinearStd});
  add_linear(s, "prompt.proj", dd, 2 * c.fourier_bands + dd);

  add_linear(s, "decoder.image_pe", dd, 2 * c.fourier_bands, false);
  s.push_back({"decoder.mask_token", {1, dd}, InitKind::kTruncNormal, kLinearStd});
  for (int j = 0; j < c.decoder_depth; ++j) {
    const std::string l = "decoder.layers." + std::to_string(j);
    add_attention(s, l + ".self_attn", dd);
    add_norm(s, l + ".norm1", dd);
    add_attention(s, l + ".cross_t2i", dd);
    add_norm(s, l + ".norm2", dd);
    add_linear(s, l + ".mlp.fc1", 2 * dd, dd);
    add_linear(s, l + ".mlp.fc2", dd, 2 * dd);
    add_norm(s, l + ".norm3", dd);
    add_attention(s, l + ".cross_i2t", dd);
    add_norm(s, l + ".norm4", dd);
  }
  add_attention(s, "decoder.final_attn", dd);
  add_norm(s, "decoder.final_norm", dd);
  const std::int64_t s1 = upsample_first_stride(c);
  s.push_back({"decoder.upscale1.weight", {dd, dd / 2, s1, s1}, InitKind::kKaimingUniform, static_cast<double>(dd)});
  s.push_back({"decoder.upscale1.bias", {dd / 2}, InitKind::kZeros, 0.0});
  s.push_back({"decoder.upscale2.weight", {dd / 2, dd / 4, 2, 2}, InitKind::kKaimingUniform, static_cast<double>(dd / 2)});
  s.push_back({"decoder.upscale2.bias", {dd / 4}, InitKind::kZeros, 0.0});
  add_linear(s, "decoder.hyper.fc1", dd, dd);
  add_linear(s, "decoder.hyper.fc2", dd / 4, dd);
  return s;
}

std::vector<ParamSpec> injected_param_specs(const ModelConfig& c, const PeftState& st) {
  std::vector<ParamSpec> s;
  const std::int64_t d = c.embed_dim;
  const double fan_in_std = 1.0 / std::sqrt(static_cast<double>(d));
  for (int i = 0; i < c.depth; ++i) {
    const std::string b = "encoder.blocks." + std::to_string(i);
    switch (st.strategy) {
      case PeftStrategy::kLora:
        if (st.merged) break;
        for (const char* t : {"q", "v"}) {
          s.push_back({b + ".attn." + t + ".lora_a", {st.rank, d}, InitKind::kNormal, fan_in_std});
          s.push_back({b + ".attn." + t + ".lora_b", {d, st.rank}, InitKind::kZeros, 0.0});
        }
        break;
      case PeftStrategy::kMlpAdapter:
        s.push_back({b + ".adapter.down.weight", {st.bottleneck, d}, InitKind::kNormal, fan_in_std});
        s.push_back({b + ".adapter.down.bias", {st.bottleneck}, InitKind::kZeros, 0.0});
        s.push_back({b + ".adapter.up.weight", {d, st.bottleneck}, InitKind::kZeros, 0.0});
        s.push_back({b + ".adapter.up.bias", {d}, InitKind::kZeros, 0.0});
        break;
      case PeftStrategy::kPromptTuning:
        s.push_back({b + ".prompt_tokens", {st.prompt_tokens, d}, InitKind::kTruncNormal, kLinearStd});
        break;
      case PeftStrategy::kNone:
      case PeftStrategy::kFullFinetuning:
        break;
    }
  }
  return s;
}

Tensor init_param(const ParamSpec& spec, std::uint64_t master_seed) {
  Tensor t(spec.shape);
  auto& v = t.storage();
  switch (spec.init) {
    case InitKind::kZeros:
      break;
    case InitKind::kOnes:
      std::fill(v.begin(), v.end(), 1.0f);
      break;
    case InitKind::kTruncNormal: {
      Rng rng(derive_seed(master_seed, spec.name));
      for (auto& x : v) x = static_cast<float>(rng.truncated_normal(spec.init_arg));
      break;
    }
    case InitKind::kNormal: {
      Rng rng(derive_seed(master_seed, spec.name));
      for (auto& x : v) x = static_cast<float>(rng.normal(0.0, spec.init_arg));
      break;
    }
    case InitKind::kKaimingUniform: {
      Rng rng(derive_seed(master_seed, spec.name));
      const double bound = std::sqrt(6.0 / spec.init_arg);
      for (auto& x : v) x = static_cast<float>(rng.uniform(-bound, bound));
      break;
    }
  }
  return t;
}

Model build_model(const ModelConfig& config, std::uint64_t seed) {
  ParamStore store;
  for (const auto& spec : model_param_specs(config)) store.add(spec.name, init_param(spec, seed), true);
  return Model(config, seed, std::move(store));
}

// ---------------------------------------------------------------------------
// Forward pass

template <class T>
BasicVar<T> BasicModel<T>::lin(const std::string& prefix, const BasicVar<T>& x, bool bias) const {
  return ops::linear(x, params_.get(prefix + ".weight"), bias ? params_.get(prefix + ".bias") : BasicVar<T>());
}

template <class T>
BasicVar<T> BasicModel<T>::norm(const std::string& prefix, const BasicVar<T>& x) const {
  return ops::layer_norm_rows(x, params_.get(prefix + ".weight"), params_.get(prefix + ".bias"));
}

template <class T>
BasicVar<T> BasicModel<T>::attention(const std::string& prefix, const BasicVar<T>& q,
                                     const BasicVar<T>& k, const BasicVar<T>& v, int heads) const {
  auto out = ops::multihead_attention(lin(prefix + ".q", q), lin(prefix + ".k", k), lin(prefix + ".v", v), heads);
  return lin(prefix + ".proj", out);
}

template <class T>
BasicVar<T> BasicModel<T>::embed_with(const BasicVar<T>& image, const BasicVar<T>& weight,
                                      const BasicVar<T>& bias) const {
  if (image.shape().size() != 3) throw DimensionError("patch embedding expects [C,H,W], got " + shape_str(image.shape()));
  if (image.dim(1) != config_.image_size || image.dim(2) != config_.image_size) {
    throw DimensionError("patch embedding: image is " + std::to_string(image.dim(1)) + "x" +
                         std::to_string(image.dim(2)) + ", model expects " + std::to_string(config_.image_size));
  }
  if (weight.dim(1) != image.dim(0)) {
    throw DimensionError("patch embedding: axis 0 (channels) is " + std::to_string(image.dim(0)) +
                         ", kernel expects " + std::to_string(weight.dim(1)));
  }
  auto tokens = ops::linear(ops::patchify(image, config_.patch_size), weight, bias);
  return ops::add(tokens, params_.get("encoder.pos_embed"));
}

template <class T>
BasicVar<T> BasicModel<T>::patch_embed(const BasicVar<T>& image) const {
  if (image.shape().size() == 3 && image.dim(0) != 3) {
    throw DimensionError("patch embedding: axis 0 (channels) is " + std::to_string(image.dim(0)) +
                         ", expected 3; map other modalities through a transfer layer first");
  }
  return embed_with(image, params_.get("encoder.patch_embed.weight"), params_.get("encoder.patch_embed.bias"));
}

template <class T>
BasicVar<T> BasicModel<T>::encoder_block(const BasicVar<T>& tokens, int index) const {
  const std::string b = "encoder.blocks." + std::to_string(index);
  BasicVar<T> x = tokens;
  const bool prompts = peft_.strategy == PeftStrategy::kPromptTuning && peft_.prompt_tokens > 0;
  if (prompts) x = ops::concat_rows(std::vector<BasicVar<T>>{params_.get(b + ".prompt_tokens"), x});

  const auto h = norm(b + ".norm1", x);
  auto q = lin(b + ".attn.q", h);
  auto k = lin(b + ".attn.k", h);
  auto v = lin(b + ".attn.v", h);
  if (peft_.strategy == PeftStrategy::kLora && !peft_.merged) {
    const T s = static_cast<T>(peft_.lora_scale);
    auto delta = [&](const std::string& target) {
      auto low = ops::linear(h, params_.get(target + ".lora_a"), BasicVar<T>());
      return ops::scale(ops::linear(low, params_.get(target + ".lora_b"), BasicVar<T>()), s);
    };
    q = ops::add(q, delta(b + ".attn.q"));
    v = ops::add(v, delta(b + ".attn.v"));
  }
  auto attn = lin(b + ".attn.proj", ops::multihead_attention(q, k, v, config_.heads));
  x = ops::add(x, attn);

  auto mlp = lin(b + ".mlp.fc2", ops::gelu(lin(b + ".mlp.fc1", norm(b + ".norm2", x))));
  if (peft_.strategy == PeftStrategy::kMlpAdapter) {
    auto branch = lin(b + ".adapter.up", ops::relu(lin(b + ".adapter.down", x)));
    mlp = ops::add(mlp, ops::scale(branch, static_cast<T>(peft_.adapter_scale)));
  }
  x = ops::add(x, mlp);

  if (prompts) x = ops::slice_rows(x, peft_.prompt_tokens, x.dim(0));
  return x;
}

template <class T>
BasicVar<T> BasicModel<T>::encode_image(const BasicVar<T>& tokens) const {
  if (tokens.shape().size() != 2 || tokens.dim(1) != config_.embed_dim) {
    throw DimensionError("encode_image: expected [N," + std::to_string(config_.embed_dim) + "], got " +
                         shape_str(tokens.shape()));
  }
  BasicVar<T> x = tokens;
  for (int i = 0; i < config_.depth; ++i) x = encoder_block(x, i);
  return lin("encoder.neck", x);
}

template <class T>
BasicTensor<T> BasicModel<T>::fourier_features(const std::vector<std::pair<double, double>>& coords) const {
  const int bands = config_.fourier_bands;
  // Fixed Gaussian frequency matrix [2, bands], seeded from the model seed.
  Rng rng(derive_seed(seed_, "prompt.fourier_frequencies"));
  std::vector<double> freq(static_cast<std::size_t>(2 * bands));
  for (auto& f : freq) f = rng.normal() * kFourierScale;
  BasicTensor<T> out({static_cast<std::int64_t>(coords.size()), 2 * bands});
  for (std::size_t r = 0; r < coords.size(); ++r) {
    for (int b = 0; b < bands; ++b) {
      const double phase = 2.0 * std::numbers::pi *
                           (coords[r].first * freq[static_cast<std::size_t>(b)] +
                            coords[r].second * freq[static_cast<std::size_t>(bands + b)]);
      out.at(static_cast<std::int64_t>(r), b) = static_cast<T>(std::sin(phase));
      out.at(static_cast<std::int64_t>(r), bands + b) = static_cast<T>(std::cos(phase));
    }
  }
  return out;
}

template <class T>
BasicVar<T> BasicModel<T>::encode_prompt(const PromptPoint& point) const {
  const int n = config_.image_size;
  if (point.row < 0 || point.row >= n || point.col < 0 || point.col >= n) {
    throw InputError("prompt point (" + std::to_string(point.row) + "," + std::to_string(point.col) +
                     ") outside " + std::to_string(n) + "x" + std::to_string(n) + " image");
  }
  const double x = (point.col + 0.5) / n;
  const double y = (point.row + 0.5) / n;
  BasicVar<T> pe(fourier_features({{x, y}}));
  const int label = point.foreground ? 1 : 0;
  auto label_row = ops::slice_rows(params_.get("prompt.label_embed"), label, label + 1);
  return lin("prompt.proj", ops::concat_cols(std::vector<BasicVar<T>>{pe, label_row}));
}

template <class T>
BasicVar<T> BasicModel<T>::decode_mask(const BasicVar<T>& embedding, const BasicVar<T>& prompt_tokens) const {
  const int dd = config_.decoder_dim, g = config_.grid();
  if (embedding.shape() != Shape{config_.num_tokens(), dd}) {
    throw DimensionError("decode_mask: embedding " + shape_str(embedding.shape()) + ", expected " +
                         shape_str({config_.num_tokens(), dd}));
  }
  if (prompt_tokens.shape().size() != 2 || prompt_tokens.dim(1) != dd) {
    throw DimensionError("decode_mask: prompt tokens " + shape_str(prompt_tokens.shape()) + " do not match decoder_dim");
  }
  std::vector<std::pair<double, double>> centers;
  centers.reserve(static_cast<std::size_t>(g * g));
  for (int gy = 0; gy < g; ++gy)
    for (int gx = 0; gx < g; ++gx) centers.emplace_back((gx + 0.5) / g, (gy + 0.5) / g);
  const auto key_pe = lin("decoder.image_pe", BasicVar<T>(fourier_features(centers)), false);

  const auto query_pe = ops::concat_rows(std::vector<BasicVar<T>>{params_.get("decoder.mask_token"), prompt_tokens});
  BasicVar<T> queries = query_pe;
  BasicVar<T> keys = embedding;
  for (int j = 0; j < config_.decoder_depth; ++j) {
    const std::string l = "decoder.layers." + std::to_string(j);
    auto qp = ops::add(queries, query_pe);
    queries = norm(l + ".norm1", ops::add(queries, attention(l + ".self_attn", qp, qp, queries, 1)));
    qp = ops::add(queries, query_pe);
    auto kp = ops::add(keys, key_pe);
    queries = norm(l + ".norm2", ops::add(queries, attention(l + ".cross_t2i", qp, kp, keys, 1)));
    auto mlp = lin(l + ".mlp.fc2", ops::relu(lin(l + ".mlp.fc1", queries)));
    queries = norm(l + ".norm3", ops::add(queries, mlp));
    qp = ops::add(queries, query_pe);
    kp = ops::add(keys, key_pe);
    keys = norm(l + ".norm4", ops::add(keys, attention(l + ".cross_i2t", kp, qp, queries, 1)));
  }
  {
    auto qp = ops::add(queries, query_pe);
    auto kp = ops::add(keys, key_pe);
    queries = norm("decoder.final_norm", ops::add(queries, attention("decoder.final_attn", qp, kp, keys, 1)));
  }

  auto grid = ops::reshape(ops::transpose(keys), {dd, g, g});
  auto up = ops::gelu(ops::conv_transpose2d(grid, params_.get("decoder.upscale1.weight"),
                                            params_.get("decoder.upscale1.bias"), upsample_first_stride(config_)));
  up = ops::conv_transpose2d(up, params_.get("decoder.upscale2.weight"), params_.get("decoder.upscale2.bias"), 2);
  const std::int64_t h = up.dim(1), w = up.dim(2);

  auto mask_token = ops::slice_rows(queries, 0, 1);
  auto hyper = lin("decoder.hyper.fc2", ops::relu(lin("decoder.hyper.fc1", mask_token)));
  auto logits = ops::matmul(hyper, ops::reshape(up, {dd / 4, h * w}));
  return ops::reshape(logits, {h, w});
}

template <class T>
BasicVar<T> BasicModel<T>::forward(const BasicVar<T>& image, const PromptPoint& point) const {
  return decode_mask(encode_image(patch_embed(image)), encode_prompt(point));
}

template class BasicModel<float>;
template class BasicModel<double>;

}  // namespace simmat
