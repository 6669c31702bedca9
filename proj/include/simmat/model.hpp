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

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "simmat/autograd.hpp"
#include "simmat/optim.hpp"

namespace simmat {

/// Architecture of the promptable segmentation model.
struct ModelConfig {
  int image_size = 64;
  int patch_size = 8;
  int embed_dim = 64;
  int depth = 4;
  int heads = 4;
  double mlp_ratio = 4.0;
  int decoder_dim = 32;
  int decoder_depth = 2;
  int fourier_bands = 16;

  /// Throws ConfigError describing the first violated constraint.
  void validate() const;

  int grid() const { return image_size / patch_size; }
  int num_tokens() const { return grid() * grid(); }
  int mlp_dim() const { return static_cast<int>(embed_dim * mlp_ratio); }

  /// 64 px desk configuration used for training experiments.
  static ModelConfig desk();
  /// ViT-B-like encoder dimensions at 1024 px (counting only).
  static ModelConfig vit_b();

  bool operator==(const ModelConfig&) const = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// Click prompt in pixel coordinates of the model's input image.
struct PromptPoint {
  int row = 0;
  int col = 0;
  bool foreground = true;

  bool operator==(const PromptPoint&) const = default;
};

enum class PeftStrategy { kNone, kLora, kMlpAdapter, kPromptTuning, kFullFinetuning };

std::string to_string(PeftStrategy s);
PeftStrategy peft_strategy_from_string(const std::string& s);

/// Injection hooks consulted by the encoder forward pass.
struct PeftState {
  PeftStrategy strategy = PeftStrategy::kNone;
  int rank = 0;
  double lora_scale = 0.0;
  int bottleneck = 0;
  double adapter_scale = 0.0;
  int prompt_tokens = 0;
  bool merged = false;
};

void to_json(nlohmann::json& j, const PeftState& s);
void from_json(const nlohmann::json& j, PeftState& s);

enum class InitKind { kZeros, kOnes, kTruncNormal, kNormal, kKaimingUniform };

struct ParamSpec {
  std::string name;
  Shape shape;
  InitKind init = InitKind::kZeros;
  /// Standard deviation for normal kinds, fan-in for Kaiming.
  double init_arg = 0.0;
};

/// Every base-model parameter in registration order. Shape-only, so it is
/// usable for configurations too large to allocate.
std::vector<ParamSpec> model_param_specs(const ModelConfig& config);

/// Parameters added by a finetuning injection, in registration order.
std::vector<ParamSpec> injected_param_specs(const ModelConfig& config, const PeftState& state);

/// Deterministic tensor for a spec, seeded from (master seed, name).
Tensor init_param(const ParamSpec& spec, std::uint64_t master_seed);

template <class T>
class BasicModel {
 public:
  BasicModel(ModelConfig config, std::uint64_t seed, BasicParamStore<T> params)
      : config_(config), seed_(seed), params_(std::move(params)) {}

  const ModelConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }
  BasicParamStore<T>& params() { return params_; }
  const BasicParamStore<T>& params() const { return params_; }
  PeftState& peft() { return peft_; }
  const PeftState& peft() const { return peft_; }

  /// Strided P×P convolution (3→D) plus learned position embedding.
  BasicVar<T> patch_embed(const BasicVar<T>& image) const;
  /// Same geometry with caller-provided kernel [D,C,P,P] and bias [D].
  BasicVar<T> embed_with(const BasicVar<T>& image, const BasicVar<T>& weight,
                         const BasicVar<T>& bias) const;
  /// Transformer blocks then the linear neck: [N,D] → [N,decoder_dim].
  BasicVar<T> encode_image(const BasicVar<T>& tokens) const;
  /// Blocks only, without the neck; exposes per-block hooks for tests.
  BasicVar<T> encoder_block(const BasicVar<T>& tokens, int index) const;
  /// [1, decoder_dim] token for a click.
  BasicVar<T> encode_prompt(const PromptPoint& point) const;
  /// Mask logits [H,W].
  BasicVar<T> decode_mask(const BasicVar<T>& embedding, const BasicVar<T>& prompt_tokens) const;
  /// decode_mask(encode_image(patch_embed(image)), encode_prompt(point)).
  BasicVar<T> forward(const BasicVar<T>& image, const PromptPoint& point) const;

  /// Random Fourier features of normalized (x, y) coordinates, [rows, 2·bands].
  BasicTensor<T> fourier_features(const std::vector<std::pair<double, double>>& coords) const;

  template <class U>
  BasicModel<U> cast() const {
    BasicModel<U> out(config_, seed_, params_.template cast<U>());
    out.peft() = peft_;
    return out;
  }

 private:
  BasicVar<T> attention(const std::string& prefix, const BasicVar<T>& q, const BasicVar<T>& k,
                        const BasicVar<T>& v, int heads) const;
  BasicVar<T> lin(const std::string& prefix, const BasicVar<T>& x, bool bias = true) const;
  BasicVar<T> norm(const std::string& prefix, const BasicVar<T>& x) const;

  ModelConfig config_;
  std::uint64_t seed_;
  BasicParamStore<T> params_;
  PeftState peft_;
};

using Model = BasicModel<float>;

extern template class BasicModel<float>;
extern template class BasicModel<double>;

/// Allocates and initializes every parameter; all trainable.
Model build_model(const ModelConfig& config, std::uint64_t seed);

/// Scale applied to the Gaussian frequency matrix of the prompt encoder.
inline constexpr double kFourierScale = 2.0;

}  // namespace simmat
