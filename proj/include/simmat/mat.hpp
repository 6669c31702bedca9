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

#include "simmat/checkpoint.hpp"
#include "simmat/model.hpp"

namespace simmat {

/// kIdentity feeds 3-channel RGB straight to the patch embedding (pretraining).
enum class MatVariant { kScratchPatchEmbed, kRandomInitEmbed, kLinearProjection, kConvStack, kTransposeToBatch, kIdentity };

std::string to_string(MatVariant v);
MatVariant mat_variant_from_string(const std::string& s);

/// Transfer layer in front of the pretrained encoder.
struct MatConfig {
  MatVariant variant = MatVariant::kConvStack;
  int channels = 9;
  int layers = 2;
  int kernel = 3;
  int hidden = 64;
  bool freeze_pretrained_embed = true;

  void validate() const;
  /// True when the inherited 3-channel patch embedding is consumed.
  bool uses_pretrained_embed() const;

  bool operator==(const MatConfig&) const = default;
};

void to_json(nlohmann::json& j, const MatConfig& c);
void from_json(const nlohmann::json& j, MatConfig& c);

/// Multiply-accumulate counts of one forward through the encoder path.
struct FlopsReport {
  std::int64_t mat_macs = 0;
  std::int64_t embed_macs = 0;
  std::int64_t encoder_macs = 0;
  double ratio_vs_conv_stack = 1.0;

  std::int64_t total() const { return mat_macs + embed_macs + encoder_macs; }
};

void to_json(nlohmann::json& j, const FlopsReport& r);

/// Parameters the layer adds under the mat. prefix, in registration order.
std::vector<ParamSpec> mat_param_specs(const MatConfig& config, const ModelConfig& model_config);

/// Registers the layer's parameters in `model` and applies the embedding
/// freeze rules. Run after any finetuning injection.
void build_mat(const MatConfig& config, Model& model, std::uint64_t seed);

/// Closed-form count for conv-stack and linear-projection.
std::int64_t mat_param_count(const MatConfig& config);

FlopsReport flops_report(const MatConfig& config, const ModelConfig& model_config, int resolution);

/// Token sets [(H/P)², D] fed to the encoder: one per channel for
/// transpose-to-batch, otherwise exactly one.
template <class T>
std::vector<BasicVar<T>> mat_forward(const BasicModel<T>& model, const MatConfig& config, const BasicVar<T>& x);

/// Encoder output [(H/P)², decoder_dim]; transpose-to-batch averages the
/// per-channel encodings.
template <class T>
BasicVar<T> simmat_encode(const BasicModel<T>& model, const MatConfig& config, const BasicVar<T>& x);

/// Mask logits for one click on a C-channel input.
template <class T>
BasicVar<T> simmat_forward(const BasicModel<T>& model, const MatConfig& config, const BasicVar<T>& x,
                           const PromptPoint& point);

/// Model checkpoint plus the layer config under metadata key "mat".
Checkpoint make_transfer_checkpoint(const Model& model, const MatConfig& config);
void save_transfer_checkpoint(const Model& model, const MatConfig& config, const std::filesystem::path& path);

/// Adds the checkpoint's mat. tensors to `model`, validating every shape.
MatConfig restore_mat(const Checkpoint& ckpt, Model& model);

}  // namespace simmat
