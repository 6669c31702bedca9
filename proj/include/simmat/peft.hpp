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
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "simmat/model.hpp"

namespace simmat {

struct PeftConfig {
  PeftStrategy strategy = PeftStrategy::kLora;
  int rank = 8;
  /// LoRA update is scaled by alpha / rank.
  double alpha = 16.0;
  int bottleneck = 16;
  double adapter_scale = 0.1;
  int tokens_per_block = 8;
  double target_fraction = 0.04;
  /// Prompt encoder and mask decoder stay trainable.
  bool train_decoder = true;
  bool train_mat = true;

  void validate() const;
};

void to_json(nlohmann::json& j, const PeftConfig& c);
void from_json(const nlohmann::json& j, PeftConfig& c);

struct PrefixCount {
  std::int64_t total = 0;
  std::int64_t trainable = 0;
};

/// JSON keys: strategy, added_param_count, trainable_param_count,
/// frozen_param_count, trainable_fraction, breakdown{prefix: {total, trainable}}.
struct InjectionReport {
  std::string strategy;
  std::int64_t added_param_count = 0;
  std::int64_t trainable_param_count = 0;
  std::int64_t frozen_param_count = 0;
  double trainable_fraction = 0.0;
  /// Keys: encoder, injected (subset of encoder), prompt, decoder, mat.
  std::map<std::string, PrefixCount> breakdown;
};

void to_json(nlohmann::json& j, const InjectionReport& r);

/// Adds the strategy's parameters and sets trainability. Throws StateError
/// when the model already carries an injection.
InjectionReport inject(Model& model, const PeftConfig& config);

/// Report for the model's current state.
InjectionReport injection_report(const Model& model);

double trainable_fraction(const Model& model);

/// Closed-form count of parameters a strategy adds for a knob value.
std::int64_t added_param_count(const ModelConfig& config, PeftStrategy strategy, int knob);

struct BalanceResult {
  /// rank, bottleneck or tokens per block; 0 for full finetuning.
  int knob = 0;
  double fraction = 1.0;
};

/// Knob whose trainable fraction is closest to `target`, ties toward the
/// smaller knob. Without `train_decoder` only the added parameters count as
/// trainable. Throws InfeasibleError when knob 1 overshoots by more than 50%.
BalanceResult balance_to_fraction(const ModelConfig& config, PeftStrategy strategy, double target,
                                  bool train_decoder = false);

/// Folds the low-rank update into the base q/v weights and drops the factors.
void merge_lora(Model& model);

}  // namespace simmat
