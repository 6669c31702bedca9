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
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "simmat/bench.hpp"
#include "simmat/checkpoint.hpp"
#include "simmat/mat.hpp"
#include "simmat/optim.hpp"

namespace simmat {

inline constexpr double kLogitCap = 20.0;

struct LossWeights {
  double focal = 20.0 / 21.0;
  double dice = 1.0 / 21.0;
};

/// weights.focal · focal(γ=2, α=0.25, mean over pixels) + weights.dice ·
/// (1 − soft dice, smooth 1). Logits are clamped to ±kLogitCap. Throws
/// NumericError on non-finite logits.
template <class T>
BasicVar<T> focal_dice_loss(const BasicVar<T>& logits, const BinaryMask& target, LossWeights weights = {});

/// Focal term alone, for closed-form checks.
double focal_term(const Tensor& logits, const BinaryMask& target);

/// |pred ∩ gt| / |pred ∪ gt|; 1 when both are empty.
double iou(const BinaryMask& pred, const BinaryMask& gt);
/// Foreground where logit > 0.
BinaryMask binarize(const Tensor& logits);

struct TrainConfig {
  double base_lr = 3e-4;
  std::vector<double> lr_grid = {3e-6, 1e-5, 3e-5, 1e-4, 3e-4, 1e-3, 3e-3};
  int batch_size = 4;
  int epochs = 50;
  int step_size_epochs = 10;
  double gamma = 0.5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  int resize = 1024;
  std::uint64_t seed = 0;
  LossWeights loss;
  int eval_every = 1;
  /// First epoch index; resumed runs continue the numbering.
  int start_epoch = 0;

  void validate() const;
  Schedule schedule() const { return {base_lr, step_size_epochs, gamma}; }
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// JSON keys: miou, instance_count, ious[], metadata{config_hash, seed, wall_ms}.
struct Metrics {
  std::vector<double> ious;
  double miou = 0.0;
  std::int64_t instance_count = 0;
  std::string config_hash;
  std::uint64_t seed = 0;
  double wall_ms = 0.0;
};

void to_json(nlohmann::json& j, const Metrics& m);

/// Mean of the values, 0 for an empty list.
double mean_iou(const std::vector<double>& ious);

/// Predicted logits for every instance of a sample with one encoder pass.
std::vector<Tensor> predict_instances(const Model& model, const MatConfig& mat, const InstanceSample& sample);

/// Scores every instance at its stored click. Throws ConfigError on a
/// channel mismatch before any inference.
Metrics evaluate(const Model& model, const MatConfig& mat, const std::vector<InstanceSample>& samples);

/// One JSON line per epoch: epoch, lr, train_loss, val_miou (when
/// evaluated), wall_ms.
struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  std::optional<double> val_miou;
  double wall_ms = 0.0;
};

void to_json(nlohmann::json& j, const EpochRecord& r);

struct TrainResult {
  std::vector<EpochRecord> history;
  Checkpoint final_checkpoint;
  Checkpoint best_checkpoint;
  double best_val_miou = -1.0;
};

struct TrainIo {
  /// When set: history.jsonl, final.ckpt and best.ckpt are written here.
  std::optional<std::filesystem::path> out_dir;
  std::function<void(const EpochRecord&)> on_epoch;
};

/// Adam on the focal/dice loss with step decay. Any finetuning injection and
/// transfer layer must already be in `model`. Throws NumericError naming
/// the step when the loss turns non-finite.
TrainResult train(Model& model, const MatConfig& mat, const std::vector<InstanceSample>& train_set,
                  const std::vector<InstanceSample>& val_set, const TrainConfig& config, const TrainIo& io = {});

struct SweepRow {
  double lr = 0.0;
  std::optional<double> val_miou;
  std::string error;
};

struct SweepResult {
  double best_lr = 0.0;
  std::vector<SweepRow> table;
};

void to_json(nlohmann::json& j, const SweepResult& r);

/// Builds a fresh (model, layer) pair for each run.
using ModelFactory = std::function<std::pair<Model, MatConfig>()>;

/// One run per lr from identical initial weights; best by validation mIoU,
/// ties toward the smaller lr. Throws InfeasibleError if every run fails.
SweepResult lr_sweep(const ModelFactory& factory, const std::vector<InstanceSample>& train_set,
                     const std::vector<InstanceSample>& val_set, const std::vector<double>& grid,
                     const TrainConfig& config, int jobs = 1);

}  // namespace simmat
