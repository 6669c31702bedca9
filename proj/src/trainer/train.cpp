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

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <thread>

#include "simmat/ops.hpp"
#include "simmat/rng.hpp"
#include "simmat/trainer.hpp"

namespace simmat {

void TrainConfig::validate() const {
  if (!(base_lr >= 0.0) || !std::isfinite(base_lr)) throw ConfigError("train: base_lr must be finite and >= 0");
  if (lr_grid.empty()) throw ConfigError("train: lr_grid must not be empty");
  for (double lr : lr_grid) {
    if (!(lr > 0.0)) throw ConfigError("train: lr_grid values must be positive");
  }
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (step_size_epochs < 1) throw ConfigError("train: step_size_epochs must be >= 1");
  if (!(gamma > 0.0)) throw ConfigError("train: gamma must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("train: Adam betas must be in [0,1)");
  }
  if (resize < 1) throw ConfigError("train: resize must be positive");
  if (eval_every < 1) throw ConfigError("train: eval_every must be >= 1");
  if (start_epoch < 0) throw ConfigError("train: start_epoch must be >= 0");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"optimizer", "adam"},
       {"adam_betas", {c.adam_beta1, c.adam_beta2}},
       {"batch_size", c.batch_size},
       {"epochs", c.epochs},
       {"base_lr", c.base_lr},
       {"lr_grid", c.lr_grid},
       {"schedule", "step"},
       {"step_size_epochs", c.step_size_epochs},
       {"gamma", c.gamma},
       {"resize", {c.resize, c.resize}},
       {"seed", c.seed},
       {"loss_weights", {{"focal", c.loss.focal}, {"dice", c.loss.dice}}},
       {"eval_every", c.eval_every},
       {"start_epoch", c.start_epoch}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.base_lr = j.value("base_lr", d.base_lr);
  c.lr_grid = j.value("lr_grid", d.lr_grid);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.epochs = j.value("epochs", d.epochs);
  c.step_size_epochs = j.value("step_size_epochs", d.step_size_epochs);
  c.gamma = j.value("gamma", d.gamma);
  if (j.contains("adam_betas")) {
    c.adam_beta1 = j.at("adam_betas").at(0).get<double>();
    c.adam_beta2 = j.at("adam_betas").at(1).get<double>();
  }
  if (j.contains("resize")) {
    const auto& r = j.at("resize");
    c.resize = r.is_array() ? r.at(0).get<int>() : r.get<int>();
  }
  c.seed = j.value("seed", d.seed);
  if (j.contains("loss_weights")) {
    c.loss.focal = j.at("loss_weights").value("focal", d.loss.focal);
    c.loss.dice = j.at("loss_weights").value("dice", d.loss.dice);
  }
  c.eval_every = j.value("eval_every", d.eval_every);
  c.start_epoch = j.value("start_epoch", d.start_epoch);
}

void to_json(nlohmann::json& j, const Metrics& m) {
  j = {{"miou", m.miou},
       {"instance_count", m.instance_count},
       {"ious", m.ious},
       {"metadata", {{"config_hash", m.config_hash}, {"seed", m.seed}, {"wall_ms", m.wall_ms}}}};
}

void to_json(nlohmann::json& j, const EpochRecord& r) {
  j = {{"epoch", r.epoch}, {"lr", r.lr}, {"train_loss", r.train_loss}, {"wall_ms", r.wall_ms}};
  if (r.val_miou) j["val_miou"] = *r.val_miou;
}

void to_json(nlohmann::json& j, const SweepResult& r) {
  nlohmann::json table = nlohmann::json::array();
  for (const auto& row : r.table) {
    nlohmann::json e = {{"lr", row.lr}};
    e["val_miou"] = row.val_miou ? nlohmann::json(*row.val_miou) : nlohmann::json(nullptr);
    if (!row.error.empty()) e["error"] = row.error;
    table.push_back(std::move(e));
  }
  j = {{"best_lr", r.best_lr}, {"table", table}};
}

double mean_iou(const std::vector<double>& ious) {
  if (ious.empty()) return 0.0;
  double s = 0.0;
  for (double v : ious) s += v;
  return s / static_cast<double>(ious.size());
}

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

std::string config_hash(const Model& model, const MatConfig& mat) {
  const nlohmann::json j = {{"model", model.config()}, {"mat", mat}, {"peft", model.peft()}};
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
  return buf;
}

void check_channels(const MatConfig& mat, const std::vector<InstanceSample>& samples, const char* what) {
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].modality.rank() != 3 || samples[i].modality.dim(0) != mat.channels) {
      throw ConfigError(std::string(what) + ": sample " + std::to_string(i) + " has shape " +
                        shape_str(samples[i].modality.shape()) + ", transfer layer expects " +
                        std::to_string(mat.channels) + " channels");
    }
  }
}

}  // namespace

std::vector<Tensor> predict_instances(const Model& model, const MatConfig& mat, const InstanceSample& sample) {
  NoGradGuard guard;
  const auto embedding = simmat_encode(model, mat, Var(sample.modality));
  std::vector<Tensor> out;
  out.reserve(sample.prompts.size());
  for (const auto& p : sample.prompts) out.push_back(model.decode_mask(embedding, model.encode_prompt(p)).value());
  return out;
}

Metrics evaluate(const Model& model, const MatConfig& mat, const std::vector<InstanceSample>& samples) {
  check_channels(mat, samples, "evaluate");
  const auto start = Clock::now();
  Metrics m;
  for (const auto& s : samples) {
    const auto logits = predict_instances(model, mat, s);
    for (std::size_t k = 0; k < s.instances.size(); ++k) m.ious.push_back(iou(binarize(logits[k]), s.instances[k]));
  }
  m.instance_count = static_cast<std::int64_t>(m.ious.size());
  m.miou = mean_iou(m.ious);
  m.config_hash = config_hash(model, mat);
  m.seed = model.seed();
  m.wall_ms = elapsed_ms(start);
  return m;
}

TrainResult train(Model& model, const MatConfig& mat, const std::vector<InstanceSample>& train_set,
                  const std::vector<InstanceSample>& val_set, const TrainConfig& config, const TrainIo& io) {
  config.validate();
  if (train_set.empty()) throw InputError("train: training set is empty");
  check_channels(mat, train_set, "train");
  check_channels(mat, val_set, "train (validation)");

  std::ofstream history_file;
  if (io.out_dir) {
    std::filesystem::create_directories(*io.out_dir);
    history_file.open(*io.out_dir / "history.jsonl", std::ios::trunc);
    if (!history_file) throw IoError("cannot write history under '" + io.out_dir->string() + "'");
  }
  auto snapshot = [&](int next_epoch) {
    auto ckpt = make_transfer_checkpoint(model, mat);
    ckpt.metadata["epoch"] = std::to_string(next_epoch);
    ckpt.metadata["train_config"] = nlohmann::json(config).dump();
    return ckpt;
  };

  TrainResult result;
  result.best_checkpoint = snapshot(config.start_epoch);
  AdamState adam;
  adam.beta1 = config.adam_beta1;
  adam.beta2 = config.adam_beta2;
  auto& store = model.params();
  store.zero_grad();
  const auto n = train_set.size();
  const auto bs = static_cast<std::size_t>(config.batch_size);
  std::int64_t step = 0;

  for (int e = config.start_epoch; e < config.start_epoch + config.epochs; ++e) {
    const auto start = Clock::now();
    EpochRecord rec;
    rec.epoch = e;
    rec.lr = lr_at_epoch(config.schedule(), e);
    Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(e)));
    const auto order = rng.permutation(n);
    double loss_sum = 0.0;
    for (std::size_t b0 = 0; b0 < n; b0 += bs) {
      const std::size_t b1 = std::min(n, b0 + bs);
      double batch_loss = 0.0;
      for (std::size_t i = b0; i < b1; ++i) {
        const auto& s = train_set[order[i]];
        if (s.instances.empty()) continue;
        const auto embedding = simmat_encode(model, mat, Var(s.modality));
        std::vector<Var> losses;
        losses.reserve(s.instances.size());
        for (std::size_t k = 0; k < s.instances.size(); ++k) {
          auto logits = model.decode_mask(embedding, model.encode_prompt(s.prompts[k]));
          losses.push_back(focal_dice_loss(logits, s.instances[k], config.loss));
        }
        auto loss = ops::scale(ops::mean_of(losses), 1.0f / static_cast<float>(b1 - b0));
        const double v = static_cast<double>(loss.value()[0]);
        if (!std::isfinite(v)) {
          throw NumericError("train: loss became non-finite at epoch " + std::to_string(e) + ", step " +
                             std::to_string(step));
        }
        batch_loss += v;
        if (loss.requires_grad()) loss.backward();
      }
      adam_step(store, adam, rec.lr);
      store.zero_grad();
      loss_sum += batch_loss * static_cast<double>(b1 - b0);
      ++step;
    }
    rec.train_loss = loss_sum / static_cast<double>(n);
    const bool last = e + 1 == config.start_epoch + config.epochs;
    if (!val_set.empty() && ((e - config.start_epoch + 1) % config.eval_every == 0 || last)) {
      rec.val_miou = evaluate(model, mat, val_set).miou;
      if (*rec.val_miou > result.best_val_miou) {
        result.best_val_miou = *rec.val_miou;
        result.best_checkpoint = snapshot(e + 1);
      }
    }
    rec.wall_ms = elapsed_ms(start);
    result.history.push_back(rec);
    if (history_file.is_open()) history_file << nlohmann::json(rec).dump() << '\n' << std::flush;
    if (io.on_epoch) io.on_epoch(rec);
  }
  result.final_checkpoint = snapshot(config.start_epoch + config.epochs);
  if (val_set.empty()) result.best_checkpoint = result.final_checkpoint;
  if (io.out_dir) {
    write_checkpoint(result.final_checkpoint, *io.out_dir / "final.ckpt");
    write_checkpoint(result.best_checkpoint, *io.out_dir / "best.ckpt");
  }
  return result;
}

SweepResult lr_sweep(const ModelFactory& factory, const std::vector<InstanceSample>& train_set,
                     const std::vector<InstanceSample>& val_set, const std::vector<double>& grid,
                     const TrainConfig& config, int jobs) {
  if (grid.empty()) throw ConfigError("lr_sweep: grid must not be empty");
  SweepResult result;
  result.table.resize(grid.size());
  auto run = [&](std::size_t i) {
    auto& row = result.table[i];
    row.lr = grid[i];
    try {
      auto [model, mat] = factory();
      TrainConfig c = config;
      c.base_lr = grid[i];
      const auto r = train(model, mat, train_set, val_set, c);
      row.val_miou = r.best_val_miou >= 0.0 ? r.best_val_miou : evaluate(model, mat, val_set).miou;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(std::max(1, jobs)), grid.size()));
  if (workers == 1) {
    for (std::size_t i = 0; i < grid.size(); ++i) run(i);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < grid.size(); i += workers) run(i);
      });
    }
    for (auto& t : pool) t.join();
  }
  const SweepRow* best = nullptr;
  for (const auto& row : result.table) {
    if (!row.val_miou) continue;
    if (!best || *row.val_miou > *best->val_miou || (*row.val_miou == *best->val_miou && row.lr < best->lr)) {
      best = &row;
    }
  }
  if (!best) throw InfeasibleError("lr_sweep: every run failed");
  result.best_lr = best->lr;
  return result;
}

}  // namespace simmat
