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

#include "simmat/peft.hpp"

#include <cmath>
#include <set>

#include "simmat/kernels.hpp"

namespace simmat {

void PeftConfig::validate() const {
  if (strategy == PeftStrategy::kNone) throw ConfigError("finetuning: a strategy is required");
  if (strategy == PeftStrategy::kLora && rank < 1) throw ConfigError("finetuning: rank must be >= 1");
  if (strategy == PeftStrategy::kMlpAdapter && bottleneck < 1) throw ConfigError("finetuning: bottleneck must be >= 1");
  if (strategy == PeftStrategy::kPromptTuning && tokens_per_block < 1) {
    throw ConfigError("finetuning: tokens_per_block must be >= 1");
  }
  if (!(target_fraction > 0.0 && target_fraction <= 1.0)) throw ConfigError("finetuning: target_fraction must be in (0,1]");
}

void to_json(nlohmann::json& j, const PeftConfig& c) {
  j = {{"strategy", to_string(c.strategy)},
       {"rank", c.rank},
       {"alpha", c.alpha},
       {"bottleneck", c.bottleneck},
       {"adapter_scale", c.adapter_scale},
       {"tokens_per_block", c.tokens_per_block},
       {"target_fraction", c.target_fraction},
       {"train_decoder", c.train_decoder},
       {"train_mat", c.train_mat}};
}

void from_json(const nlohmann::json& j, PeftConfig& c) {
  PeftConfig d;
  c.strategy = peft_strategy_from_string(j.value("strategy", to_string(d.strategy)));
  c.rank = j.value("rank", d.rank);
  c.alpha = j.value("alpha", d.alpha);
  c.bottleneck = j.value("bottleneck", d.bottleneck);
  c.adapter_scale = j.value("adapter_scale", d.adapter_scale);
  c.tokens_per_block = j.value("tokens_per_block", d.tokens_per_block);
  c.target_fraction = j.value("target_fraction", d.target_fraction);
  c.train_decoder = j.value("train_decoder", d.train_decoder);
  c.train_mat = j.value("train_mat", d.train_mat);
}

void to_json(nlohmann::json& j, const InjectionReport& r) {
  nlohmann::json breakdown = nlohmann::json::object();
  for (const auto& [k, v] : r.breakdown) breakdown[k] = {{"total", v.total}, {"trainable", v.trainable}};
  j = {{"strategy", r.strategy},
       {"added_param_count", r.added_param_count},
       {"trainable_param_count", r.trainable_param_count},
       {"frozen_param_count", r.frozen_param_count},
       {"trainable_fraction", r.trainable_fraction},
       {"breakdown", breakdown}};
}

namespace {

PeftState state_for(const PeftConfig& c) {
  PeftState s;
  s.strategy = c.strategy;
  switch (c.strategy) {
    case PeftStrategy::kLora:
      s.rank = c.rank;
      s.lora_scale = c.alpha / c.rank;
      break;
    case PeftStrategy::kMlpAdapter:
      s.bottleneck = c.bottleneck;
      s.adapter_scale = c.adapter_scale;
      break;
    case PeftStrategy::kPromptTuning:
      s.prompt_tokens = c.tokens_per_block;
      break;
    default:
      break;
  }
  return s;
}

std::int64_t spec_count(const std::vector<ParamSpec>& specs, std::string_view prefix = "") {
  std::int64_t n = 0;
  for (const auto& s : specs)
    if (s.name.starts_with(prefix)) n += shape_numel(s.shape);
  return n;
}

}  // namespace

InjectionReport inject(Model& model, const PeftConfig& config) {
  config.validate();
  if (model.peft().strategy != PeftStrategy::kNone) {
    throw StateError("model already carries a '" + to_string(model.peft().strategy) + "' injection");
  }
  const auto& mc = model.config();
  if (config.strategy == PeftStrategy::kLora && config.rank > mc.embed_dim) {
    throw ConfigError("finetuning: rank " + std::to_string(config.rank) + " exceeds embed_dim " +
                      std::to_string(mc.embed_dim));
  }
  if (config.strategy == PeftStrategy::kMlpAdapter && config.bottleneck > mc.embed_dim) {
    throw ConfigError("finetuning: bottleneck " + std::to_string(config.bottleneck) + " exceeds embed_dim " +
                      std::to_string(mc.embed_dim));
  }
  const PeftState state = state_for(config);
  auto& store = model.params();
  if (config.strategy == PeftStrategy::kFullFinetuning) {
    store.set_trainable_prefix("", true);
  } else {
    store.set_trainable_prefix("encoder.", false);
    store.set_trainable_prefix("prompt.", config.train_decoder);
    store.set_trainable_prefix("decoder.", config.train_decoder);
    for (const auto& spec : injected_param_specs(mc, state)) store.add(spec.name, init_param(spec, model.seed()), true);
  }
  store.set_trainable_prefix("mat.", config.train_mat);
  model.peft() = state;
  return injection_report(model);
}

InjectionReport injection_report(const Model& model) {
  InjectionReport r;
  r.strategy = to_string(model.peft().strategy);
  const auto& store = model.params();
  std::set<std::string> injected;
  for (const auto& s : injected_param_specs(model.config(), model.peft())) injected.insert(s.name);
  for (const char* k : {"encoder", "injected", "prompt", "decoder", "mat"}) r.breakdown[k] = {};
  for (const auto& p : store.items()) {
    const std::int64_t n = p.var.numel();
    const auto dot = p.name.find('.');
    auto& bucket = r.breakdown[p.name.substr(0, dot)];
    bucket.total += n;
    if (p.trainable) {
      bucket.trainable += n;
      r.trainable_param_count += n;
    } else {
      r.frozen_param_count += n;
    }
    if (injected.count(p.name)) {
      r.breakdown["injected"].total += n;
      if (p.trainable) r.breakdown["injected"].trainable += n;
      r.added_param_count += n;
    }
  }
  const auto all = r.trainable_param_count + r.frozen_param_count;
  r.trainable_fraction = all > 0 ? static_cast<double>(r.trainable_param_count) / static_cast<double>(all) : 0.0;
  return r;
}

double trainable_fraction(const Model& model) { return injection_report(model).trainable_fraction; }

std::int64_t added_param_count(const ModelConfig& c, PeftStrategy strategy, int knob) {
  const std::int64_t d = c.embed_dim, depth = c.depth, k = knob;
  switch (strategy) {
    case PeftStrategy::kLora: return depth * 2 * (2 * k * d);
    case PeftStrategy::kMlpAdapter: return depth * (2 * k * d + k + d);
    case PeftStrategy::kPromptTuning: return depth * k * d;
    default: return 0;
  }
}

BalanceResult balance_to_fraction(const ModelConfig& c, PeftStrategy strategy, double target, bool train_decoder) {
  if (!(target > 0.0 && target <= 1.0)) throw ConfigError("balance: target fraction must be in (0,1]");
  if (strategy == PeftStrategy::kFullFinetuning) return {0, 1.0};
  if (strategy == PeftStrategy::kNone) throw ConfigError("balance: a finetuning strategy is required");
  const auto base = model_param_specs(c);
  const std::int64_t total = spec_count(base);
  const std::int64_t kept = train_decoder ? spec_count(base, "prompt.") + spec_count(base, "decoder.") : 0;
  auto fraction = [&](int knob) {
    const auto added = added_param_count(c, strategy, knob);
    return static_cast<double>(added + kept) / static_cast<double>(total + added);
  };
  const double first = fraction(1);
  if (first > 1.5 * target) {
    throw InfeasibleError("balance: knob 1 already gives trainable fraction " + std::to_string(first) +
                          " against target " + std::to_string(target));
  }
  // Fraction grows monotonically with the knob, so stop at the first crossing.
  const int limit = strategy == PeftStrategy::kPromptTuning ? 64 * c.num_tokens() + 64 : c.embed_dim;
  BalanceResult best{1, first};
  for (int knob = 2; knob <= limit; ++knob) {
    const double f = fraction(knob);
    if (std::abs(f - target) < std::abs(best.fraction - target)) best = {knob, f};
    if (f >= target) break;
  }
  return best;
}

void merge_lora(Model& model) {
  auto& st = model.peft();
  if (st.strategy != PeftStrategy::kLora) throw StateError("merge_lora: model carries no low-rank injection");
  if (st.merged) throw StateError("merge_lora: low-rank update already merged");
  auto& store = model.params();
  const auto& c = model.config();
  const int d = c.embed_dim, r = st.rank;
  const float s = static_cast<float>(st.lora_scale);
  for (int i = 0; i < c.depth; ++i) {
    for (const char* t : {"q", "v"}) {
      const std::string base = "encoder.blocks." + std::to_string(i) + ".attn." + t;
      const auto& a = store.get(base + ".lora_a").value().data();
      const auto& b = store.get(base + ".lora_b").value().data();
      std::vector<float> delta(static_cast<std::size_t>(d) * d, 0.0f);
      kernels::gemm(d, d, r, b.data(), r, a.data(), d, delta.data(), d, false);
      auto& w = store.get(base + ".weight").mutable_value().storage();
      for (std::size_t j = 0; j < w.size(); ++j) w[j] += s * delta[j];
      store.remove(base + ".lora_a");
      store.remove(base + ".lora_b");
    }
  }
  st.merged = true;
}

}  // namespace simmat
