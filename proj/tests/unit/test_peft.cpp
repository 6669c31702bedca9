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

#include <gtest/gtest.h>

#include "common/helpers.hpp"
#include "simmat/mat.hpp"
#include "simmat/peft.hpp"

namespace simmat {
namespace {

PeftConfig peft(PeftStrategy s) {
  PeftConfig c;
  c.strategy = s;
  c.rank = 4;
  c.bottleneck = 8;
  c.tokens_per_block = 3;
  return c;
}

double forward_diff(const Model& a, const Model& b, std::uint64_t seed) {
  Rng rng(seed);
  const Var img(test::random_tensor(rng, {3, 64, 64}));
  const PromptPoint p{rng.uniform_int(0, 63), rng.uniform_int(0, 63), true};
  return test::max_abs_diff(a.forward(img, p).value(), b.forward(img, p).value());
}

TEST(Inject, LoraAndAdapterAreNeutralAtInit) {
  const auto base = build_model(ModelConfig::desk(), 1);
  for (auto s : {PeftStrategy::kLora, PeftStrategy::kMlpAdapter}) {
    Model injected = base;
    inject(injected, peft(s));
    for (std::uint64_t i = 0; i < 10; ++i) EXPECT_LT(forward_diff(base, injected, 100 + i), 1e-6) << to_string(s);
  }
}

TEST(Inject, PromptTuningChangesOutput) {
  const auto base = build_model(ModelConfig::desk(), 1);
  Model injected = base;
  inject(injected, peft(PeftStrategy::kPromptTuning));
  EXPECT_GT(forward_diff(base, injected, 7), 0.0);
}

TEST(Inject, AddedParametersMatchClosedForm) {
  const auto mc = ModelConfig::desk();
  for (auto s : {PeftStrategy::kLora, PeftStrategy::kMlpAdapter, PeftStrategy::kPromptTuning}) {
    auto model = build_model(mc, 1);
    const auto before = count_params(model.params());
    const auto report = inject(model, peft(s));
    const int knob = s == PeftStrategy::kLora ? 4 : s == PeftStrategy::kMlpAdapter ? 8 : 3;
    EXPECT_EQ(report.added_param_count, added_param_count(mc, s, knob));
    EXPECT_EQ(count_params(model.params()) - before, report.added_param_count);
  }
  EXPECT_EQ(added_param_count(mc, PeftStrategy::kLora, 2), 4LL * 4 * 2 * 64);
  EXPECT_EQ(added_param_count(mc, PeftStrategy::kMlpAdapter, 2), 4LL * (2 * 2 * 64 + 2 + 64));
  EXPECT_EQ(added_param_count(mc, PeftStrategy::kPromptTuning, 2), 4LL * 2 * 64);
}

TEST(Inject, FreezingAndReport) {
  auto model = build_model(ModelConfig::desk(), 1);
  const auto all_before = count_params(model.params());
  const auto report = inject(model, peft(PeftStrategy::kLora));
  EXPECT_FALSE(model.params().param("encoder.blocks.0.attn.q.weight").trainable);
  EXPECT_TRUE(model.params().param("encoder.blocks.0.attn.q.lora_a").trainable);
  EXPECT_TRUE(model.params().param("decoder.mask_token").trainable);
  EXPECT_EQ(report.trainable_param_count + report.frozen_param_count, all_before + report.added_param_count);
  EXPECT_DOUBLE_EQ(report.trainable_fraction,
                   static_cast<double>(report.trainable_param_count) /
                       static_cast<double>(report.trainable_param_count + report.frozen_param_count));
  EXPECT_EQ(report.breakdown.at("injected").total, report.added_param_count);
  EXPECT_EQ(report.breakdown.at("injected").trainable, report.added_param_count);
  const auto j = nlohmann::json(report);
  for (const char* key : {"strategy", "added_param_count", "trainable_param_count", "frozen_param_count",
                          "trainable_fraction", "breakdown"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
}

TEST(Inject, CountAllInvariantUnderFreezing) {
  auto model = build_model(ModelConfig::desk(), 1);
  const auto total = count_params(model.params());
  auto cfg = peft(PeftStrategy::kFullFinetuning);
  inject(model, cfg);
  EXPECT_EQ(count_params(model.params()), total);
  model.params().freeze_all();
  EXPECT_EQ(count_params(model.params()), total);
}

TEST(Inject, Errors) {
  auto model = build_model(ModelConfig::desk(), 1);
  inject(model, peft(PeftStrategy::kLora));
  EXPECT_THROW(inject(model, peft(PeftStrategy::kLora)), StateError);
  auto wide = build_model(ModelConfig::desk(), 1);
  auto cfg = peft(PeftStrategy::kLora);
  cfg.rank = 65;
  EXPECT_THROW(inject(wide, cfg), ConfigError);
  cfg = peft(PeftStrategy::kMlpAdapter);
  cfg.bottleneck = 65;
  EXPECT_THROW(inject(wide, cfg), ConfigError);
}

TEST(TrainableFraction, Extremes) {
  auto model = build_model(ModelConfig::desk(), 1);
  inject(model, peft(PeftStrategy::kFullFinetuning));
  EXPECT_DOUBLE_EQ(trainable_fraction(model), 1.0);
  model.params().freeze_all();
  EXPECT_DOUBLE_EQ(trainable_fraction(model), 0.0);
}

TEST(TrainableFraction, AdditiveAccounting) {
  auto model = build_model(ModelConfig::desk(), 1);
  const auto report = inject(model, peft(PeftStrategy::kMlpAdapter));
  MatConfig mat;
  build_mat(mat, model, 2);
  const auto trainable = count_params(model.params(), CountFilter::kTrainable);
  const auto side = count_params(model.params(), CountFilter::kAll, "mat.") +
                    count_params(model.params(), CountFilter::kAll, "decoder.") +
                    count_params(model.params(), CountFilter::kAll, "prompt.");
  EXPECT_EQ(report.added_param_count, trainable - side);
}

// Fraction when only the injected parameters train, computed by building
// the model rather than from the closed form.
double enumerated_fraction(const ModelConfig& mc, PeftStrategy s, int knob) {
  auto model = build_model(mc, 1);
  auto cfg = peft(s);
  cfg.rank = cfg.bottleneck = cfg.tokens_per_block = knob;
  cfg.train_decoder = false;
  inject(model, cfg);
  return trainable_fraction(model);
}

TEST(Balance, DeskStrategiesHitFourPercent) {
  const auto mc = ModelConfig::desk();
  for (auto s : {PeftStrategy::kLora, PeftStrategy::kMlpAdapter, PeftStrategy::kPromptTuning}) {
    const auto b = balance_to_fraction(mc, s, 0.04);
    EXPECT_GE(b.fraction, 0.03) << to_string(s);
    EXPECT_LE(b.fraction, 0.05) << to_string(s);
    EXPECT_NEAR(enumerated_fraction(mc, s, b.knob), b.fraction, 1e-12);
    // Closest among neighbours.
    for (int k : {b.knob - 1, b.knob + 1}) {
      if (k < 1) continue;
      EXPECT_GE(std::abs(enumerated_fraction(mc, s, k) - 0.04), std::abs(b.fraction - 0.04) - 1e-12);
    }
  }
}

TEST(Balance, VitBStrategiesHitFourPercent) {
  const auto mc = ModelConfig::vit_b();
  for (auto s : {PeftStrategy::kLora, PeftStrategy::kMlpAdapter, PeftStrategy::kPromptTuning}) {
    const auto b = balance_to_fraction(mc, s, 0.04);
    EXPECT_GE(b.fraction, 0.03) << to_string(s);
    EXPECT_LE(b.fraction, 0.05) << to_string(s);
  }
}

TEST(Balance, FullFinetuningAndInfeasible) {
  const auto b = balance_to_fraction(ModelConfig::desk(), PeftStrategy::kFullFinetuning, 0.04);
  EXPECT_EQ(b.knob, 0);
  EXPECT_DOUBLE_EQ(b.fraction, 1.0);
  EXPECT_THROW(balance_to_fraction(ModelConfig::desk(), PeftStrategy::kLora, 1e-5), InfeasibleError);
}

TEST(MergeLora, AtInitBitIdentical) {
  auto model = build_model(ModelConfig::desk(), 1);
  const auto base = model;
  inject(model, peft(PeftStrategy::kLora));
  merge_lora(model);
  EXPECT_FALSE(model.params().contains("encoder.blocks.0.attn.q.lora_a"));
  for (const auto& p : base.params().items()) {
    EXPECT_TRUE(bit_equal(p.var.value(), model.params().get(p.name).value())) << p.name;
  }
  EXPECT_THROW(merge_lora(model), StateError);
}

TEST(MergeLora, PreservesTrainedOutputs) {
  auto model = build_model(ModelConfig::desk(), 1);
  inject(model, peft(PeftStrategy::kLora));
  Rng rng(3);
  for (auto& p : model.params().items()) {
    if (p.name.find("lora_b") != std::string::npos) {
      for (auto& v : p.var.mutable_value().storage()) v = static_cast<float>(rng.normal(0.0, 0.05));
    }
  }
  Model merged = model;
  merge_lora(merged);
  for (std::uint64_t i = 0; i < 3; ++i) {
    Rng r(50 + i);
    const Var img(test::random_tensor(r, {3, 64, 64}));
    const auto a = model.forward(img, {20, 30, true}).value();
    const auto b = merged.forward(img, {20, 30, true}).value();
    EXPECT_LT(test::max_abs_diff(a, b), 1e-5 * std::max(1.0, test::max_abs(a)));
  }
}

TEST(MergeLora, RejectsOtherStrategies) {
  auto model = build_model(ModelConfig::desk(), 1);
  EXPECT_THROW(merge_lora(model), StateError);
  inject(model, peft(PeftStrategy::kMlpAdapter));
  EXPECT_THROW(merge_lora(model), StateError);
}

TEST(PeftConfig, JsonRoundTripAndValidation) {
  auto c = peft(PeftStrategy::kPromptTuning);
  c.train_mat = false;
  const auto back = nlohmann::json(c).get<PeftConfig>();
  EXPECT_EQ(back.strategy, c.strategy);
  EXPECT_EQ(back.tokens_per_block, 3);
  EXPECT_FALSE(back.train_mat);
  c.rank = 0;
  c.strategy = PeftStrategy::kLora;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(peft_strategy_from_string("prefix-tuning"), ConfigError);
}

}  // namespace
}  // namespace simmat
