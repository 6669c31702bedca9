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

#include <cmath>
#include <fstream>

#include "common/helpers.hpp"
#include "common/oracles.hpp"
#include "simmat/gradcheck.hpp"
#include "simmat/peft.hpp"
#include "simmat/trainer.hpp"

namespace simmat {
namespace {

BinaryMask half_mask(int h, int w) {
  BinaryMask m(h, w);
  for (int r = 0; r < h / 2; ++r) {
    for (int c = 0; c < w; ++c) m.at(r, c) = 1;
  }
  return m;
}

TEST(Loss, SaturatedLogitsNearZero) {
  const auto target = half_mask(8, 8);
  Tensor logits({8, 8});
  for (int i = 0; i < 64; ++i) logits[static_cast<std::size_t>(i)] = target.data[static_cast<std::size_t>(i)] ? 20.0f : -20.0f;
  const double loss = focal_dice_loss(Var(logits), target).value()[0];
  EXPECT_LT(loss, 0.01);
  EXPECT_GE(loss, 0.0);
}

TEST(Loss, FocalClosedFormAtHalf) {
  const auto target = half_mask(8, 8);
  const Tensor zeros({8, 8});
  // p = 0.5 everywhere: positives 0.25·0.25·ln2, negatives 0.75·0.25·ln2.
  const double expected = 0.5 * (0.25 * 0.25 * std::log(2.0)) + 0.5 * (0.75 * 0.25 * std::log(2.0));
  EXPECT_NEAR(focal_term(zeros, target), expected, 1e-7);
  // Dice at p=0.5: 1 − (2·16 + 1) / (32 + 32 + 1).
  const double dice = 1.0 - 33.0 / 65.0;
  const double total = focal_dice_loss(Var(zeros), target).value()[0];
  EXPECT_NEAR(total, 20.0 / 21.0 * expected + 1.0 / 21.0 * dice, 1e-6);
}

TEST(Loss, GradientCheck) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Rng rng(seed);
    const auto target = oracle::random_mask(rng, 8, 8);
    GradClosure<double> op = [&](const std::vector<BasicVar<double>>& x) { return focal_dice_loss(x[0], target); };
    EXPECT_LT(grad_check(op, {test::random_tensor<double>(rng, {8, 8}, 2.0)}, 1e-6).max_rel_error, 1e-3);
  }
}

TEST(Loss, Errors) {
  Tensor bad({4, 4});
  bad[3] = std::nanf("");
  EXPECT_THROW(focal_dice_loss(Var(bad), BinaryMask(4, 4)), NumericError);
  EXPECT_THROW(focal_dice_loss(Var(Tensor({4, 4})), BinaryMask(4, 5)), DimensionError);
}

TEST(Iou, Examples) {
  const BinaryMask a = half_mask(4, 4);
  EXPECT_DOUBLE_EQ(iou(a, a), 1.0);
  BinaryMask b(4, 4);
  b.at(3, 3) = 1;
  EXPECT_DOUBLE_EQ(iou(a, b), 0.0);
  EXPECT_DOUBLE_EQ(iou(BinaryMask(4, 4), BinaryMask(4, 4)), 1.0);
  EXPECT_DOUBLE_EQ(iou(a, BinaryMask(4, 4)), 0.0);
  // 2×2 square vs the same square shifted one column inside a 2×3 canvas.
  BinaryMask p(2, 3), q(2, 3);
  for (int r = 0; r < 2; ++r) {
    p.at(r, 0) = p.at(r, 1) = 1;
    q.at(r, 1) = q.at(r, 2) = 1;
  }
  EXPECT_DOUBLE_EQ(iou(p, q), 1.0 / 3.0);
  Tensor logits({1, 3}, std::vector<float>{-1.0f, 0.0f, 0.5f});
  EXPECT_EQ(binarize(logits).data, (std::vector<std::uint8_t>{0, 0, 1}));
}

// A model whose logits are `value` at every pixel regardless of input.
Model constant_model(float value) {
  auto model = build_model(test::tiny_config(), 1);
  for (auto& v : model.params().get("decoder.upscale2.weight").mutable_value().storage()) v = 0.0f;
  for (auto& v : model.params().get("decoder.upscale2.bias").mutable_value().storage()) v = 1.0f;
  for (auto& v : model.params().get("decoder.hyper.fc2.weight").mutable_value().storage()) v = 0.0f;
  auto& bias = model.params().get("decoder.hyper.fc2.bias").mutable_value();
  for (auto& v : bias.storage()) v = value / static_cast<float>(bias.numel());
  return model;
}

MatConfig identity_mat() {
  MatConfig m;
  m.variant = MatVariant::kIdentity;
  m.channels = 3;
  return m;
}

std::vector<InstanceSample> full_frame_set(int n) {
  std::vector<InstanceSample> set;
  Rng rng(3);
  for (int i = 0; i < n; ++i) {
    InstanceSample s;
    s.modality = test::random_tensor(rng, {3, 32, 32});
    BinaryMask full(32, 32);
    std::fill(full.data.begin(), full.data.end(), 1);
    s.instances = {full};
    s.prompts = {center_point(full)};
    set.push_back(s);
  }
  return set;
}

TEST(Evaluate, ConstantModels) {
  const auto set = full_frame_set(3);
  EXPECT_DOUBLE_EQ(evaluate(constant_model(20.0f), identity_mat(), set).miou, 1.0);
  EXPECT_DOUBLE_EQ(evaluate(constant_model(-20.0f), identity_mat(), set).miou, 0.0);
}

TEST(Evaluate, ChannelMismatchBeforeInference) {
  auto set = full_frame_set(1);
  set[0].modality = Tensor({4, 32, 32});
  EXPECT_THROW(evaluate(constant_model(1.0f), identity_mat(), set), ConfigError);
}

std::vector<InstanceSample> synthetic_set(int n, std::uint64_t seed, int channels, int size = 32) {
  std::vector<InstanceSample> set;
  for (int i = 0; i < n; ++i) {
    SceneSpec s;
    s.seed = derive_seed(seed, static_cast<std::uint64_t>(i));
    s.channels = channels;
    auto sample = synth_scene(s);
    if (channels == 3) sample.modality = *sample.rgb;
    set.push_back(resize_sample(sample, size, 8).sample);
  }
  return set;
}

TEST(Evaluate, MatchesRecomputationAndPermutation) {
  const auto model = build_model(test::tiny_config(), 2);
  const auto set = synthetic_set(4, 1, 3);
  const auto metrics = evaluate(model, identity_mat(), set);
  std::vector<double> ious;
  for (const auto& s : set) {
    const auto logits = predict_instances(model, identity_mat(), s);
    for (std::size_t i = 0; i < s.instances.size(); ++i) ious.push_back(oracle::iou(binarize(logits[i]), s.instances[i]));
  }
  ASSERT_EQ(metrics.ious.size(), ious.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < ious.size(); ++i) {
    EXPECT_NEAR(metrics.ious[i], ious[i], 1e-12);
    sum += ious[i];
  }
  EXPECT_NEAR(metrics.miou, sum / static_cast<double>(ious.size()), 1e-9);
  EXPECT_EQ(metrics.instance_count, static_cast<std::int64_t>(ious.size()));
  auto reversed = set;
  std::reverse(reversed.begin(), reversed.end());
  EXPECT_NEAR(evaluate(model, identity_mat(), reversed).miou, metrics.miou, 1e-12);
  EXPECT_DOUBLE_EQ(mean_iou({}), 0.0);
}

TEST(TrainConfig, DefaultsSerializeRecipe) {
  const nlohmann::json j = TrainConfig{};
  EXPECT_EQ(j["optimizer"], "adam");
  EXPECT_EQ(j["adam_betas"], nlohmann::json({0.9, 0.999}));
  EXPECT_EQ(j["batch_size"], 4);
  EXPECT_EQ(j["epochs"], 50);
  EXPECT_EQ(j["lr_grid"], nlohmann::json({3e-6, 1e-5, 3e-5, 1e-4, 3e-4, 1e-3, 3e-3}));
  EXPECT_EQ(j["step_size_epochs"], 10);
  EXPECT_EQ(j["gamma"], 0.5);
  EXPECT_EQ(j["resize"], nlohmann::json({1024, 1024}));
  const auto back = j.get<TrainConfig>();
  EXPECT_EQ(back.lr_grid, TrainConfig{}.lr_grid);
  TrainConfig bad;
  bad.batch_size = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TrainConfig quick_config(int epochs, double lr) {
  TrainConfig c;
  c.epochs = epochs;
  c.base_lr = lr;
  c.resize = 32;
  c.batch_size = 2;
  c.seed = 5;
  return c;
}

TEST(Train, ZeroEpochsKeepsInitialState) {
  auto model = build_model(test::tiny_config(), 3);
  const auto before = make_checkpoint(model);
  const auto result = train(model, identity_mat(), synthetic_set(2, 1, 3), {}, quick_config(0, 1e-3));
  EXPECT_TRUE(result.history.empty());
  EXPECT_EQ(encode_checkpoint(make_checkpoint(model)), encode_checkpoint(before));
}

TEST(Train, SameSeedBitIdenticalAndFrozenUntouched) {
  const auto data = synthetic_set(4, 2, 4);
  const auto val = synthetic_set(2, 3, 4);
  auto run = [&] {
    auto model = build_model(test::tiny_config(), 4);
    PeftConfig pc;
    pc.rank = 2;
    inject(model, pc);
    MatConfig mat;
    mat.channels = 4;
    mat.hidden = 8;
    build_mat(mat, model, 6);
    const auto initial = model;
    auto result = train(model, mat, data, val, quick_config(3, 1e-3));
    for (const auto& p : model.params().items()) {
      if (!p.trainable) {
        EXPECT_TRUE(bit_equal(p.var.value(), initial.params().get(p.name).value())) << p.name;
      }
    }
    EXPECT_TRUE(bit_equal(model.params().get("encoder.patch_embed.weight").value(),
                          initial.params().get("encoder.patch_embed.weight").value()));
    return std::make_pair(result, make_checkpoint(model));
  };
  const auto [r1, c1] = run();
  const auto [r2, c2] = run();
  ASSERT_EQ(r1.history.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(r1.history[i].train_loss, r2.history[i].train_loss);
    EXPECT_EQ(r1.history[i].val_miou, r2.history[i].val_miou);
    EXPECT_EQ(r1.history[i].lr, r2.history[i].lr);
  }
  EXPECT_EQ(encode_checkpoint(c1), encode_checkpoint(c2));
}

TEST(Train, ZeroLearningRateKeepsValidationConstant) {
  auto model = build_model(test::tiny_config(), 5);
  const auto result = train(model, identity_mat(), synthetic_set(2, 4, 3), synthetic_set(2, 5, 3), quick_config(3, 0.0));
  ASSERT_EQ(result.history.size(), 3u);
  for (const auto& r : result.history) EXPECT_EQ(r.val_miou, result.history[0].val_miou);
}

TEST(Train, SingleSampleOverfit) {
  auto model = build_model(ModelConfig::desk(), 6);
  PeftConfig pc;
  pc.rank = 8;
  inject(model, pc);
  MatConfig mat;
  mat.channels = 3;
  mat.hidden = 16;
  build_mat(mat, model, 7);
  SceneSpec s;
  s.seed = 99;
  s.channels = 3;
  s.min_shapes = s.max_shapes = 1;
  auto sample = synth_scene(s);
  const std::vector<InstanceSample> one{sample};
  TrainConfig c = quick_config(200, 1e-3);
  c.resize = 64;
  c.batch_size = 1;
  c.step_size_epochs = 1000;
  c.eval_every = 1000;
  train(model, mat, one, {}, c);
  EXPECT_GT(evaluate(model, mat, one).miou, 0.9);
}

TEST(Train, WritesHistoryAndCheckpoints) {
  test::TempDir dir("train");
  auto model = build_model(test::tiny_config(), 7);
  TrainIo io;
  io.out_dir = dir.path();
  int seen = 0;
  io.on_epoch = [&](const EpochRecord&) { ++seen; };
  auto c = quick_config(2, 1e-3);
  c.start_epoch = 4;
  const auto result = train(model, identity_mat(), synthetic_set(2, 6, 3), synthetic_set(1, 7, 3), c, io);
  EXPECT_EQ(seen, 2);
  EXPECT_EQ(result.history.front().epoch, 4);
  std::ifstream f(dir.path() / "history.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(f, line)) {
    const auto j = nlohmann::json::parse(line);
    for (const char* k : {"epoch", "lr", "train_loss", "val_miou", "wall_ms"}) EXPECT_TRUE(j.contains(k)) << k;
    ++lines;
  }
  EXPECT_EQ(lines, 2);
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "final.ckpt"));
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "best.ckpt"));
  EXPECT_EQ(read_checkpoint(dir.path() / "final.ckpt").metadata.at("epoch"), "6");
}

TEST(Sweep, TableArgmaxAndSingleValue) {
  const auto data = synthetic_set(2, 8, 3);
  const auto val = synthetic_set(2, 9, 3);
  ModelFactory factory = [] { return std::make_pair(build_model(test::tiny_config(), 8), identity_mat()); };
  const auto one = lr_sweep(factory, data, val, {3e-4}, quick_config(1, 0.0));
  ASSERT_EQ(one.table.size(), 1u);
  EXPECT_EQ(one.best_lr, 3e-4);

  const std::vector<double> grid{1e-4, 1e-3, 3e-3};
  const auto seq = lr_sweep(factory, data, val, grid, quick_config(1, 0.0), 1);
  const auto par = lr_sweep(factory, data, val, grid, quick_config(1, 0.0), 3);
  ASSERT_EQ(seq.table.size(), 3u);
  double best = -1.0, best_lr = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(seq.table[i].lr, grid[i]);
    ASSERT_TRUE(seq.table[i].val_miou.has_value());
    EXPECT_EQ(seq.table[i].val_miou, par.table[i].val_miou);
    if (*seq.table[i].val_miou > best) {
      best = *seq.table[i].val_miou;
      best_lr = grid[i];
    }
  }
  EXPECT_EQ(seq.best_lr, best_lr);
  EXPECT_EQ(par.best_lr, best_lr);
}

TEST(Sweep, AllRunsFailing) {
  ModelFactory factory = [] { return std::make_pair(build_model(test::tiny_config(), 8), identity_mat()); };
  auto bad = synthetic_set(1, 10, 3);
  bad[0].modality[0] = std::nanf("");
  EXPECT_THROW(lr_sweep(factory, bad, {}, {1e-3}, quick_config(1, 0.0)), InfeasibleError);
}

}  // namespace
}  // namespace simmat
