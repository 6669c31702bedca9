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
#include <set>

#include "common/helpers.hpp"
#include "common/oracles.hpp"
#include "simmat/checkpoint.hpp"
#include "simmat/gradcheck.hpp"
#include "simmat/gradsuite.hpp"
#include "simmat/mat.hpp"
#include "simmat/ops.hpp"

namespace simmat {
namespace {

using DT = BasicTensor<double>;
using DV = BasicVar<double>;

std::int64_t spec_total(const std::vector<ParamSpec>& specs, const std::string& prefix = "") {
  std::int64_t n = 0;
  for (const auto& s : specs) {
    if (s.name.rfind(prefix, 0) == 0) n += shape_numel(s.shape);
  }
  return n;
}

TEST(ModelConfig, Validation) {
  EXPECT_NO_THROW(ModelConfig::desk().validate());
  EXPECT_NO_THROW(ModelConfig::vit_b().validate());
  ModelConfig mc = ModelConfig::desk();
  mc.patch_size = 7;
  EXPECT_THROW(mc.validate(), ConfigError);
  mc = ModelConfig::desk();
  mc.depth = 0;
  EXPECT_THROW(mc.validate(), ConfigError);
}

TEST(BuildModel, DeskBuildsWithPrefixedUniqueNames) {
  const auto model = build_model(ModelConfig::desk(), 1);
  EXPECT_GT(count_params(model.params()), 0);
  std::set<std::string> seen;
  for (const auto& p : model.params().items()) {
    EXPECT_TRUE(seen.insert(p.name).second) << p.name;
    const bool prefixed = p.name.rfind("encoder.", 0) == 0 || p.name.rfind("prompt.", 0) == 0 ||
                          p.name.rfind("decoder.", 0) == 0;
    EXPECT_TRUE(prefixed) << p.name;
  }
}

TEST(BuildModel, SameSeedBitIdentical) {
  const auto a = build_model(ModelConfig::desk(), 5), b = build_model(ModelConfig::desk(), 5);
  const auto c = build_model(ModelConfig::desk(), 6);
  bool any_diff = false;
  for (const auto& p : a.params().items()) {
    EXPECT_TRUE(bit_equal(p.var.value(), b.params().get(p.name).value())) << p.name;
    any_diff = any_diff || !bit_equal(p.var.value(), c.params().get(p.name).value());
  }
  EXPECT_TRUE(any_diff);
}

TEST(BuildModel, CensusMatchesEnumeration) {
  const auto mc = ModelConfig::desk();
  const auto model = build_model(mc, 1);
  std::int64_t enumerated = 0;
  for (const auto& p : model.params().items()) {
    std::int64_t n = 1;
    for (auto d : p.var.shape()) n *= d;
    enumerated += n;
  }
  EXPECT_EQ(count_params(model.params()), enumerated);
  EXPECT_EQ(count_params(model.params()), spec_total(model_param_specs(mc)));
  EXPECT_EQ(count_params(model.params(), CountFilter::kAll, "encoder."), oracle::vit_encoder_params(mc));
}

TEST(BuildModel, VitBEncoderCensus) {
  const auto mc = ModelConfig::vit_b();
  const auto encoder = spec_total(model_param_specs(mc), "encoder.");
  EXPECT_EQ(encoder, oracle::vit_encoder_params(mc));
  EXPECT_GE(encoder, 85'000'000);
  EXPECT_LE(encoder, 90'000'000);
}

TEST(CountParams, TrainableFilters) {
  auto model = build_model(ModelConfig::desk(), 1);
  EXPECT_EQ(count_params(model.params(), CountFilter::kTrainable), count_params(model.params()));
  model.params().freeze_all();
  EXPECT_EQ(count_params(model.params(), CountFilter::kTrainable), 0);
}

TEST(PatchEmbed, ShapeAndBiasBroadcast) {
  auto model = build_model(ModelConfig::desk(), 2);
  Rng rng(1);
  EXPECT_EQ(model.patch_embed(Var(test::random_tensor(rng, {3, 64, 64}))).shape(), (Shape{64, 64}));
  for (auto& v : model.params().get("encoder.pos_embed").mutable_value().storage()) v = 0.0f;
  const auto tokens = model.patch_embed(Var(Tensor({3, 64, 64}))).value();
  const auto& bias = model.params().get("encoder.patch_embed.bias").value();
  for (int t = 0; t < 64; ++t) {
    for (int d = 0; d < 64; ++d) ASSERT_EQ(tokens.at(t, d), bias[static_cast<std::size_t>(d)]);
  }
}

TEST(PatchEmbed, RejectsNonRgb) {
  const auto model = build_model(ModelConfig::desk(), 2);
  EXPECT_THROW(model.patch_embed(Var(Tensor({9, 64, 64}))), DimensionError);
  EXPECT_THROW(model.patch_embed(Var(Tensor({3, 32, 32}))), DimensionError);
}

TEST(PatchEmbed, GradientCheck) {
  ModelConfig mc = test::tiny_config();
  mc.image_size = 16;
  const auto model = build_model(mc, 3).cast<double>();
  Rng rng(2);
  const DT weights = test::random_tensor<double>(rng, {4, 16});
  const std::vector<DT> inputs{test::random_tensor<double>(rng, {3, 16, 16}),
                               model.params().get("encoder.patch_embed.weight").value()};
  GradClosure<double> op = [&](const std::vector<DV>& x) {
    auto m = model;
    m.params().get("encoder.patch_embed.weight") = x[1];
    return ops::mul(m.patch_embed(x[0]), DV(weights));
  };
  EXPECT_LT(grad_check(op, inputs, 1e-6).max_rel_error, 1e-3);
}

TEST(EncodeImage, ShapeFiniteAndBounded) {
  const auto model = build_model(ModelConfig::desk(), 3);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Rng rng(seed);
    Tensor img({3, 64, 64});
    for (auto& v : img.storage()) v = static_cast<float>(rng.uniform(-10, 10));
    const auto out = model.encode_image(model.patch_embed(Var(img))).value();
    ASSERT_EQ(out.shape(), (Shape{64, 32}));
    for (float v : out.data()) ASSERT_TRUE(std::isfinite(v));
    EXPECT_LT(test::max_abs(out), 1e3);
  }
}

TEST(EncodeImage, PermutationEquivariantWithoutPositions) {
  const auto model = build_model(ModelConfig::desk(), 4);
  Rng rng(5);
  const auto tokens = test::random_tensor(rng, {64, 64});
  const auto perm = rng.permutation(64);
  Tensor permuted({64, 64});
  for (int i = 0; i < 64; ++i) {
    for (int d = 0; d < 64; ++d) permuted.at(i, d) = tokens.at(static_cast<std::int64_t>(perm[i]), d);
  }
  const auto out = model.encode_image(Var(tokens)).value();
  const auto out_p = model.encode_image(Var(permuted)).value();
  for (int i = 0; i < 64; ++i) {
    for (int d = 0; d < 32; ++d) {
      ASSERT_NEAR(out_p.at(i, d), out.at(static_cast<std::int64_t>(perm[i]), d), 1e-4);
    }
  }
}

TEST(EncodePrompt, DeterministicDistinctAndBounded) {
  const auto model = build_model(ModelConfig::desk(), 6);
  const auto a = model.encode_prompt({10, 20, true}).value();
  EXPECT_EQ(a.shape(), (Shape{1, 32}));
  EXPECT_TRUE(bit_equal(a, model.encode_prompt({10, 20, true}).value()));
  EXPECT_GT(test::max_abs_diff(a, model.encode_prompt({20, 10, true}).value()), 0.0);
  EXPECT_GT(test::max_abs_diff(a, model.encode_prompt({10, 20, false}).value()), 0.0);
  EXPECT_THROW(model.encode_prompt({64, 0, true}), InputError);
  EXPECT_THROW(model.encode_prompt({0, -1, true}), InputError);
}

TEST(EncodePrompt, GradientReachesLabelEmbedding) {
  const auto model = build_model(test::tiny_config(), 7).cast<double>();
  Rng rng(3);
  const DT weights = test::random_tensor<double>(rng, {1, 16});
  const std::vector<DT> inputs{model.params().get("prompt.label_embed").value(),
                               model.params().get("prompt.proj.weight").value()};
  GradClosure<double> op = [&](const std::vector<DV>& x) {
    auto m = model;
    m.params().get("prompt.label_embed") = x[0];
    m.params().get("prompt.proj.weight") = x[1];
    return ops::mul(m.encode_prompt({5, 9, true}), DV(weights));
  };
  EXPECT_LT(grad_check(op, inputs, 1e-6).max_rel_error, 1e-3);
  auto m = build_model(test::tiny_config(), 7);
  ops::sum(m.encode_prompt({5, 9, true})).backward();
  EXPECT_TRUE(m.params().get("prompt.label_embed").has_grad());
}

TEST(DecodeMask, DeskShapeAndFinite) {
  const auto model = build_model(ModelConfig::desk(), 8);
  Rng rng(4);
  const auto logits = model.forward(Var(test::random_tensor(rng, {3, 64, 64})), {30, 30, true}).value();
  ASSERT_EQ(logits.shape(), (Shape{64, 64}));
  for (float v : logits.data()) ASSERT_TRUE(std::isfinite(v));
}

TEST(DecodeMask, PipelineGradientCheck) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto e = run_pipeline_grad_check(seed);
    EXPECT_LT(e.max_rel_error, 1e-2) << "seed " << seed;
  }
}

TEST(SimmatForward, IdentityPathEqualsBaseForwardBitwise) {
  auto model = build_model(ModelConfig::desk(), 9);
  MatConfig identity;
  identity.variant = MatVariant::kIdentity;
  identity.channels = 3;
  build_mat(identity, model, 1);
  Rng rng(6);
  const Var img(test::random_tensor(rng, {3, 64, 64}));
  EXPECT_TRUE(bit_equal(simmat_forward(model, identity, img, {12, 40, true}).value(),
                        model.forward(img, {12, 40, true}).value()));
}

TEST(SimmatForward, NineChannelShapeAndDeterminism) {
  auto model = build_model(ModelConfig::desk(), 9);
  MatConfig mat;
  build_mat(mat, model, 2);
  Rng rng(7);
  const Var x(test::random_tensor(rng, {9, 64, 64}));
  const auto a = simmat_forward(model, mat, x, {3, 3, true}).value();
  EXPECT_EQ(a.shape(), (Shape{64, 64}));
  EXPECT_TRUE(bit_equal(a, simmat_forward(model, mat, x, {3, 3, true}).value()));
  EXPECT_THROW(simmat_forward(model, mat, Var(Tensor({4, 64, 64})), {3, 3, true}), DimensionError);
}

TEST(Checkpoint, RoundTripBitIdentical) {
  test::TempDir dir("ckpt");
  auto model = build_model(ModelConfig::desk(), 10);
  model.params().set_trainable_prefix("encoder.", false);
  save_checkpoint(model, dir.path() / "m.ckpt");
  const auto loaded = load_checkpoint(dir.path() / "m.ckpt");
  EXPECT_EQ(loaded.config(), model.config());
  EXPECT_EQ(loaded.seed(), model.seed());
  ASSERT_EQ(loaded.params().size(), model.params().size());
  for (std::size_t i = 0; i < model.params().size(); ++i) {
    const auto& a = model.params().items()[i];
    const auto& b = loaded.params().items()[i];
    EXPECT_EQ(a.name, b.name);
    EXPECT_EQ(a.trainable, b.trainable);
    EXPECT_TRUE(bit_equal(a.var.value(), b.var.value())) << a.name;
  }
  save_checkpoint(loaded, dir.path() / "again.ckpt");
  std::ifstream f1(dir.path() / "m.ckpt", std::ios::binary), f2(dir.path() / "again.ckpt", std::ios::binary);
  const std::string s1((std::istreambuf_iterator<char>(f1)), {}), s2((std::istreambuf_iterator<char>(f2)), {});
  EXPECT_EQ(s1, s2);
}

TEST(Checkpoint, HeaderLayout) {
  Checkpoint c;
  c.metadata["k"] = "v";
  c.tensors.push_back({"a", Tensor({2}, std::vector<float>{1.0f, -2.0f}), true});
  const auto bytes = encode_checkpoint(c);
  ASSERT_GE(bytes.size(), 9u);
  EXPECT_EQ(bytes[0], 1);
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= static_cast<std::uint64_t>(bytes[1 + i]) << (8 * i);
  ASSERT_EQ(bytes.size(), 9 + len + 8);
  const auto header = nlohmann::json::parse(bytes.begin() + 9, bytes.begin() + 9 + static_cast<long>(len));
  EXPECT_EQ(header["payload_bytes"], 8);
  EXPECT_EQ(header["tensors"][0]["dtype"], "f32");
  // 1.0f little-endian is 00 00 80 3f.
  EXPECT_EQ(bytes[9 + len + 3], 0x3f);
  EXPECT_EQ(bytes[9 + len + 2], 0x80);
}

TEST(Checkpoint, TruncatedPayloadIsFormatError) {
  auto bytes = encode_checkpoint(make_checkpoint(build_model(test::tiny_config(), 1)));
  bytes.resize(bytes.size() - 4);
  EXPECT_THROW(decode_checkpoint(bytes), FormatError);
  bytes.resize(5);
  EXPECT_THROW(decode_checkpoint(bytes), FormatError);
}

TEST(Checkpoint, OverlappingOffsetsNamed) {
  Checkpoint c;
  c.tensors.push_back({"first", Tensor({2}, 1.0f), true});
  c.tensors.push_back({"second", Tensor({2}, 2.0f), true});
  auto bytes = encode_checkpoint(c);
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= static_cast<std::uint64_t>(bytes[1 + i]) << (8 * i);
  auto header = nlohmann::json::parse(bytes.begin() + 9, bytes.begin() + 9 + static_cast<long>(len));
  header["tensors"][1]["offset"] = 4;
  const std::string text = header.dump();
  std::vector<std::uint8_t> out{1};
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(text.size() >> (8 * i)));
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), bytes.begin() + 9 + static_cast<long>(len), bytes.end());
  try {
    decode_checkpoint(out);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("second"), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, ConfigMismatchNamesFirstTensor) {
  const auto ckpt = make_checkpoint(build_model(ModelConfig::desk(), 1));
  const auto vit = ModelConfig::vit_b();
  try {
    model_from_checkpoint(ckpt, &vit);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("encoder.patch_embed.weight"), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, MissingFileIsIoError) {
  EXPECT_THROW(read_checkpoint("/nonexistent/dir/x.ckpt"), IoError);
}

TEST(Checkpoint, TensorFileRoundTrip) {
  test::TempDir dir("tensor");
  Rng rng(1);
  const auto t = test::random_tensor(rng, {9, 5, 7});
  write_tensor_file(t, dir.path() / "t.tensor");
  EXPECT_TRUE(bit_equal(read_tensor_file(dir.path() / "t.tensor"), t));
}

}  // namespace
}  // namespace simmat
