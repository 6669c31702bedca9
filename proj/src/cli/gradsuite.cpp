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

#include "simmat/gradsuite.hpp"

#include <cmath>
#include <functional>

#include "simmat/gradcheck.hpp"
#include "simmat/mat.hpp"
#include "simmat/ops.hpp"
#include "simmat/peft.hpp"
#include "simmat/rng.hpp"
#include "simmat/trainer.hpp"

namespace simmat {

void to_json(nlohmann::json& j, const GradSuiteEntry& e) {
  j = {{"name", e.name},
       {"seed", e.seed},
       {"max_rel_error", e.max_rel_error},
       {"tolerance", e.tolerance},
       {"passed", e.passed}};
}

namespace {

using D = double;
using DV = BasicVar<D>;
using DT = BasicTensor<D>;
using Closure = GradClosure<D>;

constexpr double kEpsilon = 1e-6;
// Pipeline gradients go down to ~1e-9; a smaller step drowns them in roundoff.
constexpr double kPipelineEpsilon = 1e-5;

DT random(Rng& rng, Shape shape, double scale = 1.0) {
  DT t(std::move(shape));
  for (auto& v : t.storage()) v = rng.normal(0.0, scale);
  return t;
}

// Keeps values away from the kinks of relu so differences stay one-sided-free.
DT away_from_zero(Rng& rng, Shape shape) {
  DT t(std::move(shape));
  for (auto& v : t.storage()) {
    const double u = rng.normal();
    v = (u < 0 ? -1.0 : 1.0) * (0.1 + std::abs(u));
  }
  return t;
}

// Weighting by a fixed random tensor turns sum() into a generic functional.
DV weighted(const DV& out, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "weights"));
  return ops::mul(out, DV(random(rng, out.shape())));
}

struct Case {
  std::string name;
  std::function<std::vector<DT>(Rng&)> inputs;
  std::function<DV(const std::vector<DV>&)> op;
};

std::vector<Case> op_cases() {
  std::vector<Case> c;
  c.push_back({"matmul", [](Rng& r) { return std::vector<DT>{random(r, {3, 4}), random(r, {4, 5})}; },
               [](const std::vector<DV>& x) { return ops::matmul(x[0], x[1]); }});
  c.push_back({"matmul_nt", [](Rng& r) { return std::vector<DT>{random(r, {3, 4}), random(r, {5, 4})}; },
               [](const std::vector<DV>& x) { return ops::matmul_nt(x[0], x[1]); }});
  c.push_back({"linear",
               [](Rng& r) { return std::vector<DT>{random(r, {3, 4}), random(r, {5, 4}), random(r, {5})}; },
               [](const std::vector<DV>& x) { return ops::linear(x[0], x[1], x[2]); }});
  c.push_back({"add", [](Rng& r) { return std::vector<DT>{random(r, {3, 4}), random(r, {3, 4})}; },
               [](const std::vector<DV>& x) { return ops::add(x[0], x[1]); }});
  c.push_back({"sub", [](Rng& r) { return std::vector<DT>{random(r, {3, 4}), random(r, {3, 4})}; },
               [](const std::vector<DV>& x) { return ops::sub(x[0], x[1]); }});
  c.push_back({"mul", [](Rng& r) { return std::vector<DT>{random(r, {3, 4}), random(r, {3, 4})}; },
               [](const std::vector<DV>& x) { return ops::mul(x[0], x[1]); }});
  c.push_back({"scale", [](Rng& r) { return std::vector<DT>{random(r, {3, 4})}; },
               [](const std::vector<DV>& x) { return ops::scale(x[0], 0.7); }});
  c.push_back({"add_row", [](Rng& r) { return std::vector<DT>{random(r, {3, 4}), random(r, {4})}; },
               [](const std::vector<DV>& x) { return ops::add_row(x[0], x[1]); }});
  c.push_back({"relu", [](Rng& r) { return std::vector<DT>{away_from_zero(r, {3, 4})}; },
               [](const std::vector<DV>& x) { return ops::relu(x[0]); }});
  c.push_back({"gelu", [](Rng& r) { return std::vector<DT>{random(r, {3, 4})}; },
               [](const std::vector<DV>& x) { return ops::gelu(x[0]); }});
  c.push_back({"sigmoid", [](Rng& r) { return std::vector<DT>{random(r, {3, 4})}; },
               [](const std::vector<DV>& x) { return ops::sigmoid(x[0]); }});
  c.push_back({"softmax_rows", [](Rng& r) { return std::vector<DT>{random(r, {3, 5})}; },
               [](const std::vector<DV>& x) { return ops::softmax_rows(x[0]); }});
  c.push_back({"layer_norm_rows",
               [](Rng& r) { return std::vector<DT>{random(r, {3, 6}), random(r, {6}), random(r, {6})}; },
               [](const std::vector<DV>& x) { return ops::layer_norm_rows(x[0], x[1], x[2]); }});
  c.push_back({"transpose", [](Rng& r) { return std::vector<DT>{random(r, {3, 4})}; },
               [](const std::vector<DV>& x) { return ops::transpose(x[0]); }});
  c.push_back({"reshape", [](Rng& r) { return std::vector<DT>{random(r, {3, 4})}; },
               [](const std::vector<DV>& x) { return ops::reshape(x[0], {2, 6}); }});
  c.push_back({"slice_rows", [](Rng& r) { return std::vector<DT>{random(r, {5, 3})}; },
               [](const std::vector<DV>& x) { return ops::slice_rows(x[0], 1, 4); }});
  c.push_back({"slice_cols", [](Rng& r) { return std::vector<DT>{random(r, {3, 5})}; },
               [](const std::vector<DV>& x) { return ops::slice_cols(x[0], 2, 5); }});
  c.push_back({"concat_rows", [](Rng& r) { return std::vector<DT>{random(r, {2, 3}), random(r, {4, 3})}; },
               [](const std::vector<DV>& x) { return ops::concat_rows(x); }});
  c.push_back({"concat_cols", [](Rng& r) { return std::vector<DT>{random(r, {3, 2}), random(r, {3, 4})}; },
               [](const std::vector<DV>& x) { return ops::concat_cols(x); }});
  c.push_back({"repeat_channel", [](Rng& r) { return std::vector<DT>{random(r, {3, 4, 4})}; },
               [](const std::vector<DV>& x) { return ops::repeat_channel(x[0], 1, 3); }});
  c.push_back({"patchify", [](Rng& r) { return std::vector<DT>{random(r, {2, 4, 6})}; },
               [](const std::vector<DV>& x) { return ops::patchify(x[0], 2); }});
  c.push_back({"sum", [](Rng& r) { return std::vector<DT>{random(r, {3, 4})}; },
               [](const std::vector<DV>& x) { return ops::sum(ops::mul(x[0], x[0])); }});
  c.push_back({"mean", [](Rng& r) { return std::vector<DT>{random(r, {3, 4})}; },
               [](const std::vector<DV>& x) { return ops::mean(ops::mul(x[0], x[0])); }});
  c.push_back({"mean_of", [](Rng& r) { return std::vector<DT>{random(r, {3, 4}), random(r, {3, 4}), random(r, {3, 4})}; },
               [](const std::vector<DV>& x) { return ops::mean_of(x); }});
  c.push_back({"conv2d",
               [](Rng& r) { return std::vector<DT>{random(r, {2, 6, 6}), random(r, {3, 2, 3, 3}), random(r, {3})}; },
               [](const std::vector<DV>& x) { return ops::conv2d(x[0], x[1], x[2], 1, 1); }});
  c.push_back({"conv2d_strided",
               [](Rng& r) { return std::vector<DT>{random(r, {2, 7, 7}), random(r, {3, 2, 3, 3}), random(r, {3})}; },
               [](const std::vector<DV>& x) { return ops::conv2d(x[0], x[1], x[2], 2, 0); }});
  c.push_back({"conv_transpose2d",
               [](Rng& r) { return std::vector<DT>{random(r, {3, 4, 4}), random(r, {3, 2, 2, 2}), random(r, {2})}; },
               [](const std::vector<DV>& x) { return ops::conv_transpose2d(x[0], x[1], x[2], 2); }});
  c.push_back({"conv_transpose2d_overlap",
               [](Rng& r) { return std::vector<DT>{random(r, {2, 3, 3}), random(r, {2, 2, 3, 3}), random(r, {2})}; },
               [](const std::vector<DV>& x) { return ops::conv_transpose2d(x[0], x[1], x[2], 2); }});
  c.push_back({"multihead_attention",
               [](Rng& r) { return std::vector<DT>{random(r, {4, 8}), random(r, {5, 8}), random(r, {5, 8})}; },
               [](const std::vector<DV>& x) { return ops::multihead_attention(x[0], x[1], x[2], 2); }});
  return c;
}

BinaryMask random_mask(Rng& rng, int h, int w) {
  BinaryMask m(h, w);
  for (auto& v : m.data) v = rng.uniform() < 0.4;
  return m;
}

BinaryMask disk(int size, double cy, double cx, double radius) {
  BinaryMask m(size, size);
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c) m.at(r, c) = (r + 0.5 - cy) * (r + 0.5 - cy) + (c + 0.5 - cx) * (c + 0.5 - cx) <= radius * radius;
  return m;
}

GradSuiteEntry finish(std::string name, std::uint64_t seed, const GradCheckResult& r, double tol) {
  return {std::move(name), seed, r.max_rel_error, tol, r.max_rel_error < tol};
}

}  // namespace

GradSuiteEntry run_pipeline_grad_check(std::uint64_t seed) {
  ModelConfig mc;
  mc.image_size = 32;
  mc.patch_size = 8;
  mc.embed_dim = 16;
  mc.depth = 1;
  mc.heads = 2;
  mc.mlp_ratio = 2.0;
  mc.decoder_dim = 16;
  mc.decoder_depth = 1;
  mc.fourier_bands = 4;
  Model base = build_model(mc, seed);
  PeftConfig pc;
  pc.strategy = PeftStrategy::kLora;
  pc.rank = 2;
  pc.alpha = 2.0;
  inject(base, pc);
  MatConfig mat;
  mat.variant = MatVariant::kConvStack;
  mat.channels = 2;
  mat.layers = 2;
  mat.kernel = 3;
  mat.hidden = 4;
  build_mat(mat, base, seed);
  Rng rng(derive_seed(seed, "pipeline"));
  // Non-zero low-rank factors so every injected path carries gradient.
  for (const char* name : {"encoder.blocks.0.attn.q.lora_b", "encoder.blocks.0.attn.v.lora_b"}) {
    for (auto& v : base.params().get(name).mutable_value().storage()) v = static_cast<float>(rng.normal(0.0, 0.1));
  }
  const BasicModel<D> model = base.cast<D>();
  const std::vector<std::string> names = {"mat.convs.0.weight", "encoder.blocks.0.attn.q.lora_a",
                                          "encoder.blocks.0.attn.v.lora_b", "encoder.pos_embed",
                                          "prompt.label_embed", "decoder.hyper.fc2.weight"};
  std::vector<DT> inputs{random(rng, {2, 32, 32})};
  for (const auto& n : names) inputs.push_back(model.params().get(n).value());
  const auto target = disk(32, 11.0, 13.0, 6.5);
  const PromptPoint click{11, 13, true};
  Closure op = [&](const std::vector<DV>& x) {
    BasicModel<D> m = model;
    for (std::size_t i = 0; i < names.size(); ++i) m.params().get(names[i]) = x[i + 1];
    return focal_dice_loss(simmat_forward(m, mat, x[0], click), target);
  };
  return finish("pipeline_32px", seed, grad_check(op, inputs, kPipelineEpsilon), kPipelineGradTolerance);
}

std::vector<GradSuiteEntry> run_grad_suite(std::uint64_t seed) {
  std::vector<GradSuiteEntry> out;
  for (const auto& c : op_cases()) {
    Rng rng(derive_seed(seed, c.name));
    const auto inputs = c.inputs(rng);
    const auto wseed = derive_seed(seed, c.name + ".w");
    Closure op = [&](const std::vector<DV>& x) { return weighted(c.op(x), wseed); };
    out.push_back(finish(c.name, seed, grad_check(op, inputs, kEpsilon), kOpGradTolerance));
  }
  {
    Rng rng(derive_seed(seed, "focal_dice_loss"));
    const std::vector<DT> inputs{random(rng, {8, 8}, 2.0)};
    const auto target = random_mask(rng, 8, 8);
    Closure op = [&](const std::vector<DV>& x) { return focal_dice_loss(x[0], target); };
    out.push_back(finish("focal_dice_loss", seed, grad_check(op, inputs, kEpsilon), kOpGradTolerance));
  }
  out.push_back(run_pipeline_grad_check(seed));
  return out;
}

}  // namespace simmat
