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

// Acceptance suite. Prints one PASS/FAIL line per criterion.
//
//   simmat_acceptance [--strict] [--only N[,N...]]
//
// Exit status is 0 when every criterion ran to completion; with --strict it
// is 0 only when every criterion passed.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include "common/helpers.hpp"
#include "common/oracles.hpp"
#include "simmat/gradsuite.hpp"
#include "simmat/peft.hpp"
#include "simmat/trainer.hpp"

namespace simmat {
namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string fixed(double v, int p = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(p) << v;
  return s.str();
}

MatConfig conv_stack(int c, int n) {
  MatConfig m;
  m.channels = c;
  m.layers = n;
  return m;
}

// 1. Transfer-layer parameter table.
Outcome mat_params() {
  const double reported[] = {0.03e3, 5.4e3, 42.3e3, 79.3e3, 116.2e3};
  const auto base = build_model(ModelConfig::desk(), 1);
  Outcome o{true, ""};
  for (int n = 1; n <= 5; ++n) {
    const auto cfg = conv_stack(9, n);
    const auto closed = mat_param_count(cfg);
    Model model = base;
    build_mat(cfg, model, 1);
    const auto built = count_params(model.params(), CountFilter::kAll, "mat.");
    // The table rounds to 0.1 K, so compare at that resolution first.
    const double rel = std::abs(std::round(closed / 100.0) * 100.0 - reported[n - 1]) / reported[n - 1];
    const double rel_raw = std::abs(closed - reported[n - 1]) / reported[n - 1];
    const bool ok = built == closed && std::min(rel, rel_raw) <= 0.005;
    o.passed = o.passed && ok;
    o.detail += "n=" + std::to_string(n) + ":" + std::to_string(closed) + (ok ? "" : "(!)") + " ";
  }
  return o;
}

// 2. Transpose-to-batch FLOPs ratios at C=9 and C=1.
Outcome flops_ratios() {
  Outcome o{true, ""};
  for (const auto& [name, mc] : {std::pair{"desk", ModelConfig::desk()}, std::pair{"vit_b", ModelConfig::vit_b()}}) {
    MatConfig m = conv_stack(9, 2);
    m.variant = MatVariant::kTransposeToBatch;
    const double r9 = flops_report(m, mc, mc.image_size).ratio_vs_conv_stack;
    m.channels = 1;
    const double r1 = flops_report(m, mc, mc.image_size).ratio_vs_conv_stack;
    const bool ok9 = r9 >= 8.0 && r9 <= 9.5, ok1 = r1 >= 0.9 && r1 <= 1.1;
    o.passed = o.passed && ok9 && ok1;
    o.detail += std::string(name) + " C=9 " + fixed(r9, 3) + (ok9 ? "" : "(!)") + " C=1 " + fixed(r1, 3) +
                (ok1 ? "" : "(!)") + "; ";
  }
  return o;
}

// 3. Zero-init neutrality of LoRA and adapter; prompt tuning perturbs.
Outcome neutrality() {
  const auto base = build_model(ModelConfig::desk(), 3);
  double worst = 0.0, prompt_min = 1e300;
  for (auto s : {PeftStrategy::kLora, PeftStrategy::kMlpAdapter, PeftStrategy::kPromptTuning}) {
    Model injected = base;
    PeftConfig pc;
    pc.strategy = s;
    inject(injected, pc);
    for (std::uint64_t i = 0; i < 10; ++i) {
      Rng rng(derive_seed(3, i));
      const Var img(test::random_tensor(rng, {3, 64, 64}));
      const PromptPoint p{rng.uniform_int(0, 63), rng.uniform_int(0, 63), true};
      const double d = test::max_abs_diff(base.forward(img, p).value(), injected.forward(img, p).value());
      if (s == PeftStrategy::kPromptTuning) {
        prompt_min = std::min(prompt_min, d);
      } else {
        worst = std::max(worst, d);
      }
    }
  }
  return {worst < 1e-6 && prompt_min > 0.0,
          "max |lora/adapter - base| " + fixed(worst, 9) + ", min |prompt - base| " + fixed(prompt_min, 6)};
}

// 4. Balanced trainable fractions near 4%.
Outcome fractions() {
  Outcome o{true, ""};
  for (const auto& [name, mc] : {std::pair{"desk", ModelConfig::desk()}, std::pair{"vit_b", ModelConfig::vit_b()}}) {
    o.detail += std::string(name) + ":";
    for (auto s : {PeftStrategy::kLora, PeftStrategy::kMlpAdapter, PeftStrategy::kPromptTuning}) {
      const auto b = balance_to_fraction(mc, s, 0.04);
      const bool ok = b.fraction >= 0.03 && b.fraction <= 0.05;
      o.passed = o.passed && ok;
      o.detail += " " + to_string(s) + "(" + std::to_string(b.knob) + ")=" + fixed(b.fraction) + (ok ? "" : "(!)");
    }
    o.detail += "; ";
  }
  return o;
}

// 5. Central-difference gradient suite on three seeds.
Outcome gradients() {
  double op_worst = 0.0, pipe_worst = 0.0;
  bool ok = true;
  std::string failing;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    for (const auto& e : run_grad_suite(seed)) {
      const bool pipeline = e.name == "pipeline_32px";
      const double tol = pipeline ? 1e-2 : 1e-3;
      (pipeline ? pipe_worst : op_worst) = std::max(pipeline ? pipe_worst : op_worst, e.max_rel_error);
      if (!(e.max_rel_error < tol)) {
        ok = false;
        failing += " " + e.name + "@" + std::to_string(seed);
      }
    }
  }
  return {ok, "ops max " + fixed(op_worst, 8) + " (<1e-3), pipeline max " + fixed(pipe_worst, 6) + " (<1e-2)" +
                  (failing.empty() ? "" : ", failing:" + failing)};
}

// 6. Instance decomposition and click placement against brute-force oracles.
Outcome benchmark_oracles() {
  Rng rng(2026);
  int bad_maps = 0, bad_masks = 0;
  for (int i = 0; i < 50; ++i) {
    const auto map = oracle::random_label_map(rng, rng.uniform_int(4, 32), rng.uniform_int(4, 32), 4);
    if (semantic_to_instances(map) != oracle::flood_fill_instances(map)) ++bad_maps;
  }
  for (int i = 0; i < 50; ++i) {
    const auto m = oracle::random_mask(rng, rng.uniform_int(3, 32), rng.uniform_int(3, 32));
    const auto p = center_point(m);
    if (p != oracle::brute_center(m) || !m.at(p.row, p.col)) ++bad_masks;
  }
  return {bad_maps == 0 && bad_masks == 0,
          "label maps mismatched " + std::to_string(bad_maps) + "/50, masks mismatched " + std::to_string(bad_masks) + "/50"};
}

MatConfig identity() {
  MatConfig m;
  m.variant = MatVariant::kIdentity;
  m.channels = 3;
  return m;
}

std::vector<InstanceSample> scenes(std::uint64_t first, int count, int channels, bool rgb, int size = 64) {
  std::vector<InstanceSample> out;
  for (int i = 0; i < count; ++i) {
    SceneSpec s;
    s.seed = first + static_cast<std::uint64_t>(i);
    s.channels = channels;
    auto sample = synth_scene(s);
    if (rgb) sample.modality = *sample.rgb;
    if (size != s.image_size) sample = resize_sample(sample, size, 8).sample;
    out.push_back(std::move(sample));
  }
  return out;
}

// 7. mIoU against independent recomputation.
Outcome metric_oracle() {
  const auto mc = test::tiny_config();
  double worst = 0.0;
  for (std::uint64_t set = 0; set < 20; ++set) {
    const auto model = build_model(mc, 500 + set);
    const auto data = scenes(7000 + set * 10, 3, 3, true, 32);
    const auto metrics = evaluate(model, identity(), data);
    double sum = 0.0;
    int count = 0;
    for (const auto& s : data) {
      const auto logits = predict_instances(model, identity(), s);
      for (std::size_t i = 0; i < s.instances.size(); ++i, ++count) {
        sum += oracle::iou(binarize(logits[i]), s.instances[i]);
      }
    }
    worst = std::max(worst, std::abs(metrics.miou - sum / count));
  }
  return {worst <= 1e-9, "max |mIoU - recomputed| " + fixed(worst, 12) + " over 20 sets"};
}

// 8. Desk-scale transfer experiment.
Outcome transfer_experiment() {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  const auto rgb_train = scenes(0, 400, 9, true), rgb_val = scenes(400, 50, 9, true);
  auto base = build_model(ModelConfig::desk(), 1);
  TrainConfig pre;
  pre.epochs = 30;
  pre.base_lr = 1e-3;
  pre.resize = 64;
  pre.seed = 0;
  train(base, identity(), rgb_train, rgb_val, pre);
  const double pre_miou = evaluate(base, identity(), rgb_val).miou;
  const auto pretrained = make_checkpoint(base);
  std::cerr << "  pretrain val mIoU " << fixed(pre_miou) << " after "
            << fixed(std::chrono::duration<double>(clock::now() - t0).count(), 1) << " s\n";

  const auto train_set = scenes(100000, 100, 9, false), val_set = scenes(100100, 50, 9, false);
  auto run = [&](MatVariant variant, PeftStrategy strategy, std::uint64_t seed) {
    MatConfig mat;
    mat.variant = variant;
    Model model = variant == MatVariant::kScratchPatchEmbed ? build_model(ModelConfig::desk(), derive_seed(seed, "scratch"))
                                                            : model_from_checkpoint(pretrained);
    model.peft() = PeftState{};
    PeftConfig pc;
    pc.strategy = strategy;
    if (strategy == PeftStrategy::kLora) pc.rank = balance_to_fraction(model.config(), strategy, 0.04).knob;
    inject(model, pc);
    build_mat(mat, model, derive_seed(seed, "mat"));
    TrainConfig tc;
    tc.epochs = 20;
    tc.base_lr = 1e-3;
    tc.resize = 64;
    tc.seed = seed;
    tc.eval_every = 20;
    train(model, mat, train_set, val_set, tc);
    const double m = evaluate(model, mat, val_set).miou;
    std::cerr << "  " << to_string(variant) << " + " << to_string(strategy) << " seed " << seed << ": " << fixed(m)
              << "\n";
    return m;
  };
  auto median3 = [&](MatVariant v, PeftStrategy s) {
    std::vector<double> r;
    for (std::uint64_t seed : {1u, 2u, 3u}) r.push_back(run(v, s, seed));
    std::sort(r.begin(), r.end());
    return r[1];
  };
  const double conv = median3(MatVariant::kConvStack, PeftStrategy::kLora);
  const double scratch = median3(MatVariant::kScratchPatchEmbed, PeftStrategy::kFullFinetuning);
  const double linear = median3(MatVariant::kLinearProjection, PeftStrategy::kLora);
  const bool gate = pre_miou >= 0.7, a = conv - scratch >= 0.10, b = conv >= linear;
  const double minutes = std::chrono::duration<double>(clock::now() - t0).count() / 60.0;
  return {gate && a && b, "pretrain " + fixed(pre_miou) + (gate ? "" : "(!)") + "; medians conv-stack+lora " +
                              fixed(conv) + ", scratch " + fixed(scratch) + ", linear+lora " + fixed(linear) +
                              "; gap " + fixed(conv - scratch) + (a ? "" : "(!)") + (b ? "" : " order(!)") + "; " +
                              fixed(minutes, 1) + " min"};
}

// 9. Determinism, frozen integrity and checkpoint round trip.
Outcome determinism() {
  const auto data = scenes(9000, 4, 4, false, 32), val = scenes(9100, 2, 4, false, 32);
  bool frozen_ok = true;
  auto run = [&] {
    auto model = build_model(test::tiny_config(), 9);
    PeftConfig pc;
    pc.rank = 2;
    inject(model, pc);
    MatConfig mat = conv_stack(4, 2);
    mat.hidden = 8;
    build_mat(mat, model, 9);
    const auto before = model;
    TrainConfig tc;
    tc.epochs = 3;
    tc.base_lr = 1e-3;
    tc.resize = 32;
    tc.seed = 9;
    train(model, mat, data, val, tc);
    for (const auto& p : model.params().items()) {
      if (!p.trainable && !bit_equal(p.var.value(), before.params().get(p.name).value())) frozen_ok = false;
    }
    return encode_checkpoint(make_transfer_checkpoint(model, mat));
  };
  const auto a = run(), b = run();
  const auto model = model_from_checkpoint(decode_checkpoint(a));
  const bool round_trip = encode_checkpoint(make_checkpoint(model)) == encode_checkpoint(make_checkpoint(model_from_checkpoint(make_checkpoint(model))));
  test::TempDir dir("accept");
  save_checkpoint(model, dir.path() / "m.ckpt");
  const auto reloaded = load_checkpoint(dir.path() / "m.ckpt");
  bool file_ok = reloaded.params().size() == model.params().size();
  for (const auto& p : model.params().items()) file_ok = file_ok && bit_equal(p.var.value(), reloaded.params().get(p.name).value());
  const bool same = a == b;
  return {same && frozen_ok && round_trip && file_ok,
          std::string("same-seed checkpoints ") + (same ? "identical" : "DIFFER") + ", frozen params " +
              (frozen_ok ? "untouched" : "CHANGED") + ", round trip " + (round_trip && file_ok ? "exact" : "LOSSY")};
}

// 10. Default recipe values and schedule.
Outcome recipe() {
  const nlohmann::json j = TrainConfig{};
  const bool values = j["optimizer"] == "adam" && j["adam_betas"] == nlohmann::json({0.9, 0.999}) &&
                      j["batch_size"] == 4 && j["epochs"] == 50 &&
                      j["lr_grid"] == nlohmann::json({3e-6, 1e-5, 3e-5, 1e-4, 3e-4, 1e-3, 3e-3}) &&
                      j["step_size_epochs"] == 10 && j["gamma"] == 0.5 && j["resize"] == nlohmann::json({1024, 1024});
  const auto s = TrainConfig{}.schedule();
  bool halves = true;
  for (int e = 1; e < 50; ++e) {
    const double ratio = lr_at_epoch(s, e) / lr_at_epoch(s, e - 1);
    halves = halves && (e % 10 == 0 ? ratio == 0.5 : ratio == 1.0);
  }
  return {values && halves, j.dump()};
}

}  // namespace
}  // namespace simmat

int main(int argc, char** argv) {
  using namespace simmat;
  bool strict = false;
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--strict") == 0) {
      strict = true;
    } else if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string tok; std::getline(ss, tok, ',');) only.insert(std::stoi(tok));
    } else {
      std::cerr << "usage: simmat_acceptance [--strict] [--only N[,N...]]\n";
      return 2;
    }
  }
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"transfer-layer parameter table", mat_params},
      {"transpose-to-batch FLOPs ratios", flops_ratios},
      {"zero-init neutrality", neutrality},
      {"balanced trainable fraction", fractions},
      {"gradient suite", gradients},
      {"benchmark construction oracles", benchmark_oracles},
      {"mIoU recomputation oracle", metric_oracle},
      {"desk-scale transfer experiment", transfer_experiment},
      {"determinism and integrity", determinism},
      {"training recipe defaults", recipe},
  };
  int passed = 0, failed = 0, crashed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
      ++crashed;
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    (o.passed ? passed : failed)++;
    std::cout << (o.passed ? "PASS" : "FAIL") << " [" << id << "] " << criteria[i].first << " (" << fixed(secs, 1)
              << " s): " << o.detail << std::endl;
  }
  std::cout << "acceptance: " << passed << " passed, " << failed << " failed" << std::endl;
  if (crashed > 0) return 1;
  return strict && failed > 0 ? 1 : 0;
}
