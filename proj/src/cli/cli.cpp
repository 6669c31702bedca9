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

#include "simmat/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "simmat/gradsuite.hpp"
#include "simmat/peft.hpp"
#include "simmat/rng.hpp"
#include "simmat/trainer.hpp"

namespace simmat {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

struct Options {
  std::string command;
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  bool json_output = false;
  std::string kind;
  std::string peft_override;
  std::string variant_override;
};

struct Context {
  Options opt;
  json config = json::object();
  std::uint64_t seed = 0;
  std::ostream& out;
  std::ostream& err;
};

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  try {
    auto j = json::parse(in);
    if (!j.is_object()) throw ConfigError("config '" + path + "' is not a JSON object");
    return j;
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
}

// --seed, then SIMMAT_SEED, then the config's "seed", then 0.
std::uint64_t resolve_seed(const Options& opt, const json& config) {
  if (opt.seed) return *opt.seed;
  if (const char* env = std::getenv("SIMMAT_SEED"); env && *env) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw ConfigError(std::string("SIMMAT_SEED is not an integer: '") + env + "'");
    }
  }
  return config.value("seed", std::uint64_t{0});
}

template <class T>
T section(const json& config, const char* key) {
  try {
    return config.contains(key) ? config.at(key).get<T>() : T{};
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config section '") + key + "': " + e.what());
  }
}

std::string required_string(const json& config, const char* key) {
  if (!config.contains(key) || !config.at(key).is_string()) {
    throw ConfigError(std::string("config needs string field '") + key + "'");
  }
  return config.at(key).get<std::string>();
}

fs::path require_out(const Context& ctx) {
  if (ctx.opt.out_dir.empty()) throw ConfigError(ctx.opt.command + " needs --out");
  std::error_code ec;
  fs::create_directories(ctx.opt.out_dir, ec);
  if (ec) throw IoError("cannot create output directory '" + ctx.opt.out_dir + "': " + ec.message());
  return ctx.opt.out_dir;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write '" + path.string() + "'");
  f << j.dump(2) << '\n';
}

void snapshot(const Context& ctx, const json& resolved) {
  if (ctx.opt.out_dir.empty()) return;
  write_json(fs::path(ctx.opt.out_dir) / "resolved_config.json", resolved);
}

void emit(const Context& ctx, const json& machine, const std::string& human) {
  if (ctx.opt.json_output) {
    ctx.out << machine.dump(2) << '\n';
  } else {
    ctx.out << human;
  }
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision) << v;
  return s.str();
}

// ---------------------------------------------------------------------------
// synth

int cmd_synth(Context& ctx) {
  const auto& c = ctx.config;
  SceneSpec scene = section<SceneSpec>(c, "scene");
  scene.channels = c.value("channels", scene.channels);
  scene.image_size = c.value("image_size", scene.image_size);
  const std::string source = c.value("source", std::string("modality"));
  const int n_train = c.value("train", 100), n_val = c.value("val", 20);
  const std::string name = c.value("name", std::string("synthetic"));
  if (source != "modality" && source != "rgb" && source != "pseudo") {
    throw ConfigError("synth: source must be modality, rgb or pseudo");
  }
  if (n_train < 0 || n_val < 0) throw ConfigError("synth: sample counts must be >= 0");
  scene.validate();
  const auto out = require_out(ctx);
  json resolved = c;
  resolved["seed"] = ctx.seed;
  resolved["scene"] = scene;
  snapshot(ctx, resolved);

  std::vector<int> permutation;
  auto make = [&](std::uint64_t split_seed, int count) {
    std::vector<InstanceSample> samples;
    for (int i = 0; i < count; ++i) {
      SceneSpec s = scene;
      s.seed = derive_seed(split_seed, static_cast<std::uint64_t>(i));
      auto sample = synth_scene(s);
      if (source == "rgb") {
        sample.modality = *sample.rgb;
      } else if (source == "pseudo") {
        auto p = make_pseudo_modality(*sample.rgb, sample.modality, ctx.seed);
        sample.modality = std::move(p.data);
        permutation = p.permutation;
      }
      samples.push_back(std::move(sample));
    }
    return samples;
  };
  const auto train = make(derive_seed(ctx.seed, "train"), n_train);
  const auto val = make(derive_seed(ctx.seed, "val"), n_val);
  const auto mt = write_dataset(out / "train", name, "train", ctx.seed, train);
  const auto mv = write_dataset(out / "val", name, "val", ctx.seed, val);
  const int channels = source == "rgb" ? 3 : (source == "pseudo" ? scene.channels + 3 : scene.channels);
  if (source == "pseudo") write_json(out / "pseudo_permutation.json", json{{"permutation", permutation}});
  json result = {{"train_manifest", (out / "train" / "manifest.json").string()},
                 {"val_manifest", (out / "val" / "manifest.json").string()},
                 {"channels", channels},
                 {"train", mt.samples.size()},
                 {"val", mv.samples.size()}};
  emit(ctx, result,
       "wrote " + std::to_string(mt.samples.size()) + " train + " + std::to_string(mv.samples.size()) +
           " val samples (" + std::to_string(channels) + " channels) to " + out.string() + "\n");
  return kExitOk;
}

// ---------------------------------------------------------------------------
// shared training helpers

std::vector<InstanceSample> load_split(const json& c, const char* key, int resize, int patch) {
  const auto manifest = read_manifest(required_string(c, key));
  auto samples = load_samples(manifest);
  for (auto& s : samples) {
    if (s.modality.dim(1) != resize || s.modality.dim(2) != resize) s = resize_sample(s, resize, patch).sample;
  }
  return samples;
}

TrainConfig train_config(const Context& ctx, const ModelConfig& mc) {
  TrainConfig tc = section<TrainConfig>(ctx.config, "train");
  tc.seed = ctx.seed;
  tc.validate();
  if (tc.resize != mc.image_size) {
    throw ConfigError("train.resize " + std::to_string(tc.resize) + " differs from model image_size " +
                      std::to_string(mc.image_size));
  }
  return tc;
}

json history_json(const std::vector<EpochRecord>& history) {
  json h = json::array();
  for (const auto& r : history) h.push_back(r);
  return h;
}

TrainIo progress(const Context& ctx, const fs::path& out) {
  TrainIo io;
  io.out_dir = out;
  if (!ctx.opt.json_output) {
    io.on_epoch = [&ctx](const EpochRecord& r) {
      ctx.err << "epoch " << r.epoch << " lr " << r.lr << " loss " << fmt(r.train_loss, 5);
      if (r.val_miou) ctx.err << " val_miou " << fmt(*r.val_miou);
      ctx.err << '\n';
    };
  }
  return io;
}

// ---------------------------------------------------------------------------
// pretrain

int cmd_pretrain(Context& ctx) {
  const auto& c = ctx.config;
  std::optional<Model> model;
  if (c.contains("resume")) {
    const auto ckpt = read_checkpoint(required_string(c, "resume"));
    model.emplace(model_from_checkpoint(ckpt));
  } else {
    const auto mc = section<ModelConfig>(c, "model");
    mc.validate();
    model.emplace(build_model(mc, ctx.seed));
  }
  const auto& mc = model->config();
  auto tc = train_config(ctx, mc);
  int start_epoch = 0;
  if (c.contains("resume")) {
    const auto ckpt = read_checkpoint(required_string(c, "resume"));
    if (auto it = ckpt.metadata.find("epoch"); it != ckpt.metadata.end()) start_epoch = std::stoi(it->second);
  }
  tc.start_epoch = start_epoch;
  const auto train_set = load_split(c, "train_manifest", tc.resize, mc.patch_size);
  const auto val_set = c.contains("val_manifest") ? load_split(c, "val_manifest", tc.resize, mc.patch_size)
                                                  : std::vector<InstanceSample>{};
  for (const auto* set : {&train_set, &val_set}) {
    for (const auto& s : *set) {
      if (s.modality.dim(0) != 3) {
        throw ConfigError("pretrain needs an RGB (3-channel) dataset, got " + std::to_string(s.modality.dim(0)) +
                          " channels");
      }
    }
  }
  const auto out = require_out(ctx);
  json resolved = c;
  resolved["seed"] = ctx.seed;
  resolved["model"] = mc;
  resolved["train"] = tc;
  snapshot(ctx, resolved);

  MatConfig identity;
  identity.variant = MatVariant::kIdentity;
  identity.channels = 3;
  const auto result = train(*model, identity, train_set, val_set, tc, progress(ctx, out));
  const auto metrics = evaluate(*model, identity, val_set);
  write_json(out / "metrics.json", metrics);
  emit(ctx, {{"final_val_miou", metrics.miou}, {"best_val_miou", result.best_val_miou},
             {"checkpoint", (out / "final.ckpt").string()}, {"history", history_json(result.history)}},
       "final val mIoU " + fmt(metrics.miou) + " (best " + fmt(result.best_val_miou) + "), checkpoint " +
           (out / "final.ckpt").string() + "\n");
  return kExitOk;
}

// ---------------------------------------------------------------------------
// transfer / sweep

struct TransferSetup {
  MatConfig mat;
  PeftConfig peft;
  ModelConfig model_config;
  std::optional<Checkpoint> pretrained;
};

TransferSetup transfer_setup(const Context& ctx) {
  const auto& c = ctx.config;
  TransferSetup s;
  s.mat = section<MatConfig>(c, "mat");
  s.peft = section<PeftConfig>(c, "peft");
  if (!ctx.opt.variant_override.empty()) s.mat.variant = mat_variant_from_string(ctx.opt.variant_override);
  if (!ctx.opt.peft_override.empty()) s.peft.strategy = peft_strategy_from_string(ctx.opt.peft_override);
  s.mat.validate();
  s.peft.validate();
  if (c.contains("pretrained")) {
    s.pretrained = read_checkpoint(required_string(c, "pretrained"));
    s.model_config = model_from_checkpoint(*s.pretrained).config();
  } else if (s.mat.variant == MatVariant::kScratchPatchEmbed) {
    s.model_config = section<ModelConfig>(c, "model");
  } else {
    throw ConfigError("transfer layer '" + to_string(s.mat.variant) + "' needs a 'pretrained' checkpoint");
  }
  if (c.value("balance", false)) {
    s.peft.train_decoder = c.value("balance_train_decoder", false) ? true : s.peft.train_decoder;
    const auto b = balance_to_fraction(s.model_config, s.peft.strategy, s.peft.target_fraction,
                                       c.value("balance_train_decoder", false));
    if (s.peft.strategy == PeftStrategy::kLora) s.peft.rank = b.knob;
    if (s.peft.strategy == PeftStrategy::kMlpAdapter) s.peft.bottleneck = b.knob;
    if (s.peft.strategy == PeftStrategy::kPromptTuning) s.peft.tokens_per_block = b.knob;
  }
  return s;
}

// Scratch runs start from random weights; every other variant from the
// pretrained checkpoint.
std::pair<Model, InjectionReport> transfer_model(const TransferSetup& s, std::uint64_t seed) {
  Model model = s.mat.variant == MatVariant::kScratchPatchEmbed
                    ? build_model(s.model_config, derive_seed(seed, "scratch"))
                    : model_from_checkpoint(*s.pretrained);
  model.peft() = PeftState{};
  model.params().set_trainable_prefix("", true);
  inject(model, s.peft);
  build_mat(s.mat, model, derive_seed(seed, "mat"));
  if (!s.peft.train_mat) model.params().set_trainable_prefix("mat.", false);
  return {std::move(model), injection_report(model)};
}

std::vector<InstanceSample> apply_ratio(const Context& ctx, const json& c, const char* key, int resize, int patch) {
  auto manifest = read_manifest(required_string(c, key));
  const double ratio = c.value("train_ratio", 1.0);
  if (ratio != 1.0) manifest = split_ratio(manifest, ratio, ctx.seed);
  auto samples = load_samples(manifest);
  for (auto& s : samples) {
    if (s.modality.dim(1) != resize || s.modality.dim(2) != resize) s = resize_sample(s, resize, patch).sample;
  }
  return samples;
}

void check_dataset_channels(const MatConfig& mat, const std::vector<InstanceSample>& samples, const char* what) {
  if (!samples.empty() && samples.front().modality.dim(0) != mat.channels) {
    throw ConfigError(std::string(what) + " has " + std::to_string(samples.front().modality.dim(0)) +
                      " channels, transfer layer expects " + std::to_string(mat.channels));
  }
}

int cmd_transfer(Context& ctx) {
  const auto& c = ctx.config;
  const auto setup = transfer_setup(ctx);
  auto tc = train_config(ctx, setup.model_config);
  const auto train_set = apply_ratio(ctx, c, "train_manifest", tc.resize, setup.model_config.patch_size);
  const auto val_set = load_split(c, "val_manifest", tc.resize, setup.model_config.patch_size);
  check_dataset_channels(setup.mat, train_set, "training set");
  check_dataset_channels(setup.mat, val_set, "validation set");
  const auto out = require_out(ctx);
  auto [model, report] = transfer_model(setup, ctx.seed);
  json resolved = c;
  resolved["seed"] = ctx.seed;
  resolved["mat"] = setup.mat;
  resolved["peft"] = setup.peft;
  resolved["model"] = setup.model_config;
  resolved["train"] = tc;
  resolved["injection_report"] = report;
  snapshot(ctx, resolved);

  const auto result = train(model, setup.mat, train_set, val_set, tc, progress(ctx, out));
  const auto metrics = evaluate(model, setup.mat, val_set);
  write_json(out / "metrics.json", metrics);
  emit(ctx, {{"metrics", metrics}, {"injection_report", report}, {"best_val_miou", result.best_val_miou}},
       to_string(setup.mat.variant) + " + " + to_string(setup.peft.strategy) + ": val mIoU " + fmt(metrics.miou) +
           " over " + std::to_string(metrics.instance_count) + " instances, trainable fraction " +
           fmt(report.trainable_fraction) + "\n");
  return kExitOk;
}

int cmd_sweep(Context& ctx) {
  const auto& c = ctx.config;
  const auto setup = transfer_setup(ctx);
  auto tc = train_config(ctx, setup.model_config);
  const auto train_set = apply_ratio(ctx, c, "train_manifest", tc.resize, setup.model_config.patch_size);
  const auto val_set = load_split(c, "val_manifest", tc.resize, setup.model_config.patch_size);
  check_dataset_channels(setup.mat, train_set, "training set");
  check_dataset_channels(setup.mat, val_set, "validation set");
  json resolved = c;
  resolved["seed"] = ctx.seed;
  resolved["mat"] = setup.mat;
  resolved["peft"] = setup.peft;
  resolved["train"] = tc;
  if (!ctx.opt.out_dir.empty()) require_out(ctx);
  snapshot(ctx, resolved);
  const std::uint64_t seed = ctx.seed;
  ModelFactory factory = [&setup, seed] {
    auto built = transfer_model(setup, seed);
    return std::make_pair(std::move(built.first), setup.mat);
  };
  const auto result = lr_sweep(factory, train_set, val_set, tc.lr_grid, tc, ctx.opt.jobs);
  if (!ctx.opt.out_dir.empty()) write_json(fs::path(ctx.opt.out_dir) / "sweep.json", result);
  std::string human;
  for (const auto& row : result.table) {
    human += "lr " + fmt(row.lr, 7) + "  " + (row.val_miou ? "val mIoU " + fmt(*row.val_miou) : "failed: " + row.error) + "\n";
  }
  human += "best lr " + fmt(result.best_lr, 7) + "\n";
  emit(ctx, result, human);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval

int cmd_eval(Context& ctx) {
  const auto& c = ctx.config;
  const auto ckpt = read_checkpoint(required_string(c, "checkpoint"));
  std::optional<ModelConfig> expected;
  if (c.contains("model")) expected = section<ModelConfig>(c, "model");
  Model model = model_from_checkpoint(ckpt, expected ? &*expected : nullptr);
  MatConfig mat;
  if (ckpt.metadata.count("mat")) {
    mat = restore_mat(ckpt, model);
  } else {
    mat.variant = MatVariant::kIdentity;
    mat.channels = 3;
  }
  if (c.contains("mat") && section<MatConfig>(c, "mat") != mat) {
    throw ConfigError("eval: config transfer layer differs from the checkpoint's");
  }
  const auto manifest = read_manifest(required_string(c, "manifest"));
  if (manifest.channels != mat.channels) {
    throw ConfigError("eval: dataset has " + std::to_string(manifest.channels) + " channels, checkpoint expects " +
                      std::to_string(mat.channels));
  }
  auto samples = load_samples(manifest);
  for (auto& s : samples) {
    if (s.modality.dim(1) != model.config().image_size) {
      s = resize_sample(s, model.config().image_size, model.config().patch_size).sample;
    }
  }
  if (!ctx.opt.out_dir.empty()) {
    require_out(ctx);
    snapshot(ctx, c);
  }
  const auto metrics = evaluate(model, mat, samples);
  if (!ctx.opt.out_dir.empty()) write_json(fs::path(ctx.opt.out_dir) / "metrics.json", metrics);
  emit(ctx, metrics,
       "mIoU " + fmt(metrics.miou) + " over " + std::to_string(metrics.instance_count) + " instances\n");
  return kExitOk;
}

// ---------------------------------------------------------------------------
// gradcheck

int cmd_gradcheck(Context& ctx) {
  std::vector<std::uint64_t> seeds;
  if (ctx.opt.seed) {
    seeds = {*ctx.opt.seed};
  } else {
    seeds = ctx.config.value("seeds", std::vector<std::uint64_t>{1, 2, 3});
  }
  if (!ctx.opt.out_dir.empty()) {
    require_out(ctx);
    snapshot(ctx, {{"seeds", seeds}});
  }
  json entries = json::array();
  bool ok = true;
  double worst = 0.0;
  std::string human;
  for (auto seed : seeds) {
    for (const auto& e : run_grad_suite(seed)) {
      entries.push_back(e);
      ok = ok && e.passed;
      worst = std::max(worst, e.max_rel_error);
      human += (e.passed ? "pass " : "FAIL ") + e.name + " seed " + std::to_string(seed) + " rel err " +
               fmt(e.max_rel_error, 8) + " (tol " + fmt(e.tolerance, 4) + ")\n";
    }
  }
  const json report = {{"passed", ok}, {"max_rel_error", worst}, {"checks", entries}};
  if (!ctx.opt.out_dir.empty()) write_json(fs::path(ctx.opt.out_dir) / "gradcheck.json", report);
  emit(ctx, report, human + (ok ? "all gradient checks passed\n" : "gradient checks FAILED\n"));
  return ok ? kExitOk : kExitRuntime;
}

// ---------------------------------------------------------------------------
// report

ModelConfig report_model(const json& c) {
  const std::string preset = c.value("preset", std::string("desk"));
  ModelConfig mc;
  if (preset == "desk") {
    mc = ModelConfig::desk();
  } else if (preset == "vit_b") {
    mc = ModelConfig::vit_b();
  } else {
    throw ConfigError("report: preset must be desk or vit_b");
  }
  if (c.contains("model")) mc = section<ModelConfig>(c, "model");
  mc.validate();
  return mc;
}

int cmd_report(Context& ctx) {
  const auto& c = ctx.config;
  const std::string kind = !ctx.opt.kind.empty() ? ctx.opt.kind : c.value("kind", std::string());
  const auto mc = report_model(c);
  MatConfig base = section<MatConfig>(c, "mat");
  if (!c.contains("mat")) base.channels = 9;
  if (kind == "params") {
    json grid = json::array();
    std::string human = "transfer layer parameters (C=" + std::to_string(base.channels) + ", k=" +
                        std::to_string(base.kernel) + ", d=" + std::to_string(base.hidden) + ")\n";
    for (int n : c.value("layers", std::vector<int>{1, 2, 3, 4, 5})) {
      MatConfig m = base;
      m.variant = MatVariant::kConvStack;
      m.layers = n;
      std::int64_t enumerated = 0;
      for (const auto& s : mat_param_specs(m, mc)) enumerated += shape_numel(s.shape);
      grid.push_back({{"layers", n}, {"params", mat_param_count(m)}, {"enumerated", enumerated}});
      human += "  n=" + std::to_string(n) + "  " + std::to_string(mat_param_count(m)) + "\n";
    }
    json prefixes = json::object();
    for (const auto& s : model_param_specs(mc)) {
      const auto prefix = s.name.substr(0, s.name.find('.'));
      prefixes[prefix] = prefixes.value(prefix, std::int64_t{0}) + shape_numel(s.shape);
    }
    const auto peft = section<PeftConfig>(c, "peft");
    const bool with_decoder = c.value("balance_train_decoder", false);
    json balance = json::object();
    for (auto st : {PeftStrategy::kLora, PeftStrategy::kMlpAdapter, PeftStrategy::kPromptTuning,
                    PeftStrategy::kFullFinetuning}) {
      try {
        const auto b = balance_to_fraction(mc, st, peft.target_fraction, with_decoder);
        balance[to_string(st)] = {{"knob", b.knob}, {"trainable_fraction", b.fraction}};
        human += "  " + to_string(st) + ": knob " + std::to_string(b.knob) + ", fraction " + fmt(b.fraction) + "\n";
      } catch (const InfeasibleError& e) {
        balance[to_string(st)] = {{"error", e.what()}};
        human += "  " + to_string(st) + ": " + e.what() + "\n";
      }
    }
    human += "model parameters:";
    for (const auto& [k, v] : prefixes.items()) human += " " + k + "=" + std::to_string(v.get<std::int64_t>());
    human += "\n";
    emit(ctx, {{"kind", "params"}, {"mat_grid", grid}, {"model_prefixes", prefixes},
               {"target_fraction", peft.target_fraction}, {"balance", balance}},
         human);
    return kExitOk;
  }
  if (kind == "flops") {
    const int resolution = c.value("resolution", mc.image_size);
    json rows = json::array();
    std::string human;
    for (int ch : c.value("channels", std::vector<int>{1, 3, 9})) {
      for (auto v : {MatVariant::kConvStack, MatVariant::kLinearProjection, MatVariant::kRandomInitEmbed,
                     MatVariant::kTransposeToBatch}) {
        MatConfig m = base;
        m.variant = v;
        m.channels = ch;
        const auto r = flops_report(m, mc, resolution);
        json row = r;
        row["variant"] = to_string(v);
        row["channels"] = ch;
        rows.push_back(row);
        human += "C=" + std::to_string(ch) + " " + to_string(v) + ": " + std::to_string(r.total()) + " MACs, ratio " +
                 fmt(r.ratio_vs_conv_stack, 3) + "\n";
      }
    }
    emit(ctx, {{"kind", "flops"}, {"resolution", resolution}, {"model", mc}, {"results", rows}}, human);
    return kExitOk;
  }
  throw ConfigError("report: unknown kind '" + kind + "' (expected params or flops)");
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const InputError*>(&e) ||
      dynamic_cast<const IoError*>(&e) || dynamic_cast<const FormatError*>(&e) ||
      dynamic_cast<const DimensionError*>(&e)) {
    return kExitConfig;
  }
  return kExitRuntime;
}

std::string error_kind(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return "config";
  if (dynamic_cast<const InputError*>(&e)) return "input";
  if (dynamic_cast<const IoError*>(&e)) return "io";
  if (dynamic_cast<const FormatError*>(&e)) return "format";
  if (dynamic_cast<const DimensionError*>(&e)) return "dimension";
  if (dynamic_cast<const NumericError*>(&e)) return "numeric";
  if (dynamic_cast<const InfeasibleError*>(&e)) return "infeasible";
  if (dynamic_cast<const StateError*>(&e)) return "state";
  if (dynamic_cast<const IntegrityError*>(&e)) return "integrity";
  if (dynamic_cast<const GenerationError*>(&e)) return "generation";
  return "runtime";
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Modality transfer for promptable segmentation at desk scale", "simmat"};
  app.require_subcommand(1);
  Options opt;
  std::uint64_t seed_value = 0;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "JSON config file");
    sub->add_option("--out", opt.out_dir, "Output directory");
    sub->add_option("--seed", seed_value, "Master seed (overrides SIMMAT_SEED and the config)");
    sub->add_option("--jobs", opt.jobs, "Parallel sweep workers")->check(CLI::PositiveNumber);
    sub->add_flag("--json", opt.json_output, "Machine-readable JSON on stdout");
  };
  std::vector<CLI::App*> subs;
  for (const auto& [name, help] : std::vector<std::pair<std::string, std::string>>{
           {"synth", "Generate a synthetic dataset"},
           {"pretrain", "Train the base model on RGB"},
           {"transfer", "Transfer a pretrained model to a new modality"},
           {"sweep", "Learning-rate sweep of a transfer run"},
           {"eval", "Evaluate a checkpoint on a dataset"},
           {"gradcheck", "Finite-difference gradient checks"},
           {"report", "Parameter or FLOPs tables"}}) {
    auto* sub = app.add_subcommand(name, help);
    common(sub);
    if (name == "report") sub->add_option("kind", opt.kind, "params or flops");
    if (name == "transfer" || name == "sweep") {
      sub->add_option("--peft", opt.peft_override, "Override peft.strategy");
      sub->add_option("--variant", opt.variant_override, "Override mat.variant");
    }
    subs.push_back(sub);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, er;
    const int code = app.exit(e, o, er);
    out << o.str();
    err << er.str();
    return code == 0 ? kExitOk : kExitConfig;
  }
  for (auto* sub : subs) {
    if (sub->parsed()) {
      opt.command = sub->get_name();
      if (sub->count("--seed")) opt.seed = seed_value;
    }
  }

  try {
    Context ctx{opt, load_config(opt.config_path), 0, out, err};
    ctx.seed = resolve_seed(opt, ctx.config);
    if (opt.command == "synth") return cmd_synth(ctx);
    if (opt.command == "pretrain") return cmd_pretrain(ctx);
    if (opt.command == "transfer") return cmd_transfer(ctx);
    if (opt.command == "sweep") return cmd_sweep(ctx);
    if (opt.command == "eval") return cmd_eval(ctx);
    if (opt.command == "gradcheck") return cmd_gradcheck(ctx);
    if (opt.command == "report") return cmd_report(ctx);
    throw ConfigError("unknown command");
  } catch (const std::exception& e) {
    const int code = exit_code_for(e);
    if (opt.json_output) {
      err << json{{"error", error_kind(e)}, {"message", e.what()}, {"exit_code", code}}.dump() << '\n';
    } else {
      err << "simmat " << opt.command << ": " << error_kind(e) << " error: " << e.what() << '\n';
    }
    return code;
  }
}

}  // namespace simmat
