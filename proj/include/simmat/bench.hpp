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
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "simmat/model.hpp"
#include "simmat/tensor.hpp"

namespace simmat {

/// Row-major H×W grid of 0/1 bytes.
struct BinaryMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  BinaryMask() = default;
  BinaryMask(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(h) * w, 0) {}

  std::uint8_t& at(int r, int c) { return data[static_cast<std::size_t>(r) * width + c]; }
  std::uint8_t at(int r, int c) const { return data[static_cast<std::size_t>(r) * width + c]; }
  std::int64_t area() const;
  bool operator==(const BinaryMask&) const = default;
};

/// Row-major H×W integer labels; 0 is background.
struct LabelMap {
  int height = 0;
  int width = 0;
  std::vector<std::int32_t> labels;
};

struct InstanceSample {
  /// [C,H,W]
  Tensor modality;
  std::vector<BinaryMask> instances;
  std::vector<PromptPoint> prompts;
  /// [3,H,W] when available.
  std::optional<Tensor> rgb;
};

/// 4-connected components per class, ordered by class then first pixel in
/// raster order.
std::vector<BinaryMask> semantic_to_instances(const LabelMap& map);

/// Pixel with the largest L1 distance to the nearest background pixel
/// (outside the canvas counts as background). Ties: smallest row, then col.
PromptPoint center_point(const BinaryMask& mask);

/// L1 distance of every pixel to the nearest background pixel; 0 off-mask.
std::vector<std::int32_t> distance_transform(const BinaryMask& mask);

struct PseudoModality {
  /// [C+3,H,W]
  Tensor data;
  /// Output channel i holds channel permutation[i] of concat(rgb, x).
  std::vector<int> permutation;
};

PseudoModality make_pseudo_modality(const Tensor& rgb, const Tensor& x, std::uint64_t seed);
/// Restores concat(rgb, x) from a pseudo modality.
Tensor invert_pseudo_modality(const PseudoModality& p);

struct SceneSpec {
  std::uint64_t seed = 0;
  int image_size = 64;
  int min_shapes = 2;
  int max_shapes = 4;
  bool ellipses = true;
  bool polygons = true;
  /// Shape radius range as a fraction of the image size.
  double min_radius = 0.12;
  double max_radius = 0.24;
  int channels = 9;
  int materials = 6;
  /// Fixes material palettes and the modality renderer across a dataset.
  std::uint64_t mixing_seed = 1;
  double noise = 0.03;

  void validate() const;
};

void to_json(nlohmann::json& j, const SceneSpec& s);
void from_json(const nlohmann::json& j, SceneSpec& s);

/// Renders rgb, a C-channel modality, visible instance masks and their
/// center clicks. Throws GenerationError when shapes cannot be placed.
InstanceSample synth_scene(const SceneSpec& spec);

struct ResizeResult {
  InstanceSample sample;
  int dropped = 0;
};

/// Bilinear for images, nearest for masks; prompts re-snapped to the new
/// masks. `target` must be divisible by `patch_size`.
ResizeResult resize_sample(const InstanceSample& sample, int target, int patch_size = 1);

struct SampleRecord {
  std::string modality;
  std::string rgb;
  std::vector<std::string> masks;
  std::vector<PromptPoint> prompts;
};

/// JSON keys: name, channels, split, seed, samples[{modality, rgb?, masks[],
/// prompts[[row, col]]}]. Paths are relative to the manifest directory.
struct Manifest {
  std::string name;
  int channels = 0;
  std::string split = "train";
  std::uint64_t seed = 0;
  std::vector<SampleRecord> samples;
  /// Directory the relative paths resolve against; not serialized.
  std::filesystem::path root;
};

void to_json(nlohmann::json& j, const Manifest& m);
void from_json(const nlohmann::json& j, Manifest& m);

/// Seeded shuffle, then the first round(ratio·N) samples (at least one).
Manifest split_ratio(const Manifest& manifest, double ratio, std::uint64_t seed);

void write_manifest(const Manifest& manifest, const std::filesystem::path& path);
/// Checks that every referenced file exists.
Manifest read_manifest(const std::filesystem::path& path);

/// Writes tensors and PNG masks under `dir` and returns the manifest (also
/// saved as dir/manifest.json).
Manifest write_dataset(const std::filesystem::path& dir, const std::string& name, const std::string& split,
                       std::uint64_t seed, const std::vector<InstanceSample>& samples);
InstanceSample load_sample(const Manifest& manifest, std::size_t index);
std::vector<InstanceSample> load_samples(const Manifest& manifest);

/// 8-bit grayscale PNG, 0 background and 255 foreground.
void write_mask_png(const BinaryMask& mask, const std::filesystem::path& path);
BinaryMask read_mask_png(const std::filesystem::path& path);

}  // namespace simmat
