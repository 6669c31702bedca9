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

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "simmat/bench.hpp"
#include "simmat/rng.hpp"

namespace simmat {

void SceneSpec::validate() const {
  if (image_size < 8) throw ConfigError("scene: image_size must be >= 8");
  if (min_shapes < 1 || max_shapes < min_shapes) throw ConfigError("scene: need 1 <= min_shapes <= max_shapes");
  if (!ellipses && !polygons) throw ConfigError("scene: enable at least one shape kind");
  if (!(min_radius > 0.0 && max_radius >= min_radius && max_radius < 0.5)) {
    throw ConfigError("scene: radius range must satisfy 0 < min <= max < 0.5");
  }
  if (channels < 1) throw ConfigError("scene: channels must be >= 1, got " + std::to_string(channels));
  if (materials < 1) throw ConfigError("scene: materials must be >= 1");
  if (noise < 0.0) throw ConfigError("scene: noise must be non-negative");
}

void to_json(nlohmann::json& j, const SceneSpec& s) {
  j = {{"seed", s.seed},         {"image_size", s.image_size}, {"min_shapes", s.min_shapes},
       {"max_shapes", s.max_shapes}, {"ellipses", s.ellipses},   {"polygons", s.polygons},
       {"min_radius", s.min_radius}, {"max_radius", s.max_radius}, {"channels", s.channels},
       {"materials", s.materials},   {"mixing_seed", s.mixing_seed}, {"noise", s.noise}};
}

void from_json(const nlohmann::json& j, SceneSpec& s) {
  SceneSpec d;
  s.seed = j.value("seed", d.seed);
  s.image_size = j.value("image_size", d.image_size);
  s.min_shapes = j.value("min_shapes", d.min_shapes);
  s.max_shapes = j.value("max_shapes", d.max_shapes);
  s.ellipses = j.value("ellipses", d.ellipses);
  s.polygons = j.value("polygons", d.polygons);
  s.min_radius = j.value("min_radius", d.min_radius);
  s.max_radius = j.value("max_radius", d.max_radius);
  s.channels = j.value("channels", d.channels);
  s.materials = j.value("materials", d.materials);
  s.mixing_seed = j.value("mixing_seed", d.mixing_seed);
  s.noise = j.value("noise", d.noise);
}

namespace {

constexpr int kMaterialFeatures = 4;
constexpr int kPixelFeatures = kMaterialFeatures + 4;
constexpr int kHidden = 24;
constexpr int kPlacementTries = 200;

struct Shape2d {
  bool ellipse = true;
  double cy = 0, cx = 0, radius = 0;
  double a = 0, b = 0, theta = 0;
  std::vector<std::pair<double, double>> poly;  // (y, x)
  int material = 0;
  double brightness = 1.0;

  bool contains(double y, double x) const {
    if (ellipse) {
      const double dy = y - cy, dx = x - cx;
      const double u = dx * std::cos(theta) + dy * std::sin(theta);
      const double v = -dx * std::sin(theta) + dy * std::cos(theta);
      return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
    }
    bool inside = false;
    for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
      const auto [yi, xi] = poly[i];
      const auto [yj, xj] = poly[j];
      if ((yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi) inside = !inside;
    }
    return inside;
  }
};

// Dataset-wide appearance: material palette, features and the modality map.
struct Appearance {
  std::vector<std::array<double, 3>> color;
  std::vector<std::array<double, kMaterialFeatures>> features;
  std::array<double, kMaterialFeatures> background{};
  std::array<double, 3> background_tint{};
  std::vector<double> m1, b1, m2;  // [kHidden, kPixelFeatures], [kHidden], [C, kHidden]

  Appearance(const SceneSpec& s) {
    Rng rng(derive_seed(s.mixing_seed, "appearance"));
    for (int m = 0; m < s.materials; ++m) {
      color.push_back({rng.uniform(0.1, 0.95), rng.uniform(0.1, 0.95), rng.uniform(0.1, 0.95)});
      std::array<double, kMaterialFeatures> f{};
      for (auto& v : f) v = rng.normal();
      features.push_back(f);
    }
    for (auto& v : background) v = rng.normal(0.0, 0.5);
    for (auto& v : background_tint) v = rng.uniform(0.35, 0.65);
    const double s1 = 1.5 / std::sqrt(static_cast<double>(kPixelFeatures));
    const double s2 = 1.5 / std::sqrt(static_cast<double>(kHidden));
    for (int i = 0; i < kHidden * kPixelFeatures; ++i) m1.push_back(rng.normal(0.0, s1));
    for (int i = 0; i < kHidden; ++i) b1.push_back(rng.normal(0.0, 0.3));
    for (int i = 0; i < s.channels * kHidden; ++i) m2.push_back(rng.normal(0.0, s2));
  }
};

// Smooth value noise in roughly [-1, 1] on a coarse lattice.
std::vector<double> value_noise(Rng& rng, int size, int cell) {
  const int n = size / cell + 2;
  std::vector<double> lattice(static_cast<std::size_t>(n) * n);
  for (auto& v : lattice) v = rng.uniform(-1.0, 1.0);
  std::vector<double> out(static_cast<std::size_t>(size) * size);
  auto smooth = [](double t) { return t * t * (3.0 - 2.0 * t); };
  for (int y = 0; y < size; ++y) {
    const double fy = static_cast<double>(y) / cell;
    const int y0 = static_cast<int>(fy);
    const double ty = smooth(fy - y0);
    for (int x = 0; x < size; ++x) {
      const double fx = static_cast<double>(x) / cell;
      const int x0 = static_cast<int>(fx);
      const double tx = smooth(fx - x0);
      auto at = [&](int r, int c) { return lattice[static_cast<std::size_t>(r) * n + c]; };
      const double top = at(y0, x0) + tx * (at(y0, x0 + 1) - at(y0, x0));
      const double bot = at(y0 + 1, x0) + tx * (at(y0 + 1, x0 + 1) - at(y0 + 1, x0));
      out[static_cast<std::size_t>(y) * size + x] = top + ty * (bot - top);
    }
  }
  return out;
}

Shape2d random_shape(Rng& rng, const SceneSpec& s) {
  Shape2d sh;
  const int size = s.image_size;
  sh.radius = rng.uniform(s.min_radius, s.max_radius) * size;
  sh.cy = rng.uniform(sh.radius + 1.0, size - sh.radius - 1.0);
  sh.cx = rng.uniform(sh.radius + 1.0, size - sh.radius - 1.0);
  sh.ellipse = s.ellipses && (!s.polygons || rng.uniform() < 0.5);
  if (sh.ellipse) {
    sh.a = sh.radius * rng.uniform(0.6, 1.0);
    sh.b = sh.radius * rng.uniform(0.6, 1.0);
    sh.theta = rng.uniform(0.0, std::numbers::pi);
  } else {
    const int verts = rng.uniform_int(3, 6);
    std::vector<double> angles;
    for (int i = 0; i < verts; ++i) angles.push_back(rng.uniform(0.0, 2.0 * std::numbers::pi));
    std::sort(angles.begin(), angles.end());
    for (double t : angles) {
      const double r = sh.radius * rng.uniform(0.75, 1.0);
      sh.poly.emplace_back(sh.cy + r * std::sin(t), sh.cx + r * std::cos(t));
    }
  }
  sh.material = rng.uniform_int(0, s.materials - 1);
  sh.brightness = rng.uniform(0.85, 1.15);
  return sh;
}

bool single_component(const BinaryMask& m) {
  LabelMap map{m.height, m.width, std::vector<std::int32_t>(m.data.begin(), m.data.end())};
  return semantic_to_instances(map).size() == 1;
}

}  // namespace

InstanceSample synth_scene(const SceneSpec& spec) {
  spec.validate();
  const int size = spec.image_size;
  const std::size_t plane = static_cast<std::size_t>(size) * size;
  const Appearance look(spec);
  Rng rng(derive_seed(spec.seed, "scene"));
  const int count = rng.uniform_int(spec.min_shapes, spec.max_shapes);

  // Owner map: index of the topmost shape covering each pixel, -1 background.
  std::vector<int> owner(plane, -1);
  std::vector<Shape2d> shapes;
  std::vector<std::int64_t> full_area;
  for (int k = 0; k < count; ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < kPlacementTries && !placed; ++attempt) {
      auto sh = random_shape(rng, spec);
      auto trial = owner;
      std::int64_t area = 0;
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
          if (sh.contains(y + 0.5, x + 0.5)) {
            trial[static_cast<std::size_t>(y) * size + x] = k;
            ++area;
          }
      if (area < 12) continue;
      bool ok = true;
      for (int i = 0; i <= k && ok; ++i) {
        BinaryMask m(size, size);
        for (std::size_t p = 0; p < plane; ++p) m.data[p] = trial[p] == i;
        const auto full = i == k ? area : full_area[static_cast<std::size_t>(i)];
        ok = m.area() >= std::max<std::int64_t>(12, (full * 2) / 5) && single_component(m);
      }
      if (!ok) continue;
      owner = std::move(trial);
      shapes.push_back(std::move(sh));
      full_area.push_back(area);
      placed = true;
    }
    if (!placed) {
      throw GenerationError("scene " + std::to_string(spec.seed) + ": could not place shape " + std::to_string(k) +
                            " after " + std::to_string(kPlacementTries) + " tries");
    }
  }

  const auto bg_noise = value_noise(rng, size, 8);
  const auto texture = value_noise(rng, size, 4);
  Tensor rgb({3, size, size});
  Tensor modality({spec.channels, size, size});
  std::array<double, kPixelFeatures> f{};
  std::array<double, kHidden> hidden{};
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * size + x;
      const int o = owner[p];
      double ny = 0.0, nx = 0.0, shade = 0.0;
      std::array<double, 3> color{};
      if (o < 0) {
        for (int i = 0; i < kMaterialFeatures; ++i) f[static_cast<std::size_t>(i)] = look.background[static_cast<std::size_t>(i)] + 0.6 * bg_noise[p];
        for (int c = 0; c < 3; ++c) color[static_cast<std::size_t>(c)] = look.background_tint[static_cast<std::size_t>(c)] + 0.15 * bg_noise[p];
      } else {
        const auto& sh = shapes[static_cast<std::size_t>(o)];
        ny = std::clamp((y + 0.5 - sh.cy) / sh.radius, -1.0, 1.0);
        nx = std::clamp((x + 0.5 - sh.cx) / sh.radius, -1.0, 1.0);
        shade = std::max(0.0, 1.0 - (ny * ny + nx * nx));
        const auto& mf = look.features[static_cast<std::size_t>(sh.material)];
        for (int i = 0; i < kMaterialFeatures; ++i) f[static_cast<std::size_t>(i)] = mf[static_cast<std::size_t>(i)];
        const auto& base = look.color[static_cast<std::size_t>(sh.material)];
        for (int c = 0; c < 3; ++c) {
          color[static_cast<std::size_t>(c)] = base[static_cast<std::size_t>(c)] * sh.brightness * (0.75 + 0.25 * shade);
        }
      }
      f[kMaterialFeatures] = nx;
      f[kMaterialFeatures + 1] = ny;
      f[kMaterialFeatures + 2] = shade;
      f[kMaterialFeatures + 3] = texture[p];
      for (int c = 0; c < 3; ++c) {
        const double v = color[static_cast<std::size_t>(c)] + 0.05 * texture[p] + spec.noise * rng.normal();
        rgb.at(c, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
      for (int h = 0; h < kHidden; ++h) {
        double acc = look.b1[static_cast<std::size_t>(h)];
        for (int i = 0; i < kPixelFeatures; ++i) acc += look.m1[static_cast<std::size_t>(h * kPixelFeatures + i)] * f[static_cast<std::size_t>(i)];
        hidden[static_cast<std::size_t>(h)] = std::max(0.0, acc);
      }
      for (int c = 0; c < spec.channels; ++c) {
        double acc = 0.0;
        for (int h = 0; h < kHidden; ++h) acc += look.m2[static_cast<std::size_t>(c * kHidden + h)] * hidden[static_cast<std::size_t>(h)];
        modality.at(c, y, x) = static_cast<float>(std::tanh(acc) + spec.noise * rng.normal());
      }
    }
  }

  InstanceSample sample;
  sample.modality = std::move(modality);
  sample.rgb = std::move(rgb);
  for (int k = 0; k < count; ++k) {
    BinaryMask m(size, size);
    for (std::size_t p = 0; p < plane; ++p) m.data[p] = owner[p] == k;
    sample.prompts.push_back(center_point(m));
    sample.instances.push_back(std::move(m));
  }
  return sample;
}

}  // namespace simmat
