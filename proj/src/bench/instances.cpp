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
#include <cmath>
#include <limits>
#include <map>

#include "simmat/bench.hpp"
#include "simmat/rng.hpp"

namespace simmat {

std::int64_t BinaryMask::area() const {
  return std::count_if(data.begin(), data.end(), [](std::uint8_t v) { return v != 0; });
}

std::vector<BinaryMask> semantic_to_instances(const LabelMap& map) {
  const int h = map.height, w = map.width;
  if (static_cast<std::int64_t>(map.labels.size()) != static_cast<std::int64_t>(h) * w) {
    throw DimensionError("label map holds " + std::to_string(map.labels.size()) + " labels for " + std::to_string(h) +
                         "x" + std::to_string(w));
  }
  // Components are found in raster order, then stably sorted by class.
  std::vector<std::int32_t> comp(map.labels.size(), -1);
  std::vector<std::pair<std::int32_t, BinaryMask>> found;
  std::vector<int> stack;
  for (int start = 0; start < h * w; ++start) {
    const auto label = map.labels[static_cast<std::size_t>(start)];
    if (label <= 0 || comp[static_cast<std::size_t>(start)] >= 0) continue;
    const auto id = static_cast<std::int32_t>(found.size());
    BinaryMask mask(h, w);
    stack.assign(1, start);
    comp[static_cast<std::size_t>(start)] = id;
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      mask.data[static_cast<std::size_t>(p)] = 1;
      const int r = p / w, c = p % w;
      const int nbr[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
      for (const auto& n : nbr) {
        if (n[0] < 0 || n[0] >= h || n[1] < 0 || n[1] >= w) continue;
        const int q = n[0] * w + n[1];
        if (comp[static_cast<std::size_t>(q)] < 0 && map.labels[static_cast<std::size_t>(q)] == label) {
          comp[static_cast<std::size_t>(q)] = id;
          stack.push_back(q);
        }
      }
    }
    found.emplace_back(label, std::move(mask));
  }
  std::stable_sort(found.begin(), found.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<BinaryMask> out;
  out.reserve(found.size());
  for (auto& f : found) out.push_back(std::move(f.second));
  return out;
}

std::vector<std::int32_t> distance_transform(const BinaryMask& mask) {
  const int h = mask.height, w = mask.width;
  const auto big = std::numeric_limits<std::int32_t>::max() / 4;
  std::vector<std::int32_t> d(mask.data.size(), 0);
  // Two-pass chamfer; exact for L1. Pixels beyond the border are background.
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      auto& v = d[static_cast<std::size_t>(r) * w + c];
      if (!mask.at(r, c)) continue;
      v = big;
      const std::int32_t up = r > 0 ? d[static_cast<std::size_t>(r - 1) * w + c] : 0;
      const std::int32_t left = c > 0 ? d[static_cast<std::size_t>(r) * w + c - 1] : 0;
      v = std::min(v, std::min(up, left) + 1);
    }
  }
  for (int r = h - 1; r >= 0; --r) {
    for (int c = w - 1; c >= 0; --c) {
      auto& v = d[static_cast<std::size_t>(r) * w + c];
      if (!mask.at(r, c)) continue;
      const std::int32_t down = r + 1 < h ? d[static_cast<std::size_t>(r + 1) * w + c] : 0;
      const std::int32_t right = c + 1 < w ? d[static_cast<std::size_t>(r) * w + c + 1] : 0;
      v = std::min(v, std::min(down, right) + 1);
    }
  }
  return d;
}

PromptPoint center_point(const BinaryMask& mask) {
  const auto d = distance_transform(mask);
  std::int32_t best = 0;
  PromptPoint p;
  for (int r = 0; r < mask.height; ++r) {
    for (int c = 0; c < mask.width; ++c) {
      const auto v = d[static_cast<std::size_t>(r) * mask.width + c];
      if (v > best) {
        best = v;
        p = {r, c, true};
      }
    }
  }
  if (best == 0) throw InputError("center_point: mask is empty");
  return p;
}

PseudoModality make_pseudo_modality(const Tensor& rgb, const Tensor& x, std::uint64_t seed) {
  if (rgb.rank() != 3 || x.rank() != 3 || rgb.dim(0) != 3) {
    throw DimensionError("pseudo modality: expected rgb [3,H,W] and x [C,H,W], got " + shape_str(rgb.shape()) +
                         " and " + shape_str(x.shape()));
  }
  if (rgb.dim(1) != x.dim(1) || rgb.dim(2) != x.dim(2)) {
    throw DimensionError("pseudo modality: spatial size " + shape_str(x.shape()) + " does not match rgb " +
                         shape_str(rgb.shape()));
  }
  const std::int64_t c = 3 + x.dim(0), plane = x.dim(1) * x.dim(2);
  Rng rng(derive_seed(seed, "pseudo_modality"));
  const auto perm = rng.permutation(static_cast<std::size_t>(c));
  PseudoModality out{Tensor({c, x.dim(1), x.dim(2)}), {}};
  for (std::int64_t i = 0; i < c; ++i) {
    const auto src = static_cast<std::int64_t>(perm[static_cast<std::size_t>(i)]);
    out.permutation.push_back(static_cast<int>(src));
    const float* from = src < 3 ? rgb.data().data() + src * plane : x.data().data() + (src - 3) * plane;
    std::copy(from, from + plane, out.data.storage().begin() + i * plane);
  }
  return out;
}

Tensor invert_pseudo_modality(const PseudoModality& p) {
  const auto& shape = p.data.shape();
  const std::int64_t plane = shape[1] * shape[2];
  Tensor out(shape);
  for (std::size_t i = 0; i < p.permutation.size(); ++i) {
    const auto src = p.data.data().begin() + static_cast<std::ptrdiff_t>(i) * plane;
    std::copy(src, src + plane, out.storage().begin() + static_cast<std::ptrdiff_t>(p.permutation[i]) * plane);
  }
  return out;
}

namespace {

Tensor resize_bilinear(const Tensor& t, int target) {
  const std::int64_t c = t.dim(0), h = t.dim(1), w = t.dim(2);
  Tensor out({c, target, target});
  const double sy = static_cast<double>(h) / target, sx = static_cast<double>(w) / target;
  for (int y = 0; y < target; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
    const auto y0 = static_cast<std::int64_t>(fy);
    const auto y1 = std::min(y0 + 1, h - 1);
    const float ty = static_cast<float>(fy - static_cast<double>(y0));
    for (int x = 0; x < target; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
      const auto x0 = static_cast<std::int64_t>(fx);
      const auto x1 = std::min(x0 + 1, w - 1);
      const float tx = static_cast<float>(fx - static_cast<double>(x0));
      for (std::int64_t ch = 0; ch < c; ++ch) {
        // Difference form keeps constants and identity resizes exact.
        const float a = t.at(ch, y0, x0), b = t.at(ch, y0, x1);
        const float cc = t.at(ch, y1, x0), d = t.at(ch, y1, x1);
        const float top = a + tx * (b - a);
        const float bottom = cc + tx * (d - cc);
        out.at(ch, y, x) = top + ty * (bottom - top);
      }
    }
  }
  return out;
}

BinaryMask resize_nearest(const BinaryMask& m, int target) {
  BinaryMask out(target, target);
  for (int y = 0; y < target; ++y) {
    const int sy = std::min(m.height - 1, static_cast<int>((y + 0.5) * m.height / target));
    for (int x = 0; x < target; ++x) {
      const int sx = std::min(m.width - 1, static_cast<int>((x + 0.5) * m.width / target));
      out.at(y, x) = m.at(sy, sx);
    }
  }
  return out;
}

}  // namespace

ResizeResult resize_sample(const InstanceSample& sample, int target, int patch_size) {
  if (target <= 0 || patch_size <= 0 || target % patch_size != 0) {
    throw ConfigError("resize: target " + std::to_string(target) + " not divisible by patch size " +
                      std::to_string(patch_size));
  }
  ResizeResult r;
  const bool same = sample.modality.dim(1) == target && sample.modality.dim(2) == target;
  if (same) {
    r.sample = sample;
    return r;
  }
  r.sample.modality = resize_bilinear(sample.modality, target);
  if (sample.rgb) r.sample.rgb = resize_bilinear(*sample.rgb, target);
  for (std::size_t i = 0; i < sample.instances.size(); ++i) {
    auto m = resize_nearest(sample.instances[i], target);
    if (m.area() == 0) {
      ++r.dropped;
      continue;
    }
    auto p = center_point(m);
    if (i < sample.prompts.size()) p.foreground = sample.prompts[i].foreground;
    r.sample.instances.push_back(std::move(m));
    r.sample.prompts.push_back(p);
  }
  return r;
}

Manifest split_ratio(const Manifest& manifest, double ratio, std::uint64_t seed) {
  if (manifest.samples.empty()) throw InputError("split_ratio: manifest has no samples");
  if (!(ratio > 0.0 && ratio <= 1.0)) throw ConfigError("split_ratio: ratio must be in (0,1]");
  Rng rng(derive_seed(seed, "split_ratio"));
  const auto order = rng.permutation(manifest.samples.size());
  const auto n = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(ratio * manifest.samples.size())));
  Manifest out = manifest;
  out.samples.clear();
  for (std::size_t i = 0; i < n; ++i) out.samples.push_back(manifest.samples[order[i]]);
  return out;
}

}  // namespace simmat
