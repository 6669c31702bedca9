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

// Reference implementations used only by tests. They share no code with the
// library and favour obviousness over speed.

#include <algorithm>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <vector>

#include "simmat/bench.hpp"
#include "simmat/model.hpp"
#include "simmat/rng.hpp"

namespace simmat::oracle {

/// BFS flood fill per class, 4-neighbourhood. Components ordered by class
/// label, then by their first pixel in raster order.
inline std::vector<BinaryMask> flood_fill_instances(const LabelMap& map) {
  const int h = map.height, w = map.width;
  std::vector<int> comp(static_cast<std::size_t>(h) * w, -1);
  struct Found {
    std::int32_t label;
    int first;
    BinaryMask mask;
  };
  std::vector<Found> found;
  for (int start = 0; start < h * w; ++start) {
    const auto label = map.labels[static_cast<std::size_t>(start)];
    if (label <= 0 || comp[static_cast<std::size_t>(start)] >= 0) continue;
    Found f{label, start, BinaryMask(h, w)};
    std::deque<int> queue{start};
    comp[static_cast<std::size_t>(start)] = static_cast<int>(found.size());
    while (!queue.empty()) {
      const int p = queue.front();
      queue.pop_front();
      const int r = p / w, c = p % w;
      f.mask.at(r, c) = 1;
      const int nr[4] = {r - 1, r + 1, r, r};
      const int nc[4] = {c, c, c - 1, c + 1};
      for (int k = 0; k < 4; ++k) {
        if (nr[k] < 0 || nr[k] >= h || nc[k] < 0 || nc[k] >= w) continue;
        const int q = nr[k] * w + nc[k];
        if (map.labels[static_cast<std::size_t>(q)] == label && comp[static_cast<std::size_t>(q)] < 0) {
          comp[static_cast<std::size_t>(q)] = static_cast<int>(found.size());
          queue.push_back(q);
        }
      }
    }
    found.push_back(std::move(f));
  }
  std::stable_sort(found.begin(), found.end(), [](const Found& a, const Found& b) {
    return a.label != b.label ? a.label < b.label : a.first < b.first;
  });
  std::vector<BinaryMask> out;
  for (auto& f : found) out.push_back(std::move(f.mask));
  return out;
}

/// Per-pixel minimum L1 distance to any background pixel, where every pixel
/// outside the canvas is background. Exhaustive search.
inline std::vector<std::int32_t> brute_distance(const BinaryMask& m) {
  std::vector<std::int32_t> d(m.data.size(), 0);
  for (int r = 0; r < m.height; ++r) {
    for (int c = 0; c < m.width; ++c) {
      if (!m.at(r, c)) continue;
      int best = std::min({r + 1, c + 1, m.height - r, m.width - c});
      for (int rr = 0; rr < m.height; ++rr) {
        for (int cc = 0; cc < m.width; ++cc) {
          if (!m.at(rr, cc)) best = std::min(best, std::abs(rr - r) + std::abs(cc - c));
        }
      }
      d[static_cast<std::size_t>(r) * m.width + c] = best;
    }
  }
  return d;
}

/// Argmax of brute_distance; ties to the smallest row, then column.
inline PromptPoint brute_center(const BinaryMask& m) {
  const auto d = brute_distance(m);
  PromptPoint best{-1, -1, true};
  std::int32_t best_v = 0;
  for (int r = 0; r < m.height; ++r) {
    for (int c = 0; c < m.width; ++c) {
      const auto v = d[static_cast<std::size_t>(r) * m.width + c];
      if (v > best_v) {
        best_v = v;
        best = {r, c, true};
      }
    }
  }
  return best;
}

/// Intersection over union by direct counting.
inline double iou(const BinaryMask& a, const BinaryMask& b) {
  long inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    inter += (a.data[i] && b.data[i]);
    uni += (a.data[i] || b.data[i]);
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/// Conv-stack parameter count summed layer by layer.
inline std::int64_t conv_stack_params(int c, int n, int k, int d) {
  if (n == 1) return static_cast<std::int64_t>(c) * 3 + 3;
  std::int64_t total = static_cast<std::int64_t>(c) * d * k * k + d;
  for (int i = 0; i < n - 2; ++i) total += static_cast<std::int64_t>(d) * d * k * k + d;
  return total + 3 * d + 3;
}

/// Encoder parameters of a ViT from its dimensions: patch conv, position
/// table, blocks (two norms, qkv+proj, two-layer MLP) and the linear neck.
inline std::int64_t vit_encoder_params(const ModelConfig& c) {
  const std::int64_t D = c.embed_dim, P = c.patch_size, N = c.num_tokens(), M = c.mlp_dim();
  const std::int64_t per_block = 2 * 2 * D + 4 * (D * D + D) + (D * M + M) + (M * D + D);
  return (3 * P * P * D + D) + N * D + c.depth * per_block + (D * c.decoder_dim + c.decoder_dim);
}

/// Naive triple loop in double.
inline std::vector<double> gemm(int m, int n, int k, const std::vector<float>& a, const std::vector<float>& b) {
  std::vector<double> c(static_cast<std::size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int p = 0; p < k; ++p) s += static_cast<double>(a[i * k + p]) * b[p * n + j];
      c[static_cast<std::size_t>(i) * n + j] = s;
    }
  }
  return c;
}

/// Random label map of axis-aligned rectangles over a few classes.
inline LabelMap random_label_map(Rng& rng, int h, int w, int classes) {
  LabelMap map{h, w, std::vector<std::int32_t>(static_cast<std::size_t>(h) * w, 0)};
  const int rects = rng.uniform_int(1, 8);
  for (int i = 0; i < rects; ++i) {
    const int r0 = rng.uniform_int(0, h - 1), c0 = rng.uniform_int(0, w - 1);
    const int r1 = std::min(h, r0 + rng.uniform_int(1, h / 2)), c1 = std::min(w, c0 + rng.uniform_int(1, w / 2));
    const int label = rng.uniform_int(1, classes);
    for (int r = r0; r < r1; ++r) {
      for (int c = c0; c < c1; ++c) map.labels[static_cast<std::size_t>(r) * w + c] = label;
    }
  }
  // Salt noise makes diagonal-only contacts and single-pixel islands common.
  for (auto& l : map.labels) {
    if (rng.uniform() < 0.05) l = rng.uniform_int(0, classes);
  }
  return map;
}

/// Random non-empty mask: union of blobs plus noise.
inline BinaryMask random_mask(Rng& rng, int h, int w) {
  BinaryMask m(h, w);
  const int blobs = rng.uniform_int(1, 3);
  for (int i = 0; i < blobs; ++i) {
    const double cr = rng.uniform(0, h), cc = rng.uniform(0, w);
    const double rr = rng.uniform(1.5, h / 2.0), rc = rng.uniform(1.5, w / 2.0);
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        const double u = (r - cr) / rr, v = (c - cc) / rc;
        if (u * u + v * v <= 1.0) m.at(r, c) = 1;
      }
    }
  }
  for (auto& v : m.data) {
    if (rng.uniform() < 0.03) v = 1;
  }
  m.at(rng.uniform_int(0, h - 1), rng.uniform_int(0, w - 1)) = 1;
  return m;
}

}  // namespace simmat::oracle
