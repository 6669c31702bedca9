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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>

#include <unistd.h>

#include "simmat/model.hpp"
#include "simmat/rng.hpp"
#include "simmat/tensor.hpp"

namespace simmat::test {

template <class T = float>
BasicTensor<T> random_tensor(Rng& rng, Shape shape, double scale = 1.0) {
  BasicTensor<T> t(std::move(shape));
  for (auto& v : t.storage()) v = static_cast<T>(rng.normal(0.0, scale));
  return t;
}

template <class T>
double max_abs_diff(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  double m = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a[static_cast<std::size_t>(i)]) - b[static_cast<std::size_t>(i)]));
  }
  return m;
}

template <class T>
double max_abs(const BasicTensor<T>& a) {
  double m = 0.0;
  for (auto v : a.data()) m = std::max(m, std::abs(static_cast<double>(v)));
  return m;
}

/// Small model used where the desk config would only slow tests down.
inline ModelConfig tiny_config() {
  ModelConfig mc;
  mc.image_size = 32;
  mc.patch_size = 8;
  mc.embed_dim = 16;
  mc.depth = 2;
  mc.heads = 2;
  mc.mlp_ratio = 2.0;
  mc.decoder_dim = 16;
  mc.decoder_depth = 1;
  mc.fourier_bands = 4;
  return mc;
}

/// Fresh scratch directory under the system temp dir, removed on exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("simmat_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace simmat::test
