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
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace simmat {

struct GradSuiteEntry {
  std::string name;
  std::uint64_t seed = 0;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

void to_json(nlohmann::json& j, const GradSuiteEntry& e);

inline constexpr double kOpGradTolerance = 1e-3;
inline constexpr double kPipelineGradTolerance = 1e-2;

/// Central-difference checks in double precision for every differentiable
/// op, the loss, and the 32 px end-to-end pipeline (transfer layer, LoRA,
/// encoder, prompt encoder, decoder, loss).
std::vector<GradSuiteEntry> run_grad_suite(std::uint64_t seed);

/// The end-to-end entry only.
GradSuiteEntry run_pipeline_grad_check(std::uint64_t seed);

}  // namespace simmat
