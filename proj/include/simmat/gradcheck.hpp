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

#include <functional>
#include <vector>

#include "simmat/autograd.hpp"

namespace simmat {

template <class T>
using GradClosure = std::function<BasicVar<T>(const std::vector<BasicVar<T>>&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_element = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares reverse-mode gradients of sum(op(inputs)) against central
/// differences with step `epsilon`. The error of one element is
/// |analytic − numeric| / max(|analytic|, |numeric|, 1e-8).
/// Throws NumericError if any evaluation is non-finite.
template <class T>
GradCheckResult grad_check(const GradClosure<T>& op, const std::vector<BasicTensor<T>>& inputs,
                           double epsilon);

extern template GradCheckResult grad_check<float>(const GradClosure<float>&,
                                                  const std::vector<BasicTensor<float>>&, double);
extern template GradCheckResult grad_check<double>(const GradClosure<double>&,
                                                   const std::vector<BasicTensor<double>>&, double);

}  // namespace simmat
