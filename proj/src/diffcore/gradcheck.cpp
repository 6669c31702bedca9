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

#include "simmat/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace simmat {
namespace {

template <class T>
double reduce(const BasicVar<T>& out) {
  double s = 0.0;
  for (T v : out.value().data()) {
    if (!std::isfinite(static_cast<double>(v))) throw NumericError("grad_check: non-finite op output");
    s += static_cast<double>(v);
  }
  return s;
}

}  // namespace

template <class T>
GradCheckResult grad_check(const GradClosure<T>& op, const std::vector<BasicTensor<T>>& inputs,
                           double epsilon) {
  std::vector<BasicVar<T>> vars;
  vars.reserve(inputs.size());
  for (const auto& t : inputs) vars.emplace_back(t, true);
  {
    auto out = op(vars);
    reduce(out);
    if (out.requires_grad()) out.backward();
  }

  GradCheckResult result;
  for (std::size_t i = 0; i < vars.size(); ++i) {
    std::vector<double> analytic(static_cast<std::size_t>(vars[i].numel()), 0.0);
    if (vars[i].has_grad()) std::copy(vars[i].grad().begin(), vars[i].grad().end(), analytic.begin());
    for (std::size_t j = 0; j < analytic.size(); ++j) {
      if (!std::isfinite(analytic[j])) throw NumericError("grad_check: non-finite analytic gradient");
      std::vector<BasicVar<T>> probe;
      probe.reserve(inputs.size());
      for (const auto& t : inputs) probe.emplace_back(t, false);
      auto& x = probe[i].mutable_value().storage()[j];
      const T original = x;
      double f_plus = 0.0, f_minus = 0.0, hi = 0.0, lo = 0.0;
      {
        NoGradGuard guard;
        x = static_cast<T>(original + epsilon);
        hi = static_cast<double>(x);
        f_plus = reduce(op(probe));
        x = static_cast<T>(original - epsilon);
        lo = static_cast<double>(x);
        f_minus = reduce(op(probe));
      }
      const double numeric = (f_plus - f_minus) / (hi - lo);
      const double denom = std::max({std::abs(analytic[j]), std::abs(numeric), 1e-8});
      const double err = std::abs(analytic[j] - numeric) / denom;
      if (err > result.max_rel_error || (i == 0 && j == 0)) {
        result = {err, i, j, analytic[j], numeric};
      }
    }
  }
  return result;
}

template GradCheckResult grad_check<float>(const GradClosure<float>&,
                                           const std::vector<BasicTensor<float>>&, double);
template GradCheckResult grad_check<double>(const GradClosure<double>&,
                                            const std::vector<BasicTensor<double>>&, double);

}  // namespace simmat
