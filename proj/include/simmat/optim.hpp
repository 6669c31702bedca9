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
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "simmat/autograd.hpp"

namespace simmat {

template <class T>
struct BasicParameter {
  std::string name;
  BasicVar<T> var;
  bool trainable = true;
};

/// Ordered set of uniquely named parameters. Copies are deep.
template <class T>
class BasicParamStore {
 public:
  BasicParamStore() = default;
  BasicParamStore(const BasicParamStore& other);
  BasicParamStore& operator=(const BasicParamStore& other);
  BasicParamStore(BasicParamStore&&) noexcept = default;
  BasicParamStore& operator=(BasicParamStore&&) noexcept = default;

  /// Registers a parameter; throws ConfigError on a duplicate name.
  BasicVar<T>& add(std::string name, BasicTensor<T> value, bool trainable = true);
  void remove(std::string_view name);

  bool contains(std::string_view name) const { return index_.count(std::string(name)) != 0; }
  const BasicVar<T>& get(std::string_view name) const;
  BasicVar<T>& get(std::string_view name);
  BasicParameter<T>& param(std::string_view name);
  const BasicParameter<T>& param(std::string_view name) const;

  std::vector<BasicParameter<T>>& items() { return items_; }
  const std::vector<BasicParameter<T>>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }

  void set_trainable(std::string_view name, bool trainable);
  /// Applies `trainable` to every parameter whose name starts with `prefix`.
  void set_trainable_prefix(std::string_view prefix, bool trainable);
  void freeze_all() { set_trainable_prefix("", false); }
  void zero_grad();

  template <class U>
  BasicParamStore<U> cast() const {
    BasicParamStore<U> out;
    for (const auto& p : items_) out.add(p.name, p.var.value().template cast<U>(), p.trainable);
    return out;
  }

 private:
  void rebuild_index();

  std::vector<BasicParameter<T>> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

using Parameter = BasicParameter<float>;
using ParamStore = BasicParamStore<float>;

extern template class BasicParamStore<float>;
extern template class BasicParamStore<double>;

enum class CountFilter { kAll, kTrainable };

/// Element count over parameters matching the filter and name prefix.
template <class T>
std::int64_t count_params(const BasicParamStore<T>& store, CountFilter filter = CountFilter::kAll,
                          std::string_view prefix = "");

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step = 0;
  std::map<std::string, std::vector<float>> first_moment;
  std::map<std::string, std::vector<float>> second_moment;
};

/// One bias-corrected Adam update over the trainable parameters. Throws
/// IntegrityError naming every trainable parameter without a gradient.
/// Gradients are left in place; call zero_grad() afterwards.
void adam_step(ParamStore& params, AdamState& state, double lr);

struct Schedule {
  double base_lr = 3e-4;
  int step_size_epochs = 10;
  double gamma = 0.5;
};

/// base_lr · gamma^floor(epoch / step_size_epochs).
double lr_at_epoch(const Schedule& schedule, int epoch);

}  // namespace simmat
