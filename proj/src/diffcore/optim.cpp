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

#include "simmat/optim.hpp"

#include <cmath>

namespace simmat {

template <class T>
BasicParamStore<T>::BasicParamStore(const BasicParamStore& other) {
  *this = other;
}

template <class T>
BasicParamStore<T>& BasicParamStore<T>::operator=(const BasicParamStore& other) {
  if (this == &other) return *this;
  items_.clear();
  items_.reserve(other.items_.size());
  for (const auto& p : other.items_) {
    items_.push_back({p.name, BasicVar<T>(p.var.value(), p.trainable), p.trainable});
  }
  index_ = other.index_;
  return *this;
}

template <class T>
BasicVar<T>& BasicParamStore<T>::add(std::string name, BasicTensor<T> value, bool trainable) {
  if (contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  index_.emplace(name, items_.size());
  items_.push_back({std::move(name), BasicVar<T>(std::move(value), trainable), trainable});
  return items_.back().var;
}

template <class T>
void BasicParamStore<T>::remove(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw ConfigError("no parameter named '" + std::string(name) + "'");
  items_.erase(items_.begin() + static_cast<std::ptrdiff_t>(it->second));
  rebuild_index();
}

template <class T>
void BasicParamStore<T>::rebuild_index() {
  index_.clear();
  for (std::size_t i = 0; i < items_.size(); ++i) index_.emplace(items_[i].name, i);
}

template <class T>
BasicParameter<T>& BasicParamStore<T>::param(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw ConfigError("no parameter named '" + std::string(name) + "'");
  return items_[it->second];
}

template <class T>
const BasicParameter<T>& BasicParamStore<T>::param(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw ConfigError("no parameter named '" + std::string(name) + "'");
  return items_[it->second];
}

template <class T>
const BasicVar<T>& BasicParamStore<T>::get(std::string_view name) const {
  return param(name).var;
}

template <class T>
BasicVar<T>& BasicParamStore<T>::get(std::string_view name) {
  return param(name).var;
}

template <class T>
void BasicParamStore<T>::set_trainable(std::string_view name, bool trainable) {
  auto& p = param(name);
  p.trainable = trainable;
  p.var.set_requires_grad(trainable);
}

template <class T>
void BasicParamStore<T>::set_trainable_prefix(std::string_view prefix, bool trainable) {
  for (auto& p : items_) {
    if (p.name.starts_with(prefix)) {
      p.trainable = trainable;
      p.var.set_requires_grad(trainable);
    }
  }
}

template <class T>
void BasicParamStore<T>::zero_grad() {
  for (auto& p : items_) p.var.zero_grad();
}

template class BasicParamStore<float>;
template class BasicParamStore<double>;

template <class T>
std::int64_t count_params(const BasicParamStore<T>& store, CountFilter filter, std::string_view prefix) {
  std::int64_t n = 0;
  for (const auto& p : store.items()) {
    if (filter == CountFilter::kTrainable && !p.trainable) continue;
    if (!p.name.starts_with(prefix)) continue;
    n += p.var.numel();
  }
  return n;
}

template std::int64_t count_params(const BasicParamStore<float>&, CountFilter, std::string_view);
template std::int64_t count_params(const BasicParamStore<double>&, CountFilter, std::string_view);

void adam_step(ParamStore& params, AdamState& state, double lr) {
  std::string missing;
  for (const auto& p : params.items()) {
    if (p.trainable && !p.var.has_grad()) missing += (missing.empty() ? "" : ", ") + p.name;
  }
  if (!missing.empty()) throw IntegrityError("trainable parameters without gradient: " + missing);

  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  const float b1 = static_cast<float>(state.beta1);
  const float b2 = static_cast<float>(state.beta2);
  // 1 - beta in float loses most of its digits for beta2 = 0.999.
  const float one_minus_b1 = static_cast<float>(1.0 - state.beta1);
  const float one_minus_b2 = static_cast<float>(1.0 - state.beta2);
  const float step_size = static_cast<float>(lr / bc1);
  const float inv_sqrt_bc2 = static_cast<float>(1.0 / std::sqrt(bc2));
  const float eps = static_cast<float>(state.epsilon);

  for (auto& p : params.items()) {
    if (!p.trainable) continue;
    auto& theta = p.var.mutable_value().storage();
    const auto g = p.var.grad();
    auto& m = state.first_moment[p.name];
    auto& v = state.second_moment[p.name];
    if (m.size() != theta.size()) {
      m.assign(theta.size(), 0.0f);
      v.assign(theta.size(), 0.0f);
    }
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = b1 * m[i] + one_minus_b1 * g[i];
      v[i] = b2 * v[i] + one_minus_b2 * g[i] * g[i];
      theta[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_bc2 + eps);
    }
  }
}

double lr_at_epoch(const Schedule& schedule, int epoch) {
  if (epoch < 0) throw InputError("epoch must be non-negative");
  const int k = epoch / schedule.step_size_epochs;
  return schedule.base_lr * std::pow(schedule.gamma, k);
}

}  // namespace simmat
