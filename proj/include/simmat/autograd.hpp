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
#include <memory>
#include <span>
#include <vector>

#include "simmat/tensor.hpp"

namespace simmat {

template <class T>
struct Node {
  BasicTensor<T> value;
  /// Empty until a gradient reaches this node.
  std::vector<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  /// Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward_fn;

  std::vector<T>& ensure_grad() {
    if (grad.empty()) grad.assign(value.storage().size(), T{0});
    return grad;
  }
};

/// Whether new operations record the graph. Thread-local.
bool grad_enabled();

/// Disables graph recording for its lifetime (inference and optimizer steps).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Handle to a value in the reverse-mode graph. Copies share the node.
template <class T>
class BasicVar {
 public:
  BasicVar() = default;
  explicit BasicVar(BasicTensor<T> value, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  bool defined() const { return node_ != nullptr; }
  const BasicTensor<T>& value() const { return node_->value; }
  BasicTensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::int64_t dim(std::size_t axis) const { return node_->value.dim(axis); }
  std::int64_t numel() const { return node_->value.numel(); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::vector<T>& grad_storage() { return node_->ensure_grad(); }
  void zero_grad() { node_->grad.clear(); }

  /// Reverse pass from this value. A non-scalar root is seeded with ones.
  void backward() const;

  const std::shared_ptr<Node<T>>& node() const { return node_; }

  /// Internal: wrap an op result. Records parents only when any parent needs
  /// a gradient and recording is enabled.
  static BasicVar make(BasicTensor<T> value, std::vector<BasicVar> parents,
                       std::function<void(Node<T>&)> backward_fn);

 private:
  std::shared_ptr<Node<T>> node_;
};

using Var = BasicVar<float>;

extern template class BasicVar<float>;
extern template class BasicVar<double>;

}  // namespace simmat
