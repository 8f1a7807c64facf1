/* Copyright 2026 The dualgan Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "dualgan/errors.hpp"

namespace dualgan {

using Shape = std::vector<std::size_t>;

inline std::size_t numel_of(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace detail {

inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

template <typename T>
void require_finite(std::span<const T> values, const char* what) {
  for (const T v : values) {
    if (!std::isfinite(v)) throw NonFiniteError(std::string("non-finite value in ") + what);
  }
}

}  // namespace detail

/// True when new operations record themselves for backward.
inline bool grad_enabled() { return detail::grad_mode_flag(); }

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
  ~NoGradGuard() { detail::grad_mode_flag() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
class Tensor;

namespace detail {

/// One vertex of the recorded graph. Leaves have no backward rule; op outputs keep their
/// inputs alive through `parents` until the output itself is released.
template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty when absent
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents' grads.
  std::function<void(Node&)> backward_fn;

  bool is_leaf() const { return !backward_fn; }

  std::span<T> grad_slot() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
};

}  // namespace detail

/// Dense row-major tensor with an optional gradient slot. Copies share storage; values of an
/// op output never change after construction. Leaves (parameters) may be mutated in place
/// by optimizers through `mutable_data()`.
template <typename T>
class Tensor {
 public:
  using value_type = T;
  using Node = detail::Node<T>;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), T(0), requires_grad);
  }

  static Tensor full(Shape shape, T value, bool requires_grad = false) {
    const std::size_t n = numel_of(shape);
    return from(std::move(shape), std::vector<T>(n, value), requires_grad);
  }

  static Tensor scalar(T value, bool requires_grad = false) { return from({}, {value}, requires_grad); }

  /// Wraps `data` as a leaf. Rejects size mismatches and non-finite entries.
  static Tensor from(Shape shape, std::vector<T> data, bool requires_grad = false) {
    if (numel_of(shape) != data.size()) {
      throw DimensionError("tensor data has " + std::to_string(data.size()) + " values but shape " +
                           to_string(shape) + " needs " + std::to_string(numel_of(shape)));
    }
    detail::require_finite<T>(data, "tensor input");
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<const T> data() const { return node_->data; }
  T operator[](std::size_t i) const { return node_->data[i]; }

  /// Value of a single-element tensor.
  T item() const {
    if (numel() != 1) throw UsageError("item() on tensor of shape " + to_string(shape()));
    return node_->data[0];
  }

  /// In-place access for leaves only; op outputs are immutable.
  std::span<T> mutable_data() {
    if (!node_->is_leaf()) throw UsageError("mutable_data() on a non-leaf tensor");
    return node_->data;
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) {
    if (!node_->is_leaf()) throw UsageError("requires_grad can only be toggled on leaves");
    node_->requires_grad = on;
  }

  bool is_leaf() const { return node_->is_leaf(); }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->grad_slot(); }
  void zero_grad() { node_->grad.assign(node_->data.size(), T(0)); }
  void clear_grad() { node_->grad.clear(); }

  /// Leaf holding a copy of the values, cut from the graph.
  Tensor detach() const { return from(shape(), node_->data, false); }

  /// Reverse-mode sweep from this scalar. Gradients accumulate into the `grad` slot of every
  /// reachable leaf with requires_grad; intermediate gradients are recomputed from scratch.
  void backward() const;

  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

  // Internal: used by op implementations.
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

namespace detail {

/// Builds an op output. The backward rule is kept only when recording is on and some input
/// requires a gradient.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, std::vector<std::shared_ptr<Node<T>>> parents,
                      std::function<void(Node<T>&)> backward_fn, const char* op_name) {
  require_finite<T>(data, op_name);
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  const bool track = grad_enabled() && std::any_of(parents.begin(), parents.end(),
                                                   [](const auto& p) { return p->requires_grad; });
  if (track) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor<T>(std::move(node));
}

/// Reverse topological order over nodes that require a gradient, each exactly once.
template <typename T>
std::vector<Node<T>*> reverse_topological(Node<T>* root) {
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root, 0}};
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  std::reverse(order.begin(), order.end());
  return order;
}

}  // namespace detail

template <typename T>
void Tensor<T>::backward() const {
  if (rank() != 0 || numel() != 1) {
    throw UsageError("backward() requires a scalar loss, got shape " + to_string(shape()));
  }
  if (!node_->requires_grad) return;
  const auto order = detail::reverse_topological(node_.get());
  for (Node* n : order) {
    if (!n->is_leaf()) n->grad.assign(n->data.size(), T(0));
  }
  if (node_->is_leaf()) node_->grad_slot();
  node_->grad[0] += T(1);
  for (Node* n : order) {
    if (n->is_leaf()) {
      detail::require_finite<T>(n->grad, "leaf gradient");
      continue;
    }
    n->backward_fn(*n);
    detail::require_finite<T>(n->grad, "intermediate gradient");
  }
}

}  // namespace dualgan
