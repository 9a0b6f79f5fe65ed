/* Copyright 2026 The advgen Authors. All Rights Reserved.

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
#include <cstdint>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "advgen/core/tensor.hpp"

namespace advgen::ag {

/// Reverse-mode tape. The graph is a DAG of nodes ordered by creation; each
/// non-leaf node carries a closure that scatters its grad into its parents.
template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // allocated lazily
  bool requires_grad = false;
  std::uint64_t order = 0;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;

  Tensor<T>& ensure_grad() {
    if (!grad.defined()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

/// RAII scope that disables tape recording (inference / teacher passes).
struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(grad_mode()) { grad_mode() = false; }
  ~NoGradGuard() { grad_mode() = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

inline std::uint64_t next_order() {
  thread_local std::uint64_t counter = 0;
  return ++counter;
}

template <typename T>
class Variable {
 public:
  Variable() = default;

  static Variable leaf(Tensor<T> value, bool requires_grad = false) {
    Variable v;
    v.node_ = std::make_shared<Node<T>>();
    v.node_->value = std::move(value);
    v.node_->requires_grad = requires_grad && grad_mode();
    v.node_->order = next_order();
    return v;
  }

  static Variable constant(Tensor<T> value) { return leaf(std::move(value), false); }

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  Tensor<T>& grad() { return node_->ensure_grad(); }
  bool has_grad() const { return node_ && node_->grad.defined(); }
  void zero_grad() {
    if (node_ && node_->grad.defined()) node_->grad.zero();
  }

  /// Leaf-only switch used to freeze pretrained parameters.
  void set_requires_grad(bool rg) { node_->requires_grad = rg; }

  /// Detached view of the same value (no graph edge, no grad).
  Variable detach() const { return constant(node_->value); }

  std::shared_ptr<Node<T>> node() const { return node_; }

  /// Backpropagate from a scalar. The traversed slice of the tape is
  /// consumed: closures are released so buffers free eagerly.
  void backward() const {
    if (!node_) throw StructuralError("backward() on undefined variable");
    if (node_->value.numel() != 1) {
      throw StructuralError("backward() requires a scalar, got " +
                            shape_string(node_->value.shape()));
    }
    if (!node_->requires_grad) return;

    // topo holds owning pointers: children own parents, so releasing edges
    // during the sweep must not free nodes the sweep still visits
    std::vector<std::shared_ptr<Node<T>>> topo;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::shared_ptr<Node<T>>> stack{node_};
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto n = stack.back();
      stack.pop_back();
      topo.push_back(n);
      for (auto& p : n->parents) {
        if (p->requires_grad && !seen.count(p.get())) {
          seen.insert(p.get());
          stack.push_back(p);
        }
      }
    }
    std::sort(topo.begin(), topo.end(),
              [](const std::shared_ptr<Node<T>>& a, const std::shared_ptr<Node<T>>& b) {
                return a->order > b->order;
              });

    node_->ensure_grad().fill(T(1));
    for (auto& n : topo) {
      if (n->backprop) {
        n->backprop(*n);
        n->backprop = nullptr;
        n->parents.clear();
      }
    }
  }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Accumulate `delta` into the parent's grad if it participates in the tape.
template <typename T>
inline void accumulate(const std::shared_ptr<Node<T>>& parent, const Tensor<T>& delta) {
  if (parent->requires_grad) parent->ensure_grad().add_(delta);
}

/// Build an op node. When grad mode is off or no parent needs gradients the
/// result degenerates to a constant and the closure is dropped.
template <typename T>
Variable<T> make_op(Tensor<T> value, std::vector<Variable<T>> parents,
                    std::function<void(Node<T>&)> backprop) {
  bool needs = false;
  if (grad_mode()) {
    for (const auto& p : parents) needs = needs || p.requires_grad();
  }
  if (!needs) return Variable<T>::constant(std::move(value));

  auto v = Variable<T>::leaf(std::move(value), true);
  auto node = v.node();
  node->parents.reserve(parents.size());
  for (auto& p : parents) node->parents.push_back(p.node());
  node->backprop = std::move(backprop);
  return v;
}

}  // namespace advgen::ag
