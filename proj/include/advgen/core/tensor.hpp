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
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <vector>

#include "advgen/common.hpp"

namespace advgen {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) {
    if (d < 0) throw StructuralError("negative tensor dimension");
    n *= d;
  }
  return n;
}

/// Dense row-major tensor. Storage is shared between copies; clone() makes
/// the contents independent. Mutating methods touch the shared buffer, which
/// is exactly what the optimizer and EMA update rely on.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape)
      : shape_(std::move(shape)),
        store_(std::make_shared<std::vector<T>>(shape_numel(shape_), T(0))) {}

  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)) {
    if (static_cast<std::int64_t>(data.size()) != shape_numel(shape_)) {
      throw StructuralError("tensor data size does not match shape " +
                            shape_string(shape_));
    }
    store_ = std::make_shared<std::vector<T>>(std::move(data));
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor full(Shape shape, T v) {
    Tensor t(std::move(shape));
    t.fill(v);
    return t;
  }

  static Tensor scalar(T v) { return full({1}, v); }

  bool defined() const { return static_cast<bool>(store_); }
  const Shape& shape() const { return shape_; }
  std::int64_t ndim() const { return static_cast<std::int64_t>(shape_.size()); }
  std::int64_t dim(std::size_t i) const { return shape_.at(i); }
  std::int64_t numel() const { return defined() ? static_cast<std::int64_t>(store_->size()) : 0; }

  T* data() { return store_->data(); }
  const T* data() const { return store_->data(); }

  T& operator[](std::int64_t i) { return (*store_)[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const { return (*store_)[static_cast<std::size_t>(i)]; }

  /// NCHW convenience indexing.
  T& at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
    return (*store_)[static_cast<std::size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }
  const T& at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
    return (*store_)[static_cast<std::size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  /// New view over the same storage.
  Tensor reshape(Shape new_shape) const {
    if (shape_numel(new_shape) != numel()) {
      throw StructuralError("reshape " + shape_string(shape_) + " -> " +
                            shape_string(new_shape) + " changes element count");
    }
    Tensor t;
    t.shape_ = std::move(new_shape);
    t.store_ = store_;
    return t;
  }

  Tensor clone() const {
    Tensor t;
    t.shape_ = shape_;
    if (store_) t.store_ = std::make_shared<std::vector<T>>(*store_);
    return t;
  }

  void fill(T v) { std::fill(store_->begin(), store_->end(), v); }

  void zero() { fill(T(0)); }

  template <typename F>
  void apply(F f) {
    for (auto& x : *store_) x = f(x);
  }

  void add_(const Tensor& o) {
    check_same(o);
    const T* src = o.data();
    T* dst = data();
    const std::int64_t n = numel();
    for (std::int64_t i = 0; i < n; ++i) dst[i] += src[i];
  }

  void scale_(T s) {
    for (auto& x : *store_) x *= s;
  }

  T min() const {
    return *std::min_element(store_->begin(), store_->end());
  }
  T max() const {
    return *std::max_element(store_->begin(), store_->end());
  }
  T abs_max() const {
    T m = 0;
    for (auto x : *store_) m = std::max(m, std::abs(x));
    return m;
  }
  double sum() const {
    double acc = 0;
    for (auto x : *store_) acc += static_cast<double>(x);
    return acc;
  }
  double mean() const { return numel() ? sum() / static_cast<double>(numel()) : 0.0; }

  bool all_finite() const {
    for (auto x : *store_) {
      if (!std::isfinite(static_cast<double>(x))) return false;
    }
    return true;
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(store_->size());
    for (std::size_t i = 0; i < store_->size(); ++i) out[i] = static_cast<U>((*store_)[i]);
    return Tensor<U>(shape_, std::move(out));
  }

  std::uint64_t checksum() const {
    return defined() ? fnv1a(store_->data(), store_->size() * sizeof(T)) : 0;
  }

 private:
  void check_same(const Tensor& o) const {
    if (!same_shape(o)) {
      throw StructuralError("shape mismatch: " + shape_string(shape_) + " vs " +
                            shape_string(o.shape_));
    }
  }

  Shape shape_;
  std::shared_ptr<std::vector<T>> store_;
};

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b)) {
    throw StructuralError("max_abs_diff: shape mismatch");
  }
  double m = 0;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  }
  return m;
}

template <typename T>
bool bitwise_equal(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b)) return false;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    if (a[i] != b[i]) return false;
  }
  return true;
}

}  // namespace advgen
