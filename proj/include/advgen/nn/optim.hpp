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

#include <cmath>

#include "advgen/nn/module.hpp"

namespace advgen::nn {

/// Adaptive moment estimation with bias correction, no weight decay.
template <typename T>
class Adam {
 public:
  struct Options {
    double lr = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.99;
    double eps = 1e-8;
  };

  Adam() = default;
  Adam(NamedParams<T> params, Options opt) : params_(std::move(params)), opt_(opt) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& [name, p] : params_) {
      m_.emplace_back(p.value().shape());
      v_.emplace_back(p.value().shape());
    }
  }

  void zero_grad() {
    for (auto& [name, p] : params_) p.zero_grad();
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i].second;
      if (!p.has_grad()) continue;
      const Tensor<T>& g = p.grad();
      Tensor<T>& val = p.value();
      Tensor<T>& m = m_[i];
      Tensor<T>& v = v_[i];
      const std::int64_t n = val.numel();
      for (std::int64_t j = 0; j < n; ++j) {
        const double gj = g[j];
        m[j] = static_cast<T>(opt_.beta1 * m[j] + (1.0 - opt_.beta1) * gj);
        v[j] = static_cast<T>(opt_.beta2 * v[j] + (1.0 - opt_.beta2) * gj * gj);
        const double mhat = m[j] / bc1;
        const double vhat = v[j] / bc2;
        val[j] -= static_cast<T>(opt_.lr * mhat / (std::sqrt(vhat) + opt_.eps));
      }
    }
  }

  std::int64_t step_count() const { return t_; }
  const Options& options() const { return opt_; }
  const NamedParams<T>& params() const { return params_; }

  /// Moment access for exact-resume serialization; indices follow the
  /// parameter registration order.
  const Tensor<T>& moment1(std::size_t i) const { return m_[i]; }
  const Tensor<T>& moment2(std::size_t i) const { return v_[i]; }
  void restore_state(std::size_t i, Tensor<T> m, Tensor<T> v) {
    if (!m.same_shape(m_[i]) || !v.same_shape(v_[i])) {
      throw StructuralError("optimizer state shape mismatch");
    }
    m_[i] = std::move(m);
    v_[i] = std::move(v);
  }
  void set_step_count(std::int64_t t) { t_ = t; }

 private:
  NamedParams<T> params_;
  Options opt_;
  std::vector<Tensor<T>> m_, v_;
  std::int64_t t_ = 0;
};

}  // namespace advgen::nn
