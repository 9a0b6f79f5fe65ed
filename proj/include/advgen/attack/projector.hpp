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

#include "advgen/core/ops.hpp"

namespace advgen::attack {

/// L-infinity budget, expressed in 8-bit pixel units (budget 10 means a
/// maximum per-pixel deviation of 10/255 in [0,1] space). The budget applies
/// to raw pixels, before any model-specific normalization.
struct PerturbationBudget {
  double epsilon_255 = 10.0;

  static PerturbationBudget from_255(double eps) {
    if (eps < 0) throw ConfigError("perturbation budget must be non-negative");
    return {eps};
  }

  double epsilon_unit() const { return epsilon_255 / 255.0; }
};

/// Clamp the unbounded adversarial image into the budget box around x, then
/// into the valid pixel range: out = min(max(x_adv, max(x-eps,0)), min(x+eps,1)).
/// Because x is in [0,1] the two clamps commute into one box; the result is
/// within eps of x, inside [0,1], idempotent, and differentiable a.e.
template <typename T>
ag::Variable<T> project(const ag::Variable<T>& x, const ag::Variable<T>& x_adv,
                        const PerturbationBudget& budget) {
  const Tensor<T>& xv = x.value();
  const Tensor<T>& av = x_adv.value();
  if (!xv.same_shape(av)) {
    throw StructuralError("project: benign " + shape_string(xv.shape()) +
                          " vs adversarial " + shape_string(av.shape()));
  }
  const T eps = static_cast<T>(budget.epsilon_unit());
  Tensor<T> lo(xv.shape()), hi(xv.shape());
  for (std::int64_t i = 0; i < xv.numel(); ++i) {
    lo[i] = std::max<T>(xv[i] - eps, T(0));
    hi[i] = std::min<T>(xv[i] + eps, T(1));
  }
  return ag::clamp_box(x_adv, lo, hi);
}

/// Plain-tensor overload for inference paths.
template <typename T>
Tensor<T> project(const Tensor<T>& x, const Tensor<T>& x_adv,
                  const PerturbationBudget& budget) {
  ag::NoGradGuard guard;
  return project(ag::Variable<T>::constant(x), ag::Variable<T>::constant(x_adv), budget)
      .value();
}

}  // namespace advgen::attack
