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

#include <vector>

#include "advgen/nn/generator.hpp"

namespace advgen::attack {

/// Configuration of the hinge feature-distillation loss. weight_logits are
/// learnable (softmax-normalized per use) and span exactly the distilled
/// blocks. The default hinges the batch-mean cosine per block; the per-sample
/// alternative is exposed as a flag.
struct DistillConfig {
  double tau = 0.6;
  double lambda_distill = 0.7;
  std::vector<int> early_blocks = {1, 2};
  bool per_sample_hinge = false;

  void validate() const {
    if (tau < -1.0 || tau > 1.0) throw ConfigError("tau must lie in [-1, 1]");
    if (lambda_distill < 0.0) throw ConfigError("lambda_distill must be >= 0");
    if (early_blocks.empty()) throw ConfigError("early_blocks must not be empty");
  }
};

struct LossBreakdown {
  double adv = 0.0;
  double distill = 0.0;
  double total = 0.0;
  std::vector<double> per_block_distill;  // unweighted hinge terms
};

/// Feature-space adversarial loss: batch mean of the per-sample cosine
/// between benign and adversarial surrogate features. Minimizing it drives
/// the adversarial features away from the benign ones; range [-1, 1].
template <typename T>
ag::Variable<T> adv_loss(const ag::Variable<T>& f_benign, const ag::Variable<T>& f_adv) {
  return ag::mean_all(ag::cosine_pairs(f_benign, f_adv));
}

/// Softmax block weights: strictly positive, sum to one, shift-invariant.
/// Finite logits are a precondition; a non-finite value propagates into the
/// loss, where the trainer's NaN abort reports it with batch diagnostics.
template <typename T>
ag::Variable<T> block_weights(const ag::Variable<T>& logits) {
  return ag::softmax1d(logits);
}

template <typename T>
struct DistillResult {
  ag::Variable<T> loss;                   // weighted sum of hinge terms
  std::vector<double> per_block;          // unweighted hinge per block
};

/// Hinge distillation over the configured early blocks:
///   sum_l w_l * max(0, tau - cos(student_l, teacher_l)).
/// Teacher taps must carry no gradient (stop-gradient reference).
template <typename T>
DistillResult<T> distill_loss(const nn::FeatureBundle<T>& student_taps,
                              const nn::FeatureBundle<T>& teacher_taps,
                              const DistillConfig& cfg,
                              const ag::Variable<T>& weight_logits) {
  cfg.validate();
  if (weight_logits.value().numel() !=
      static_cast<std::int64_t>(cfg.early_blocks.size())) {
    throw StructuralError("weight_logits length must equal |early_blocks|");
  }
  std::vector<ag::Variable<T>> hinges;
  hinges.reserve(cfg.early_blocks.size());
  std::vector<double> per_block;
  const T tau = static_cast<T>(cfg.tau);
  for (int blk : cfg.early_blocks) {
    const auto& s = student_taps.at(blk);
    const auto& t = teacher_taps.at(blk);
    if (!s.value().same_shape(t.value())) {
      throw StructuralError("distill_loss: block " + std::to_string(blk) +
                            " shape mismatch");
    }
    if (t.requires_grad()) {
      throw StructuralError("teacher taps must be gradient-free");
    }
    auto cos = ag::cosine_pairs(s, t);  // [N]
    ag::Variable<T> hinge;
    if (cfg.per_sample_hinge) {
      hinge = ag::mean_all(ag::relu(ag::rsub_scalar(cos, tau)));
    } else {
      hinge = ag::relu(ag::rsub_scalar(ag::mean_all(cos), tau));
    }
    per_block.push_back(static_cast<double>(hinge.value()[0]));
    hinges.push_back(hinge);
  }
  auto weights = block_weights(weight_logits);
  auto weighted = ag::sum_all(ag::mul(weights, ag::stack_scalars(hinges)));
  return {weighted, std::move(per_block)};
}

/// Final objective: adv + lambda_distill * distill.
template <typename T>
ag::Variable<T> total_loss(const ag::Variable<T>& adv, const ag::Variable<T>& distill,
                           double lambda_distill) {
  if (lambda_distill < 0.0) throw ConfigError("lambda_distill must be >= 0");
  return ag::add(adv, ag::scale(distill, static_cast<T>(lambda_distill)));
}

}  // namespace advgen::attack
