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

#include <memory>

#include "advgen/nn/generator.hpp"

namespace advgen::attack {

struct EMAConfig {
  double eta = 0.999;

  void validate() const {
    if (eta < 0.0 || eta > 1.0) throw ConfigError("eta must lie in [0, 1]");
  }
};

/// theta' <- eta * theta' + (1 - eta) * theta, applied name-wise across
/// structurally identical parameter trees. No gradient is involved; the
/// update mutates the teacher tensors in place.
template <typename T>
void ema_update_params(nn::NamedParams<T>& teacher, const nn::NamedParams<T>& student,
                       const EMAConfig& cfg) {
  cfg.validate();
  if (teacher.size() != student.size()) {
    throw StructuralError("ema_update: parameter tree size mismatch (" +
                          std::to_string(teacher.size()) + " vs " +
                          std::to_string(student.size()) + ")");
  }
  const T eta = static_cast<T>(cfg.eta);
  for (std::size_t i = 0; i < teacher.size(); ++i) {
    if (teacher[i].first != student[i].first ||
        !teacher[i].second.value().same_shape(student[i].second.value())) {
      throw StructuralError("ema_update: parameter tree mismatch at '" +
                            teacher[i].first + "'");
    }
    Tensor<T>& t = teacher[i].second.value();
    const Tensor<T>& s = student[i].second.value();
    const std::int64_t n = t.numel();
    T* tp = t.data();
    const T* sp = s.data();
    for (std::int64_t j = 0; j < n; ++j) tp[j] = eta * tp[j] + (T(1) - eta) * sp[j];
  }
}

/// Teacher generator maintained as the EMA of the student. Initialized with
/// the student's weights; serves as the inference-time generator. Teacher
/// parameters never require grad and teacher passes run off-tape.
template <typename T>
class MeanTeacher {
 public:
  MeanTeacher(const nn::Generator<T>& student, EMAConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    net_ = nn::build_generator<T>(student.config(), /*seed=*/0);
    nn::copy_parameters(student, *net_);
    freeze();
  }

  /// Restore path: build from config, parameters loaded separately.
  MeanTeacher(const nn::GeneratorConfig& config, EMAConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    net_ = nn::build_generator<T>(config, /*seed=*/0);
    freeze();
  }

  void ema_update(const nn::Generator<T>& student) {
    auto tp = net_->named_parameters();
    ema_update_params<T>(tp, student.named_parameters(), cfg_);
    ++step_count_;
  }

  /// Inference forward; taps and image are constants (stop-gradient).
  nn::GeneratorOutput<T> forward(const ag::Variable<T>& x) const {
    ag::NoGradGuard guard;
    return net_->forward(x.detach());
  }

  nn::FeatureBundle<T> encode(const ag::Variable<T>& x) const {
    ag::NoGradGuard guard;
    return net_->encode(x.detach());
  }

  nn::Generator<T>& net() { return *net_; }
  const nn::Generator<T>& net() const { return *net_; }
  std::uint64_t step_count() const { return step_count_; }
  void set_step_count(std::uint64_t c) { step_count_ = c; }
  const EMAConfig& config() const { return cfg_; }

 private:
  void freeze() {
    for (auto& [name, p] : net_->named_parameters()) p.set_requires_grad(false);
  }

  EMAConfig cfg_;
  std::unique_ptr<nn::Generator<T>> net_;
  std::uint64_t step_count_ = 0;
};

}  // namespace advgen::attack
