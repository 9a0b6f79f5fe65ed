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

#include "advgen/nn/classifier.hpp"

namespace advgen::attack {

/// Frozen classifier wrapper exposing a mid-level feature map. Gradients flow
/// through the network to the input, never into its parameters.
struct SurrogateSpec {
  std::string model_id = "vgg16";
  int feature_layer = 16;  // third max-pool for vgg16
  nn::InputNorm normalization;
  bool frozen = true;
};

template <typename T>
class Surrogate {
 public:
  Surrogate(nn::LayeredClassifier<T> net, SurrogateSpec spec)
      : net_(std::move(net)), spec_(std::move(spec)) {
    if (spec_.feature_layer < 0 || spec_.feature_layer >= net_.num_layers()) {
      throw ConfigError("feature layer " + std::to_string(spec_.feature_layer) +
                        " does not exist in '" + spec_.model_id + "' (" +
                        std::to_string(net_.num_layers()) + " layers)");
    }
    net_.set_norm(spec_.normalization);
    if (spec_.frozen) net_.freeze();
  }

  /// Mid-level feature of an in-range [0,1] batch; applies input
  /// normalization first.
  ag::Variable<T> features(const ag::Variable<T>& x01) const {
    return net_.features(x01, spec_.feature_layer);
  }

  /// Same feature map, skipping normalization (input already normalized).
  ag::Variable<T> features_raw(const ag::Variable<T>& x_normalized) const {
    return net_.run_layers(x_normalized, spec_.feature_layer);
  }

  std::vector<int> predict(const Tensor<T>& x01) const { return net_.predict(x01); }

  ag::Variable<T> logits(const ag::Variable<T>& x01) const { return net_.logits(x01); }

  const SurrogateSpec& spec() const { return spec_; }
  const nn::LayeredClassifier<T>& net() const { return net_; }
  std::uint64_t checksum() const { return net_.checksum(); }

 private:
  nn::LayeredClassifier<T> net_;
  SurrogateSpec spec_;
};

/// Spec variants for the mid-layer ablation harness.
inline std::vector<SurrogateSpec> mid_layer_sweep(const SurrogateSpec& base,
                                                  const std::vector<int>& layers) {
  std::vector<SurrogateSpec> out;
  out.reserve(layers.size());
  for (int k : layers) {
    SurrogateSpec s = base;
    s.feature_layer = k;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace advgen::attack
