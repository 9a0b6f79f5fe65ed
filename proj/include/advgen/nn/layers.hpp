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
#include <string>

#include "advgen/core/ops.hpp"
#include "advgen/nn/module.hpp"

namespace advgen::nn {

namespace detail {
template <typename T>
Tensor<T> init_weight(Shape shape, std::int64_t fan_in, Init init, Rng& rng) {
  switch (init) {
    case Init::kGaussian002:
      return normal_tensor<T>(std::move(shape), rng, 0.02);
    case Init::kHeNormal:
      return normal_tensor<T>(std::move(shape), rng, std::sqrt(2.0 / static_cast<double>(fan_in)));
    case Init::kZero:
      return Tensor<T>(std::move(shape));
  }
  return Tensor<T>(std::move(shape));
}
}  // namespace detail

template <typename T>
struct Conv2d {
  ag::Variable<T> weight, bias;
  int stride = 1, pad = 0;

  Conv2d() = default;
  Conv2d(int in_ch, int out_ch, int k, int stride_, int pad_, Init init, Rng& rng)
      : stride(stride_), pad(pad_) {
    weight = ag::Variable<T>::leaf(
        detail::init_weight<T>({out_ch, in_ch, k, k}, std::int64_t(in_ch) * k * k, init, rng),
        true);
    bias = ag::Variable<T>::leaf(Tensor<T>({out_ch}), true);
  }

  ag::Variable<T> operator()(const ag::Variable<T>& x) const {
    return ag::conv2d(x, weight, bias, stride, pad);
  }

  void collect(NamedParams<T>& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".weight", weight);
    out.emplace_back(prefix + ".bias", bias);
  }
};

template <typename T>
struct ConvTranspose2d {
  ag::Variable<T> weight, bias;
  int stride = 1, pad = 0, output_pad = 0;

  ConvTranspose2d() = default;
  ConvTranspose2d(int in_ch, int out_ch, int k, int stride_, int pad_, int output_pad_,
                  Init init, Rng& rng)
      : stride(stride_), pad(pad_), output_pad(output_pad_) {
    weight = ag::Variable<T>::leaf(
        detail::init_weight<T>({in_ch, out_ch, k, k}, std::int64_t(in_ch) * k * k, init, rng),
        true);
    bias = ag::Variable<T>::leaf(Tensor<T>({out_ch}), true);
  }

  ag::Variable<T> operator()(const ag::Variable<T>& x) const {
    return ag::conv_transpose2d(x, weight, bias, stride, pad, output_pad);
  }

  void collect(NamedParams<T>& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".weight", weight);
    out.emplace_back(prefix + ".bias", bias);
  }
};

template <typename T>
struct InstanceNorm2d {
  ag::Variable<T> gamma, beta;

  InstanceNorm2d() = default;
  explicit InstanceNorm2d(int channels) {
    gamma = ag::Variable<T>::leaf(Tensor<T>::full({channels}, T(1)), true);
    beta = ag::Variable<T>::leaf(Tensor<T>({channels}), true);
  }

  ag::Variable<T> operator()(const ag::Variable<T>& x) const {
    return ag::instance_norm(x, gamma, beta);
  }

  void collect(NamedParams<T>& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".gamma", gamma);
    out.emplace_back(prefix + ".beta", beta);
  }
};

template <typename T>
struct Linear {
  ag::Variable<T> weight, bias;

  Linear() = default;
  Linear(int in_features, int out_features, Init init, Rng& rng) {
    weight = ag::Variable<T>::leaf(
        detail::init_weight<T>({out_features, in_features}, in_features, init, rng), true);
    bias = ag::Variable<T>::leaf(Tensor<T>({out_features}), true);
  }

  ag::Variable<T> operator()(const ag::Variable<T>& x) const {
    return ag::linear(x, weight, bias);
  }

  void collect(NamedParams<T>& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".weight", weight);
    out.emplace_back(prefix + ".bias", bias);
  }
};

}  // namespace advgen::nn
