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

#include <string>
#include <utility>
#include <vector>

#include "advgen/core/autograd.hpp"
#include "advgen/core/rng.hpp"

namespace advgen::nn {

template <typename T>
using NamedParams = std::vector<std::pair<std::string, ag::Variable<T>>>;

template <typename T>
std::int64_t parameter_count(const NamedParams<T>& params) {
  std::int64_t n = 0;
  for (const auto& [name, p] : params) n += p.value().numel();
  return n;
}

/// Combined FNV-1a checksum over all parameter bytes, order-sensitive.
template <typename T>
std::uint64_t parameter_checksum(const NamedParams<T>& params) {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& [name, p] : params) {
    h = fnv1a(name.data(), name.size(), h);
    h = fnv1a(p.value().data(), static_cast<std::size_t>(p.value().numel()) * sizeof(T), h);
  }
  return h;
}

template <typename T>
Tensor<T> normal_tensor(Shape shape, Rng& rng, double stddev, double mean = 0.0) {
  Tensor<T> t(std::move(shape));
  for (std::int64_t i = 0; i < t.numel(); ++i) {
    t[i] = static_cast<T>(rng.normal(mean, stddev));
  }
  return t;
}

enum class Init {
  kGaussian002,  // N(0, 0.02): image-to-image generator convention
  kHeNormal,     // N(0, sqrt(2/fan_in)): classifier convention
  kZero,
};

}  // namespace advgen::nn
