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

#include <array>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "advgen/nn/layers.hpp"

namespace advgen::nn {

/// Per-channel input normalization constants, in [0,1] pixel units.
struct InputNorm {
  std::array<double, 3> mean{0.485, 0.456, 0.406};
  std::array<double, 3> stddev{0.229, 0.224, 0.225};
};

/// Sequential image classifier with integer-indexed layers, so "the feature
/// at layer k" has one unambiguous meaning per architecture. Convolutional
/// trunk + global average pooling + linear head; any input size the trunk
/// accepts works.
template <typename T>
class LayeredClassifier {
 public:
  struct ConvL {
    Conv2d<T> conv;
  };
  struct ReluL {};
  struct PoolL {
    int k = 2, s = 2;
  };
  struct GapL {};
  struct LinearL {
    Linear<T> lin;
  };
  using Layer = std::variant<ConvL, ReluL, PoolL, GapL, LinearL>;

  LayeredClassifier() = default;
  LayeredClassifier(std::string arch, std::vector<Layer> layers, int num_classes,
                    InputNorm norm)
      : arch_(std::move(arch)),
        layers_(std::move(layers)),
        num_classes_(num_classes),
        norm_(norm) {}

  const std::string& arch() const { return arch_; }
  int num_classes() const { return num_classes_; }
  int num_layers() const { return static_cast<int>(layers_.size()); }
  const InputNorm& norm() const { return norm_; }
  void set_norm(const InputNorm& n) { norm_ = n; }

  /// (x - mean) / std per channel; input in [0,1], NCHW with 3 channels.
  ag::Variable<T> normalize(const ag::Variable<T>& x01) const {
    const Tensor<T>& xv = x01.value();
    if (xv.ndim() != 4 || xv.dim(1) != 3) {
      throw StructuralError("classifier input must be Nx3xHxW");
    }
    const std::int64_t N = xv.dim(0), M = xv.dim(2) * xv.dim(3);
    // y = (x - mean)/std as a channelwise affine x * (1/std) - mean/std
    Tensor<T> out(xv.shape());
    std::array<T, 3> a, b;
    for (int c = 0; c < 3; ++c) {
      a[static_cast<std::size_t>(c)] = static_cast<T>(1.0 / norm_.stddev[static_cast<std::size_t>(c)]);
      b[static_cast<std::size_t>(c)] =
          static_cast<T>(-norm_.mean[static_cast<std::size_t>(c)] / norm_.stddev[static_cast<std::size_t>(c)]);
    }
    for (std::int64_t n = 0; n < N; ++n) {
      for (int c = 0; c < 3; ++c) {
        const T* src = xv.data() + (n * 3 + c) * M;
        T* dst = out.data() + (n * 3 + c) * M;
        for (std::int64_t i = 0; i < M; ++i) dst[i] = a[static_cast<std::size_t>(c)] * src[i] + b[static_cast<std::size_t>(c)];
      }
    }
    auto bp_fn = [a, N, M](ag::Node<T>& node) {
      if (!node.parents[0]->requires_grad) return;
      Tensor<T> d(node.grad.shape());
      for (std::int64_t n = 0; n < N; ++n) {
        for (int c = 0; c < 3; ++c) {
          const T* g = node.grad.data() + (n * 3 + c) * M;
          T* dp = d.data() + (n * 3 + c) * M;
          for (std::int64_t i = 0; i < M; ++i) dp[i] = g[i] * a[static_cast<std::size_t>(c)];
        }
      }
      ag::accumulate(node.parents[0], d);
    };
    return ag::make_op<T>(std::move(out), {x01}, std::move(bp_fn));
  }

  /// Run normalized input through layers [0, upto]; upto = -1 runs all.
  ag::Variable<T> run_layers(const ag::Variable<T>& xn, int upto = -1) const {
    if (upto >= num_layers()) {
      throw ConfigError("layer index " + std::to_string(upto) + " out of range; " +
                        arch_ + " has " + std::to_string(num_layers()) + " layers");
    }
    ag::Variable<T> h = xn;
    const int last = upto < 0 ? num_layers() - 1 : upto;
    for (int i = 0; i <= last; ++i) {
      const auto& layer = layers_[static_cast<std::size_t>(i)];
      if (std::holds_alternative<ConvL>(layer)) {
        h = std::get<ConvL>(layer).conv(h);
      } else if (std::holds_alternative<ReluL>(layer)) {
        h = ag::relu(h);
      } else if (std::holds_alternative<PoolL>(layer)) {
        const auto& p = std::get<PoolL>(layer);
        h = ag::maxpool2d(h, p.k, p.s);
      } else if (std::holds_alternative<GapL>(layer)) {
        h = ag::global_avg_pool(h);
      } else {
        h = std::get<LinearL>(layer).lin(h);
      }
    }
    return h;
  }

  /// Mid-level feature of an in-range [0,1] image batch.
  ag::Variable<T> features(const ag::Variable<T>& x01, int layer) const {
    if (layer < 0 || layer >= num_layers()) {
      throw ConfigError("feature layer " + std::to_string(layer) + " does not exist in " +
                        arch_);
    }
    return run_layers(normalize(x01), layer);
  }

  ag::Variable<T> logits(const ag::Variable<T>& x01) const {
    return run_layers(normalize(x01), -1);
  }

  /// Argmax predictions, ties to the lowest class index. Pure inference.
  std::vector<int> predict(const Tensor<T>& x01) const {
    ag::NoGradGuard guard;
    auto out = logits(ag::Variable<T>::constant(x01));
    return ag::argmax_rows(out.value());
  }

  NamedParams<T> named_parameters() const {
    NamedParams<T> out;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const std::string p = "l" + std::to_string(i);
      if (std::holds_alternative<ConvL>(layers_[i])) {
        std::get<ConvL>(layers_[i]).conv.collect(out, p);
      } else if (std::holds_alternative<LinearL>(layers_[i])) {
        std::get<LinearL>(layers_[i]).lin.collect(out, p);
      }
    }
    return out;
  }

  void freeze() {
    for (auto& [name, p] : named_parameters()) p.set_requires_grad(false);
    frozen_ = true;
  }
  bool frozen() const { return frozen_; }

  std::uint64_t checksum() const { return parameter_checksum(named_parameters()); }

 private:
  std::string arch_;
  std::vector<Layer> layers_;
  int num_classes_ = 0;
  InputNorm norm_;
  bool frozen_ = false;
};

/// VGG-16 convolutional trunk with the canonical layer enumeration
/// (conv/relu interleaved, max-pool closing each stage), so layer 16 is the
/// third max-pool. The dense head is replaced by GAP + linear; mid-level
/// feature extraction, which is all the attack uses, is unaffected.
template <typename T>
LayeredClassifier<T> make_vgg16(int num_classes, std::uint64_t seed,
                                InputNorm norm = {}) {
  Rng rng(seed);
  using L = typename LayeredClassifier<T>::Layer;
  std::vector<L> layers;
  const int plan[] = {64, 64, -1, 128, 128, -1, 256, 256, 256, -1,
                      512, 512, 512, -1, 512, 512, 512, -1};
  int in_ch = 3;
  for (int spec : plan) {
    if (spec == -1) {
      layers.push_back(typename LayeredClassifier<T>::PoolL{2, 2});
    } else {
      layers.push_back(typename LayeredClassifier<T>::ConvL{
          Conv2d<T>(in_ch, spec, 3, 1, 1, Init::kHeNormal, rng)});
      layers.push_back(typename LayeredClassifier<T>::ReluL{});
      in_ch = spec;
    }
  }
  layers.push_back(typename LayeredClassifier<T>::GapL{});
  layers.push_back(typename LayeredClassifier<T>::LinearL{
      Linear<T>(512, num_classes, Init::kHeNormal, rng)});
  return LayeredClassifier<T>("vgg16", std::move(layers), num_classes, norm);
}

/// Compact classifier for desk-scale runs. Three max-pool stages mirror the
/// "mid-level feature at the third max-pool" convention; that is layer 8.
template <typename T>
LayeredClassifier<T> make_small_cnn(int width, int num_classes, std::uint64_t seed,
                                    bool deep = false, InputNorm norm = {}) {
  Rng rng(seed);
  using LC = LayeredClassifier<T>;
  std::vector<typename LC::Layer> layers;
  auto conv = [&](int in, int out) {
    layers.push_back(typename LC::ConvL{Conv2d<T>(in, out, 3, 1, 1, Init::kHeNormal, rng)});
    layers.push_back(typename LC::ReluL{});
  };
  conv(3, width);
  layers.push_back(typename LC::PoolL{2, 2});
  conv(width, 2 * width);
  layers.push_back(typename LC::PoolL{2, 2});
  conv(2 * width, 4 * width);
  layers.push_back(typename LC::PoolL{2, 2});
  conv(4 * width, 4 * width);
  if (deep) conv(4 * width, 4 * width);
  layers.push_back(typename LC::GapL{});
  layers.push_back(typename LC::LinearL{
      Linear<T>(4 * width, num_classes, Init::kHeNormal, rng)});
  const std::string name = deep ? "smallcnn_deep" : (width == 32 ? "smallcnn" : "smallcnn_w" + std::to_string(width));
  return LayeredClassifier<T>(name, std::move(layers), num_classes, norm);
}

/// Architecture factory used by the model registry.
template <typename T>
LayeredClassifier<T> make_classifier(const std::string& arch, int num_classes,
                                     std::uint64_t seed, InputNorm norm = {}) {
  if (arch == "vgg16") return make_vgg16<T>(num_classes, seed, norm);
  if (arch == "smallcnn") return make_small_cnn<T>(32, num_classes, seed, false, norm);
  if (arch == "smallcnn_w48") return make_small_cnn<T>(48, num_classes, seed, false, norm);
  if (arch == "smallcnn_deep") return make_small_cnn<T>(32, num_classes, seed, true, norm);
  throw ConfigError("unknown classifier architecture '" + arch + "'");
}

/// Default mid-level feature layer per architecture: the third max-pool.
inline int default_feature_layer(const std::string& arch) {
  if (arch == "vgg16") return 16;
  return 8;  // smallcnn family
}

}  // namespace advgen::nn
