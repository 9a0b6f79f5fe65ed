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
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "advgen/nn/layers.hpp"

namespace advgen::nn {

enum class GenArch { kResNet, kUNet };

inline std::string to_string(GenArch a) {
  return a == GenArch::kResNet ? "resnet" : "unet";
}

inline GenArch gen_arch_from_string(const std::string& s) {
  if (s == "resnet") return GenArch::kResNet;
  if (s == "unet") return GenArch::kUNet;
  throw ConfigError("unknown generator architecture '" + s + "'");
}

/// Perturbation generator configuration. An empty tap_blocks list resolves
/// to the architecture default (all residual blocks / the bottleneck).
struct GeneratorConfig {
  GenArch architecture = GenArch::kResNet;
  int input_channels = 3;
  int base_width = 64;
  int num_residual_blocks = 6;
  std::vector<int> tap_blocks;
};

/// Ordered per-block intermediate activations from one forward pass.
template <typename T>
struct FeatureBundle {
  std::vector<std::pair<int, ag::Variable<T>>> blocks;

  bool has(int index) const {
    for (const auto& [i, v] : blocks) {
      if (i == index) return true;
    }
    return false;
  }

  const ag::Variable<T>& at(int index) const {
    for (const auto& [i, v] : blocks) {
      if (i == index) return v;
    }
    throw StructuralError("feature bundle has no block " + std::to_string(index));
  }

  std::vector<int> indices() const {
    std::vector<int> out;
    out.reserve(blocks.size());
    for (const auto& [i, v] : blocks) out.push_back(i);
    return out;
  }
};

template <typename T>
struct GeneratorOutput {
  ag::Variable<T> image;  // unbounded adversarial image, values in (0,1)
  FeatureBundle<T> taps;
};

template <typename T>
class Generator {
 public:
  virtual ~Generator() = default;

  virtual GeneratorOutput<T> forward(const ag::Variable<T>& x) = 0;
  virtual FeatureBundle<T> encode(const ag::Variable<T>& x) = 0;
  virtual NamedParams<T> named_parameters() const = 0;
  virtual const GeneratorConfig& config() const = 0;
  virtual int downsampling_factor() const = 0;

  std::int64_t parameter_count() const { return nn::parameter_count(named_parameters()); }

 protected:
  void check_input(const Tensor<T>& x) const {
    if (x.ndim() != 4) throw StructuralError("generator input must be NCHW");
    if (x.dim(1) != config().input_channels) {
      throw StructuralError("generator expects " +
                            std::to_string(config().input_channels) + " channels, got " +
                            std::to_string(x.dim(1)));
    }
    const int f = downsampling_factor();
    if (x.dim(2) % f != 0 || x.dim(3) % f != 0) {
      throw StructuralError("generator input " + shape_string(x.shape()) +
                            " not divisible by downsampling factor " + std::to_string(f));
    }
  }
};

namespace detail {

inline std::vector<int> resolve_taps(const GeneratorConfig& cfg) {
  if (cfg.architecture == GenArch::kUNet) {
    if (cfg.tap_blocks.empty() || cfg.tap_blocks == std::vector<int>{1}) return {1};
    throw ConfigError("unet generator exposes a single bottleneck tap (block 1)");
  }
  if (cfg.num_residual_blocks < 1) {
    throw ConfigError("resnet generator needs at least one residual block");
  }
  std::vector<int> taps = cfg.tap_blocks;
  if (taps.empty()) {
    for (int i = 1; i <= cfg.num_residual_blocks; ++i) taps.push_back(i);
    return taps;
  }
  std::sort(taps.begin(), taps.end());
  taps.erase(std::unique(taps.begin(), taps.end()), taps.end());
  for (int t : taps) {
    if (t < 1 || t > cfg.num_residual_blocks) {
      throw ConfigError("tap block " + std::to_string(t) + " out of range 1.." +
                        std::to_string(cfg.num_residual_blocks));
    }
  }
  return taps;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// ResNet-style generator: c7s1-w, two stride-2 downs (2w, 4w), N residual
// blocks at 4w, two stride-2 ups (2w, w), c7s1-3, unit-interval tanh.
// Taps are the residual block outputs.
// ---------------------------------------------------------------------------

template <typename T>
class ResNetGenerator final : public Generator<T> {
 public:
  ResNetGenerator(const GeneratorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.tap_blocks = detail::resolve_taps(cfg);
    Rng rng(seed);
    const int w = cfg_.base_width;
    stem_ = Conv2d<T>(cfg_.input_channels, w, 7, 1, 3, Init::kGaussian002, rng);
    stem_norm_ = InstanceNorm2d<T>(w);
    down1_ = Conv2d<T>(w, 2 * w, 3, 2, 1, Init::kGaussian002, rng);
    down1_norm_ = InstanceNorm2d<T>(2 * w);
    down2_ = Conv2d<T>(2 * w, 4 * w, 3, 2, 1, Init::kGaussian002, rng);
    down2_norm_ = InstanceNorm2d<T>(4 * w);
    blocks_.reserve(static_cast<std::size_t>(cfg_.num_residual_blocks));
    for (int i = 0; i < cfg_.num_residual_blocks; ++i) {
      blocks_.push_back(ResBlock(4 * w, rng));
    }
    up1_ = ConvTranspose2d<T>(4 * w, 2 * w, 3, 2, 1, 1, Init::kGaussian002, rng);
    up1_norm_ = InstanceNorm2d<T>(2 * w);
    up2_ = ConvTranspose2d<T>(2 * w, w, 3, 2, 1, 1, Init::kGaussian002, rng);
    up2_norm_ = InstanceNorm2d<T>(w);
    head_ = Conv2d<T>(w, cfg_.input_channels, 7, 1, 3, Init::kGaussian002, rng);
  }

  GeneratorOutput<T> forward(const ag::Variable<T>& x) override {
    auto enc = run_encoder(x);
    return {decode(enc.last), std::move(enc.taps)};
  }

  FeatureBundle<T> encode(const ag::Variable<T>& x) override {
    return run_encoder(x).taps;
  }

  NamedParams<T> named_parameters() const override {
    NamedParams<T> out;
    stem_.collect(out, "stem.conv");
    stem_norm_.collect(out, "stem.norm");
    down1_.collect(out, "down1.conv");
    down1_norm_.collect(out, "down1.norm");
    down2_.collect(out, "down2.conv");
    down2_norm_.collect(out, "down2.norm");
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      const std::string p = "block" + std::to_string(i + 1);
      blocks_[i].conv1.collect(out, p + ".conv1");
      blocks_[i].norm1.collect(out, p + ".norm1");
      blocks_[i].conv2.collect(out, p + ".conv2");
      blocks_[i].norm2.collect(out, p + ".norm2");
    }
    up1_.collect(out, "up1.conv");
    up1_norm_.collect(out, "up1.norm");
    up2_.collect(out, "up2.conv");
    up2_norm_.collect(out, "up2.norm");
    head_.collect(out, "head.conv");
    return out;
  }

  const GeneratorConfig& config() const override { return cfg_; }
  int downsampling_factor() const override { return 4; }

  /// Test hook: zero the final convolution so the output is constant 0.5.
  void zero_head() {
    head_.weight.value().zero();
    head_.bias.value().zero();
  }

 private:
  struct ResBlock {
    Conv2d<T> conv1, conv2;
    InstanceNorm2d<T> norm1, norm2;
    ResBlock(int ch, Rng& rng)
        : conv1(ch, ch, 3, 1, 1, Init::kGaussian002, rng),
          conv2(ch, ch, 3, 1, 1, Init::kGaussian002, rng),
          norm1(ch),
          norm2(ch) {}
    ag::Variable<T> operator()(const ag::Variable<T>& x) const {
      auto h = ag::relu(norm1(conv1(x)));
      h = norm2(conv2(h));
      return ag::add(x, h);
    }
  };

  struct EncodeState {
    FeatureBundle<T> taps;
    ag::Variable<T> last;
  };

  EncodeState run_encoder(const ag::Variable<T>& x) {
    this->check_input(x.value());
    auto h = ag::relu(stem_norm_(stem_(x)));
    h = ag::relu(down1_norm_(down1_(h)));
    h = ag::relu(down2_norm_(down2_(h)));
    EncodeState st;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      h = blocks_[i](h);
      const int idx = static_cast<int>(i) + 1;
      if (std::find(cfg_.tap_blocks.begin(), cfg_.tap_blocks.end(), idx) !=
          cfg_.tap_blocks.end()) {
        st.taps.blocks.emplace_back(idx, h);
      }
    }
    st.last = h;
    return st;
  }

  ag::Variable<T> decode(const ag::Variable<T>& h) {
    auto u = ag::relu(up1_norm_(up1_(h)));
    u = ag::relu(up2_norm_(up2_(u)));
    return ag::tanh_unit(head_(u));
  }

  GeneratorConfig cfg_;
  Conv2d<T> stem_, down1_, down2_, head_;
  InstanceNorm2d<T> stem_norm_, down1_norm_, down2_norm_, up1_norm_, up2_norm_;
  std::vector<ResBlock> blocks_;
  ConvTranspose2d<T> up1_, up2_;
};

// ---------------------------------------------------------------------------
// U-Net generator: 4-level symmetric encoder/decoder with skip connections,
// single tap at the level-4 bottleneck (block index 1). Downsampling factor 8.
// ---------------------------------------------------------------------------

template <typename T>
class UNetGenerator final : public Generator<T> {
 public:
  UNetGenerator(const GeneratorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.tap_blocks = detail::resolve_taps(cfg);
    Rng rng(seed);
    const int w = cfg_.base_width;
    enc1_ = ConvBlock(cfg_.input_channels, w, rng);
    enc2_ = ConvBlock(w, 2 * w, rng);
    enc3_ = ConvBlock(2 * w, 4 * w, rng);
    bottleneck_ = ConvBlock(4 * w, 8 * w, rng);
    up3_ = ConvTranspose2d<T>(8 * w, 4 * w, 3, 2, 1, 1, Init::kGaussian002, rng);
    dec3_ = ConvBlock(8 * w, 4 * w, rng);
    up2_ = ConvTranspose2d<T>(4 * w, 2 * w, 3, 2, 1, 1, Init::kGaussian002, rng);
    dec2_ = ConvBlock(4 * w, 2 * w, rng);
    up1_ = ConvTranspose2d<T>(2 * w, w, 3, 2, 1, 1, Init::kGaussian002, rng);
    dec1_ = ConvBlock(2 * w, w, rng);
    head_ = Conv2d<T>(w, cfg_.input_channels, 3, 1, 1, Init::kGaussian002, rng);
  }

  GeneratorOutput<T> forward(const ag::Variable<T>& x) override {
    auto st = run_encoder(x);
    auto d3 = dec3_(ag::concat_channels(up3_(st.bottom), st.s3));
    auto d2 = dec2_(ag::concat_channels(up2_(d3), st.s2));
    auto d1 = dec1_(ag::concat_channels(up1_(d2), st.s1));
    GeneratorOutput<T> out;
    out.image = ag::tanh_unit(head_(d1));
    out.taps.blocks.emplace_back(1, st.bottom);
    return out;
  }

  FeatureBundle<T> encode(const ag::Variable<T>& x) override {
    auto st = run_encoder(x);
    FeatureBundle<T> taps;
    taps.blocks.emplace_back(1, st.bottom);
    return taps;
  }

  NamedParams<T> named_parameters() const override {
    NamedParams<T> out;
    enc1_.collect(out, "enc1");
    enc2_.collect(out, "enc2");
    enc3_.collect(out, "enc3");
    bottleneck_.collect(out, "bottleneck");
    up3_.collect(out, "up3");
    dec3_.collect(out, "dec3");
    up2_.collect(out, "up2");
    dec2_.collect(out, "dec2");
    up1_.collect(out, "up1");
    dec1_.collect(out, "dec1");
    head_.collect(out, "head.conv");
    return out;
  }

  const GeneratorConfig& config() const override { return cfg_; }
  int downsampling_factor() const override { return 8; }

 private:
  struct ConvBlock {
    Conv2d<T> conv1, conv2;
    InstanceNorm2d<T> norm1, norm2;
    ConvBlock() = default;
    ConvBlock(int in_ch, int out_ch, Rng& rng)
        : conv1(in_ch, out_ch, 3, 1, 1, Init::kGaussian002, rng),
          conv2(out_ch, out_ch, 3, 1, 1, Init::kGaussian002, rng),
          norm1(out_ch),
          norm2(out_ch) {}
    ag::Variable<T> operator()(const ag::Variable<T>& x) const {
      auto h = ag::relu(norm1(conv1(x)));
      return ag::relu(norm2(conv2(h)));
    }
    void collect(NamedParams<T>& out, const std::string& p) const {
      conv1.collect(out, p + ".conv1");
      norm1.collect(out, p + ".norm1");
      conv2.collect(out, p + ".conv2");
      norm2.collect(out, p + ".norm2");
    }
  };

  struct EncodeState {
    ag::Variable<T> s1, s2, s3, bottom;
  };

  EncodeState run_encoder(const ag::Variable<T>& x) {
    this->check_input(x.value());
    EncodeState st;
    st.s1 = enc1_(x);
    st.s2 = enc2_(ag::maxpool2d(st.s1, 2, 2));
    st.s3 = enc3_(ag::maxpool2d(st.s2, 2, 2));
    st.bottom = bottleneck_(ag::maxpool2d(st.s3, 2, 2));
    return st;
  }

  GeneratorConfig cfg_;
  ConvBlock enc1_, enc2_, enc3_, bottleneck_, dec3_, dec2_, dec1_;
  ConvTranspose2d<T> up3_, up2_, up1_;
  Conv2d<T> head_;
};

/// Factory. Parameter count is a pure function of the config; the seed only
/// drives the initialization values.
template <typename T>
std::unique_ptr<Generator<T>> build_generator(const GeneratorConfig& cfg,
                                              std::uint64_t seed) {
  if (cfg.input_channels < 1) throw ConfigError("input_channels must be positive");
  if (cfg.base_width < 1) throw ConfigError("base_width must be positive");
  if (cfg.architecture == GenArch::kResNet) {
    return std::make_unique<ResNetGenerator<T>>(cfg, seed);
  }
  return std::make_unique<UNetGenerator<T>>(cfg, seed);
}

/// Copy parameters between structurally identical generators (student ->
/// teacher initialization, checkpoint restore).
template <typename T>
void copy_parameters(const Generator<T>& src, Generator<T>& dst) {
  auto a = src.named_parameters();
  auto b = dst.named_parameters();
  if (a.size() != b.size()) throw StructuralError("parameter tree size mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].first != b[i].first || !a[i].second.value().same_shape(b[i].second.value())) {
      throw StructuralError("parameter tree mismatch at '" + a[i].first + "'");
    }
    std::copy(a[i].second.value().data(),
              a[i].second.value().data() + a[i].second.value().numel(),
              b[i].second.value().data());
  }
}

}  // namespace advgen::nn
