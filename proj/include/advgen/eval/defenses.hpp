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
#include <vector>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "advgen/core/rng.hpp"
#include "advgen/io/image.hpp"

namespace advgen::eval {

enum class DefenseKind { kBDR, kRandomization, kJPEG };

/// Input-preprocessing defense applied to adversarial images before the
/// victim sees them (after projection, before victim normalization).
struct DefenseSpec {
  DefenseKind kind = DefenseKind::kBDR;
  int bits = 4;                          // BDR: quantization depth
  double resize_lo = 0.9, resize_hi = 1.1;  // randomization: scale range
  int jpeg_quality = 75;
  std::uint64_t seed = 0;                // randomization: reproducibility

  void validate() const {
    if (kind == DefenseKind::kBDR && (bits < 1 || bits > 8)) {
      throw ConfigError("bdr bits must lie in 1..8");
    }
    if (kind == DefenseKind::kJPEG && (jpeg_quality < 1 || jpeg_quality > 100)) {
      throw ConfigError("jpeg quality must lie in 1..100");
    }
    if (kind == DefenseKind::kRandomization &&
        !(resize_lo > 0 && resize_hi >= resize_lo)) {
      throw ConfigError("randomization resize range is invalid");
    }
  }

  std::string name() const {
    switch (kind) {
      case DefenseKind::kBDR: return "bdr(bits=" + std::to_string(bits) + ")";
      case DefenseKind::kRandomization: return "randomization(seed=" + std::to_string(seed) + ")";
      case DefenseKind::kJPEG: return "jpeg(quality=" + std::to_string(jpeg_quality) + ")";
    }
    return "?";
  }

  /// Parse CLI syntax: "bdr:4", "jpeg:75", "rp" / "randomization[:seed]".
  static DefenseSpec parse(const std::string& text) {
    DefenseSpec d;
    std::string head = text, arg;
    if (auto p = text.find(':'); p != std::string::npos) {
      head = text.substr(0, p);
      arg = text.substr(p + 1);
    }
    if (head == "bdr") {
      d.kind = DefenseKind::kBDR;
      if (!arg.empty()) d.bits = std::stoi(arg);
    } else if (head == "jpeg") {
      d.kind = DefenseKind::kJPEG;
      if (!arg.empty()) d.jpeg_quality = std::stoi(arg);
    } else if (head == "rp" || head == "randomization") {
      d.kind = DefenseKind::kRandomization;
      if (!arg.empty()) d.seed = std::stoull(arg);
    } else {
      throw ConfigError("unknown defense '" + text + "' (bdr:N | rp[:seed] | jpeg:Q)");
    }
    d.validate();
    return d;
  }
};

/// Bit-depth reduction: quantize to 2^bits levels,
/// q(x) = floor(x * (2^bits - 1) + 0.5) / (2^bits - 1).
inline Tensor<float> bdr(const Tensor<float>& x, int bits) {
  const float levels = static_cast<float>((1 << bits) - 1);
  Tensor<float> out = x.clone();
  out.apply([levels](float v) { return std::floor(v * levels + 0.5f) / levels; });
  return out;
}

/// Random resize-and-pad: per image, scale by u ~ U[lo, hi], then place at a
/// uniformly random offset on a zero canvas of ceil(hi * size). Seeded per
/// (seed, image index), so a fixed seed reproduces outputs exactly.
inline Tensor<float> randomize_pad(const Tensor<float>& x, const DefenseSpec& spec) {
  const std::int64_t n = x.dim(0);
  const int h = static_cast<int>(x.dim(2)), w = static_cast<int>(x.dim(3));
  const int canvas_h = static_cast<int>(std::ceil(spec.resize_hi * h));
  const int canvas_w = static_cast<int>(std::ceil(spec.resize_hi * w));
  Tensor<float> out({n, 3, canvas_h, canvas_w});
  for (std::int64_t i = 0; i < n; ++i) {
    Rng rng(split_seed(spec.seed, static_cast<std::uint64_t>(i)));
    const double u = rng.uniform(spec.resize_lo, spec.resize_hi);
    int nh = std::min(canvas_h, std::max(1, static_cast<int>(std::lround(u * h))));
    int nw = std::min(canvas_w, std::max(1, static_cast<int>(std::lround(u * w))));
    cv::Mat img = io::tensor_to_mat(x, i);
    cv::Mat resized;
    cv::resize(img, resized, cv::Size(nw, nh), 0, 0, cv::INTER_LINEAR);
    const int dy = static_cast<int>(rng.below(static_cast<std::uint64_t>(canvas_h - nh + 1)));
    const int dx = static_cast<int>(rng.below(static_cast<std::uint64_t>(canvas_w - nw + 1)));
    float* dst = out.data() + i * 3 * canvas_h * canvas_w;
    for (int y = 0; y < nh; ++y) {
      const cv::Vec3b* row = resized.ptr<cv::Vec3b>(y);
      for (int xx = 0; xx < nw; ++xx) {
        dst[0 * canvas_h * canvas_w + (y + dy) * canvas_w + (xx + dx)] = row[xx][2] / 255.0f;
        dst[1 * canvas_h * canvas_w + (y + dy) * canvas_w + (xx + dx)] = row[xx][1] / 255.0f;
        dst[2 * canvas_h * canvas_w + (y + dy) * canvas_w + (xx + dx)] = row[xx][0] / 255.0f;
      }
    }
  }
  return out;
}

/// JPEG round-trip at the configured quality. Requires the codec.
inline Tensor<float> jpeg_roundtrip(const Tensor<float>& x, int quality) {
  if (!cv::haveImageWriter(".jpg")) {
    throw ConfigError("jpeg defense requested but no JPEG codec is available");
  }
  const std::int64_t n = x.dim(0);
  const int h = static_cast<int>(x.dim(2)), w = static_cast<int>(x.dim(3));
  Tensor<float> out(x.shape());
  for (std::int64_t i = 0; i < n; ++i) {
    cv::Mat img = io::tensor_to_mat(x, i);
    std::vector<unsigned char> buf;
    if (!cv::imencode(".jpg", img, buf, {cv::IMWRITE_JPEG_QUALITY, quality})) {
      throw ConfigError("jpeg encoding failed");
    }
    cv::Mat decoded = cv::imdecode(buf, cv::IMREAD_COLOR);
    if (decoded.empty()) throw ConfigError("jpeg decoding failed");
    io::mat_to_chw(decoded, out.data() + i * 3 * h * w);
  }
  return out;
}

inline Tensor<float> defend(const Tensor<float>& x, const DefenseSpec& spec) {
  if (x.ndim() != 4 || x.dim(1) != 3) throw StructuralError("defend expects Nx3xHxW");
  spec.validate();
  switch (spec.kind) {
    case DefenseKind::kBDR: return bdr(x, spec.bits);
    case DefenseKind::kRandomization: return randomize_pad(x, spec);
    case DefenseKind::kJPEG: return jpeg_roundtrip(x, spec.jpeg_quality);
  }
  throw ConfigError("unreachable defense kind");
}

}  // namespace advgen::eval
