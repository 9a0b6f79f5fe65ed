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

#include <filesystem>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "advgen/core/tensor.hpp"

namespace advgen::io {

/// HWC BGR 8-bit Mat -> CHW RGB float in [0,1].
inline void mat_to_chw(const cv::Mat& bgr, float* dst) {
  const int h = bgr.rows, w = bgr.cols;
  for (int y = 0; y < h; ++y) {
    const cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < w; ++x) {
      dst[0 * h * w + y * w + x] = static_cast<float>(row[x][2]) / 255.0f;  // R
      dst[1 * h * w + y * w + x] = static_cast<float>(row[x][1]) / 255.0f;  // G
      dst[2 * h * w + y * w + x] = static_cast<float>(row[x][0]) / 255.0f;  // B
    }
  }
}

/// CHW RGB float in [0,1] -> HWC BGR 8-bit Mat (round to nearest).
inline cv::Mat chw_to_mat(const float* src, int h, int w) {
  cv::Mat bgr(h, w, CV_8UC3);
  for (int y = 0; y < h; ++y) {
    cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < w; ++x) {
      auto to_u8 = [](float v) {
        const float c = std::min(std::max(v, 0.0f), 1.0f);
        return static_cast<unsigned char>(c * 255.0f + 0.5f);
      };
      row[x][2] = to_u8(src[0 * h * w + y * w + x]);
      row[x][1] = to_u8(src[1 * h * w + y * w + x]);
      row[x][0] = to_u8(src[2 * h * w + y * w + x]);
    }
  }
  return bgr;
}

/// Extract sample n of an NCHW float tensor as a BGR Mat.
inline cv::Mat tensor_to_mat(const Tensor<float>& batch, std::int64_t n) {
  const int h = static_cast<int>(batch.dim(2)), w = static_cast<int>(batch.dim(3));
  return chw_to_mat(batch.data() + n * 3 * h * w, h, w);
}

inline void write_image(const std::filesystem::path& path, const cv::Mat& m) {
  if (!cv::imwrite(path.string(), m)) {
    throw DataError("failed to write image '" + path.string() + "'");
  }
}

/// Peak signal-to-noise ratio in dB between two [0,1] image batches.
inline double psnr(const Tensor<float>& a, const Tensor<float>& b, double peak = 1.0) {
  if (!a.same_shape(b)) throw StructuralError("psnr: shape mismatch");
  double mse = 0;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.numel());
  if (mse == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

/// Render a single-channel map as a color heatmap. Values are normalized to
/// [0,1] per map for display only.
inline cv::Mat colorize_map(const Tensor<float>& map2d) {
  if (map2d.ndim() != 2) throw StructuralError("colorize_map expects a 2-D map");
  const int h = static_cast<int>(map2d.dim(0)), w = static_cast<int>(map2d.dim(1));
  const float lo = map2d.min(), hi = map2d.max();
  const float span = hi - lo > 0 ? hi - lo : 1.0f;
  cv::Mat gray(h, w, CV_8UC1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const float v = (map2d[y * w + x] - lo) / span;
      gray.at<unsigned char>(y, x) = static_cast<unsigned char>(v * 255.0f + 0.5f);
    }
  }
  cv::Mat color;
  cv::applyColorMap(gray, color, cv::COLORMAP_VIRIDIS);
  return color;
}

}  // namespace advgen::io
