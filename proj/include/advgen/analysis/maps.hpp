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
#include <string>
#include <vector>

#include <json.hpp>

#include "advgen/io/image.hpp"
#include "advgen/nn/generator.hpp"

namespace advgen::analysis {

/// Cross-channel pooled activation map of one sample at one block:
/// values[h][w] = (1/C) * sum_c |activation[c][h][w]|. Non-negative.
struct PooledMap {
  int block_index = 0;
  Tensor<float> values;  // H' x W'
};

template <typename T>
PooledMap pooled_activation(const nn::FeatureBundle<T>& taps, int block,
                            std::int64_t sample = 0) {
  const auto& act = taps.at(block).value();
  if (sample < 0 || sample >= act.dim(0)) {
    throw StructuralError("pooled_activation: sample index out of range");
  }
  const std::int64_t C = act.dim(1), H = act.dim(2), W = act.dim(3);
  PooledMap map;
  map.block_index = block;
  map.values = Tensor<float>({H, W});
  const T* base = act.data() + sample * C * H * W;
  for (std::int64_t c = 0; c < C; ++c) {
    const T* plane = base + c * H * W;
    for (std::int64_t i = 0; i < H * W; ++i) {
      map.values[i] += static_cast<float>(std::abs(static_cast<double>(plane[i])));
    }
  }
  map.values.scale_(1.0f / static_cast<float>(C));
  return map;
}

/// Thresholded difference mask: 1 where pooled_b > pooled_a ("b adds noise
/// over a"), else 0. Strict inequality, so diff(a, a) is identically zero.
inline Tensor<float> diff_mask(const PooledMap& pooled_a, const PooledMap& pooled_b) {
  if (!pooled_a.values.same_shape(pooled_b.values)) {
    throw StructuralError("diff_mask: shape mismatch");
  }
  Tensor<float> mask(pooled_a.values.shape());
  for (std::int64_t i = 0; i < mask.numel(); ++i) {
    mask[i] = pooled_b.values[i] - pooled_a.values[i] > 0.0f ? 1.0f : 0.0f;
  }
  return mask;
}

/// Noise added between two blocks: cross-channel mean of |g_j - g_i|.
template <typename T>
PooledMap block_noise_map(const nn::FeatureBundle<T>& taps, int block_i, int block_j,
                          std::int64_t sample = 0) {
  const auto& a = taps.at(block_i).value();
  const auto& b = taps.at(block_j).value();
  if (!a.same_shape(b)) {
    throw StructuralError("block_noise_map: blocks have different shapes");
  }
  if (sample < 0 || sample >= a.dim(0)) {
    throw StructuralError("block_noise_map: sample index out of range");
  }
  const std::int64_t C = a.dim(1), H = a.dim(2), W = a.dim(3);
  PooledMap map;
  map.block_index = block_j;
  map.values = Tensor<float>({H, W});
  const T* pa = a.data() + sample * C * H * W;
  const T* pb = b.data() + sample * C * H * W;
  for (std::int64_t c = 0; c < C; ++c) {
    for (std::int64_t i = 0; i < H * W; ++i) {
      map.values[i] += static_cast<float>(
          std::abs(static_cast<double>(pb[c * H * W + i]) - pa[c * H * W + i]));
    }
  }
  map.values.scale_(1.0f / static_cast<float>(C));
  return map;
}

/// One figure to emit: a raw map plus identification for the manifest.
struct FigureEntry {
  std::string kind;   // "activation" | "noise" | "diff_mask"
  std::string input;  // source image identifier
  int block = 0;
  Tensor<float> values;
};

/// Write one PNG per map (display-normalized heatmap) and a manifest with the
/// raw statistics. Returns the manifest path.
inline std::filesystem::path emit_figures(const std::vector<FigureEntry>& figures,
                                          const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  nlohmann::json manifest = nlohmann::json::array();
  for (std::size_t i = 0; i < figures.size(); ++i) {
    const auto& fig = figures[i];
    std::string file = fig.kind + "_" + fig.input + "_block" +
                       std::to_string(fig.block) + ".png";
    io::write_image(out_dir / file, io::colorize_map(fig.values));
    manifest.push_back({{"file", file},
                        {"kind", fig.kind},
                        {"input", fig.input},
                        {"block", fig.block},
                        {"min", fig.values.min()},
                        {"max", fig.values.max()},
                        {"mean", fig.values.mean()}});
  }
  const auto path = out_dir / "manifest.json";
  std::ofstream out(path);
  out << manifest.dump(2) << "\n";
  if (!out) throw DataError("failed to write figure manifest");
  return path;
}

}  // namespace advgen::analysis
