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
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "advgen/io/image.hpp"

namespace advgen::io {

enum class Split { kTrain, kVal };

inline std::string to_string(Split s) { return s == Split::kTrain ? "train" : "val"; }

enum class ResizePolicy {
  kShorterSideCrop,  // resize shorter side to resolution*256/224, center-crop
  kStretch,          // resize directly to resolution x resolution
  kNone,             // images must already match the target resolution
};

/// Class-folder dataset: root/<split>/<class_name>/<image files>. Ordering is
/// lexicographic (class, then file), so two ingests of the same tree agree.
class DatasetHandle {
 public:
  struct Item {
    std::filesystem::path path;
    int label;
  };

  static DatasetHandle ingest(const std::filesystem::path& root, Split split,
                              int resolution,
                              ResizePolicy policy = ResizePolicy::kShorterSideCrop,
                              bool verify_decodable = true) {
    DatasetHandle h;
    h.root_ = root;
    h.split_ = split;
    h.resolution_ = resolution;
    h.policy_ = policy;
    const auto dir = root / to_string(split);
    if (!std::filesystem::is_directory(dir)) {
      throw DataError("dataset directory '" + dir.string() + "' does not exist");
    }
    std::vector<std::filesystem::path> class_dirs;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
      if (e.is_directory()) class_dirs.push_back(e.path());
    }
    std::sort(class_dirs.begin(), class_dirs.end());
    for (const auto& cd : class_dirs) {
      const int label = static_cast<int>(h.class_names_.size());
      h.class_names_.push_back(cd.filename().string());
      std::vector<std::filesystem::path> files;
      for (const auto& f : std::filesystem::directory_iterator(cd)) {
        if (!f.is_regular_file()) continue;
        auto ext = f.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
        if (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp") {
          files.push_back(f.path());
        }
      }
      std::sort(files.begin(), files.end());
      for (const auto& f : files) {
        if (verify_decodable) {
          cv::Mat m = cv::imread(f.string(), cv::IMREAD_COLOR);
          if (m.empty()) {
            ++h.skipped_;
            std::cerr << "[dataset] skipping undecodable file " << f << "\n";
            continue;
          }
        }
        h.items_.push_back({f, label});
      }
    }
    if (h.items_.empty()) {
      throw DataError("dataset '" + dir.string() + "' contains no decodable images");
    }
    return h;
  }

  std::int64_t size() const { return static_cast<std::int64_t>(items_.size()); }
  int num_classes() const { return static_cast<int>(class_names_.size()); }
  const std::vector<std::string>& class_names() const { return class_names_; }
  const std::vector<Item>& items() const { return items_; }
  int resolution() const { return resolution_; }
  ResizePolicy policy() const { return policy_; }
  int skipped() const { return skipped_; }
  const std::filesystem::path& root() const { return root_; }
  Split split() const { return split_; }

  /// Decode and stack the given items into an NCHW float batch in [0,1].
  std::pair<Tensor<float>, std::vector<int>> load_batch(
      const std::vector<std::int64_t>& indices) const {
    if (indices.empty()) throw DataError("load_batch: empty index list");
    const std::int64_t n = static_cast<std::int64_t>(indices.size());
    Tensor<float> batch({n, 3, resolution_, resolution_});
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
      const Item& item = items_.at(static_cast<std::size_t>(indices[static_cast<std::size_t>(i)]));
      cv::Mat img = cv::imread(item.path.string(), cv::IMREAD_COLOR);
      if (img.empty()) {
        throw DataError("failed to decode '" + item.path.string() + "'");
      }
      cv::Mat sized = resize_to_target(img);
      mat_to_chw(sized, batch.data() + i * 3 * resolution_ * resolution_);
      labels[static_cast<std::size_t>(i)] = item.label;
    }
    return {std::move(batch), std::move(labels)};
  }

  std::pair<Tensor<float>, std::vector<int>> load_range(std::int64_t begin,
                                                        std::int64_t end) const {
    std::vector<std::int64_t> idx;
    for (std::int64_t i = begin; i < end && i < size(); ++i) idx.push_back(i);
    return load_batch(idx);
  }

 private:
  cv::Mat resize_to_target(const cv::Mat& img) const {
    const int r = resolution_;
    if (policy_ == ResizePolicy::kNone) {
      if (img.rows != r || img.cols != r) {
        throw DataError("image size " + std::to_string(img.cols) + "x" +
                        std::to_string(img.rows) + " does not match resolution " +
                        std::to_string(r) + " (resize policy 'none')");
      }
      return img;
    }
    if (policy_ == ResizePolicy::kStretch) {
      cv::Mat out;
      cv::resize(img, out, cv::Size(r, r), 0, 0, cv::INTER_LINEAR);
      return out;
    }
    // shorter side -> r * 256/224, then center crop r x r
    const int target_short = static_cast<int>(std::lround(r * 256.0 / 224.0));
    const double scale = static_cast<double>(target_short) / std::min(img.rows, img.cols);
    cv::Mat resized;
    cv::resize(img, resized,
               cv::Size(std::max<int>(r, static_cast<int>(std::lround(img.cols * scale))),
                        std::max<int>(r, static_cast<int>(std::lround(img.rows * scale)))),
               0, 0, cv::INTER_LINEAR);
    const int y0 = (resized.rows - r) / 2;
    const int x0 = (resized.cols - r) / 2;
    return resized(cv::Rect(x0, y0, r, r)).clone();
  }

  std::filesystem::path root_;
  Split split_ = Split::kTrain;
  int resolution_ = 224;
  ResizePolicy policy_ = ResizePolicy::kShorterSideCrop;
  std::vector<Item> items_;
  std::vector<std::string> class_names_;
  int skipped_ = 0;
};

}  // namespace advgen::io
