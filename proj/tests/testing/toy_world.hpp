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

#include <mutex>

#include "advgen/attack/surrogate.hpp"
#include "advgen/attack/trainer.hpp"
#include "advgen/data/synthetic.hpp"

namespace advgen::testing {

/// Tiny rendered dataset shared by mechanics tests (no model pretraining):
/// 3 classes x 8 train / 4 val images at 32x32.
inline const std::filesystem::path& toy_dataset_root() {
  static std::filesystem::path root = [] {
    const auto dir = std::filesystem::temp_directory_path() / "advgen_toy_world";
    static std::once_flag once;
    std::call_once(once, [&] {
      data::FixtureOptions opt;
      opt.out_dir = dir;
      opt.num_classes = 3;
      opt.train_per_class = 8;
      opt.val_per_class = 4;
      opt.resolution = 32;
      opt.seed = 5;
      opt.train_models = false;
      std::filesystem::remove_all(dir);
      data::render_dataset(opt);
    });
    return dir / "dataset";
  }();
  return root;
}

inline io::DatasetHandle toy_train() {
  return io::DatasetHandle::ingest(toy_dataset_root(), io::Split::kTrain, 32,
                                   io::ResizePolicy::kNone);
}

inline io::DatasetHandle toy_val() {
  return io::DatasetHandle::ingest(toy_dataset_root(), io::Split::kVal, 32,
                                   io::ResizePolicy::kNone);
}

/// Random-weight frozen surrogate; mechanics tests need gradients, not skill.
inline std::shared_ptr<attack::Surrogate<float>> toy_surrogate(std::uint64_t seed = 2) {
  nn::InputNorm norm;
  norm.mean = {0.5, 0.5, 0.5};
  norm.stddev = {0.5, 0.5, 0.5};
  attack::SurrogateSpec spec;
  spec.model_id = "toy_random";
  spec.feature_layer = 8;
  spec.normalization = norm;
  return std::make_shared<attack::Surrogate<float>>(
      nn::make_small_cnn<float>(8, 3, seed, false, norm), spec);
}

inline attack::TrainConfig toy_train_config(attack::AblationMode mode,
                                            std::int64_t iters = 3) {
  attack::TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.max_iters = iters;
  cfg.mode = mode;
  cfg.seed = 42;
  cfg.generator.base_width = 4;
  cfg.generator.num_residual_blocks = 2;
  cfg.generator.tap_blocks = {1, 2};
  cfg.early_blocks = {1, 2};
  return cfg;
}

}  // namespace advgen::testing
