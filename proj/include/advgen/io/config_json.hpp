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

#include <json.hpp>

#include "advgen/attack/objectives.hpp"
#include "advgen/nn/generator.hpp"

namespace advgen::nn {

inline void to_json(nlohmann::json& j, const GeneratorConfig& c) {
  j = {{"architecture", to_string(c.architecture)},
       {"input_channels", c.input_channels},
       {"base_width", c.base_width},
       {"num_residual_blocks", c.num_residual_blocks},
       {"tap_blocks", c.tap_blocks}};
}

inline void from_json(const nlohmann::json& j, GeneratorConfig& c) {
  c.architecture = gen_arch_from_string(j.value("architecture", std::string("resnet")));
  c.input_channels = j.value("input_channels", 3);
  c.base_width = j.value("base_width", 64);
  c.num_residual_blocks = j.value("num_residual_blocks", 6);
  c.tap_blocks = j.value("tap_blocks", std::vector<int>{});
}

}  // namespace advgen::nn

namespace advgen::attack {

inline void to_json(nlohmann::json& j, const DistillConfig& c) {
  j = {{"tau", c.tau},
       {"lambda_distill", c.lambda_distill},
       {"early_blocks", c.early_blocks},
       {"per_sample_hinge", c.per_sample_hinge}};
}

inline void from_json(const nlohmann::json& j, DistillConfig& c) {
  c.tau = j.value("tau", 0.6);
  c.lambda_distill = j.value("lambda_distill", 0.7);
  c.early_blocks = j.value("early_blocks", std::vector<int>{1, 2});
  c.per_sample_hinge = j.value("per_sample_hinge", false);
}

}  // namespace advgen::attack
