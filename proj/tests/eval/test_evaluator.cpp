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

#include <catch2/catch_amalgamated.hpp>

#include "advgen/eval/evaluator.hpp"
#include "testing/toy_world.hpp"

using namespace advgen;
using advgen::testing::toy_surrogate;
using advgen::testing::toy_train;
using advgen::testing::toy_train_config;
using attack::AblationMode;
using attack::Trainer;

namespace {

const std::filesystem::path kDir =
    std::filesystem::temp_directory_path() / "advgen_eval_test";

/// Train a 3-iteration checkpoint once per mode and reuse it across tests.
std::filesystem::path tiny_checkpoint(AblationMode mode) {
  std::filesystem::create_directories(kDir);
  const auto path = kDir / ("tiny_" + attack::to_string(mode) + ".ckpt");
  if (!std::filesystem::exists(path)) {
    auto data = toy_train();
    Trainer<float> trainer(toy_train_config(mode, 3), toy_surrogate());
    trainer.run(data, path);
  }
  return path;
}

/// Registry with two random toy victims persisted as classifier checkpoints.
io::ModelRegistry tiny_registry() {
  std::filesystem::create_directories(kDir);
  nn::InputNorm norm;
  norm.mean = {0.5, 0.5, 0.5};
  norm.stddev = {0.5, 0.5, 0.5};
  io::ModelRegistry reg;
  int seed = 50;
  for (const std::string id : {"victim_x", "victim_y"}) {
    const auto ckpt = kDir / (id + ".ckpt");
    if (!std::filesystem::exists(ckpt)) {
      auto net = nn::make_small_cnn<float>(8, 3, seed, false, norm);
      io::save_classifier(net, ckpt, 0.35);
    }
    io::ModelEntry e;
    e.id = id;
    e.arch = "smallcnn";
    e.num_classes = 3;
    e.checkpoint = ckpt.string();
    e.normalization = norm;
    e.feature_layer = 8;
    e.reported_top1 = 0.35;
    reg.add(e);
    ++seed;
  }
  return reg;
}

}  // namespace

TEST_CASE("load_attack picks the teacher branch by default") {
  auto loaded = eval::load_attack<float>(tiny_checkpoint(AblationMode::kFull), std::nullopt);
  REQUIRE(loaded.branch == "teacher");
  for (auto& [name, p] : loaded.generator->named_parameters()) {
    REQUIRE_FALSE(p.requires_grad());
  }
}

TEST_CASE("baseline checkpoints fall back to the student with auto branch") {
  auto loaded =
      eval::load_attack<float>(tiny_checkpoint(AblationMode::kBaseline), std::nullopt);
  REQUIRE(loaded.branch == "student");
  // an explicit teacher request on a teacher-less checkpoint must fail
  REQUIRE_THROWS_AS(
      eval::load_attack<float>(tiny_checkpoint(AblationMode::kBaseline),
                               std::optional<std::string>("teacher")),
      ConfigError);
  REQUIRE_THROWS_AS(
      eval::load_attack<float>(tiny_checkpoint(AblationMode::kFull),
                               std::optional<std::string>("committee")),
      ConfigError);
}

TEST_CASE("attack_batch honors the test-time budget") {
  auto loaded = eval::load_attack<float>(tiny_checkpoint(AblationMode::kFull), std::nullopt);
  auto data = advgen::testing::toy_val();
  auto [x, labels] = data.load_range(0, 4);
  (void)labels;

  SECTION("eps 0 returns the clean batch exactly") {
    auto out = eval::attack_batch(*loaded.generator, x, 0.0);
    REQUIRE(bitwise_equal(out, x));
  }
  SECTION("eps 10 respects the budget") {
    auto out = eval::attack_batch(*loaded.generator, x, 10.0);
    float worst = 0;
    for (std::int64_t i = 0; i < x.numel(); ++i) {
      worst = std::max(worst, std::abs(out[i] - x[i]));
    }
    REQUIRE(worst <= 10.0f / 255.0f + 1e-7f);
    REQUIRE(out.min() >= 0.0f);
    REQUIRE(out.max() <= 1.0f);
  }
  SECTION("budget boxes nest: eps 2 deviations never exceed eps 16 allowances") {
    auto small = eval::attack_batch(*loaded.generator, x, 2.0);
    auto large = eval::attack_batch(*loaded.generator, x, 16.0);
    for (std::int64_t i = 0; i < x.numel(); ++i) {
      REQUIRE(std::abs(small[i] - x[i]) <= std::abs(large[i] - x[i]) + 1e-7f);
    }
  }
}

TEST_CASE("pipeline stages put defenses after projection, before the victim") {
  auto loaded = eval::load_attack<float>(tiny_checkpoint(AblationMode::kFull), std::nullopt);
  std::vector<eval::DefenseSpec> defenses;
  defenses.push_back(eval::DefenseSpec::parse("bdr:4"));
  defenses.push_back(eval::DefenseSpec::parse("rp:7"));
  eval::AttackPipeline<float> pipeline(*loaded.generator, 10.0, defenses);

  const auto& stages = pipeline.stages();
  auto pos = [&](const std::string& needle) {
    for (std::size_t i = 0; i < stages.size(); ++i) {
      if (stages[i].rfind(needle, 0) == 0) return static_cast<long>(i);
    }
    return -1L;
  };
  REQUIRE(pos("generator_forward") == 0);
  REQUIRE(pos("project") == 1);
  REQUIRE(pos("defense:bdr") == 2);
  REQUIRE(pos("defense:randomization") == 3);
  REQUIRE(pos("victim_normalize") == 4);
  REQUIRE(pos("victim_predict") == 5);

  // the executed composition equals the stage list applied by hand
  auto data = advgen::testing::toy_val();
  auto [x, labels] = data.load_range(0, 2);
  (void)labels;
  auto manual = eval::attack_batch(*loaded.generator, x, 10.0);
  manual = eval::defend(manual, defenses[0]);
  manual = eval::defend(manual, defenses[1]);
  auto piped = pipeline.apply(x);
  REQUIRE(bitwise_equal(manual, piped));
}

TEST_CASE("evaluate produces reports per victim and eps; eps 0 is clean") {
  eval::EvalConfig cfg;
  cfg.checkpoint = tiny_checkpoint(AblationMode::kFull);
  cfg.victims = {"victim_x", "victim_y"};
  cfg.eps_test = {0.0, 10.0};
  cfg.resolution = 32;
  cfg.batch_size = 4;
  auto registry = tiny_registry();
  auto data = advgen::testing::toy_val();
  auto cells = eval::evaluate<float>(cfg, data, registry);
  REQUIRE(cells.size() == 4);
  for (const auto& cell : cells) {
    REQUIRE_FALSE(cell.error.has_value());
    REQUIRE(cell.report.n_total == data.size());
    if (cell.eps == 0.0) {
      REQUIRE(cell.report.fr == 0.0);
      if (cell.report.asr) REQUIRE(*cell.report.asr == 0.0);
      if (cell.report.acr) REQUIRE(*cell.report.acr == 0.0);
      REQUIRE(std::isinf(cell.mean_psnr));
    } else {
      REQUIRE(cell.mean_psnr > 25.0);  // small-budget perturbations
    }
  }
  auto sweep = eval::mean_accuracy_by_eps(cells);
  REQUIRE(sweep.size() == 2);
  REQUIRE(sweep[0].first == 0.0);
}

TEST_CASE("unloadable victims are skipped with a recorded error") {
  auto registry = tiny_registry();
  io::ModelEntry broken;
  broken.id = "broken";
  broken.arch = "smallcnn";
  broken.num_classes = 3;
  broken.checkpoint = (kDir / "missing.ckpt").string();
  registry.add(broken);

  eval::EvalConfig cfg;
  cfg.checkpoint = tiny_checkpoint(AblationMode::kFull);
  cfg.victims = {"broken", "victim_x"};
  cfg.eps_test = {4.0};
  cfg.resolution = 32;
  cfg.batch_size = 4;
  auto data = advgen::testing::toy_val();
  auto cells = eval::evaluate<float>(cfg, data, registry);
  REQUIRE(cells.size() == 2);
  REQUIRE(cells[0].victim == "broken");
  REQUIRE(cells[0].error.has_value());
  REQUIRE_FALSE(cells[1].error.has_value());
  REQUIRE(cells[1].report.n_total == data.size());
}

TEST_CASE("evaluate validates its configuration") {
  eval::EvalConfig cfg;
  cfg.checkpoint = tiny_checkpoint(AblationMode::kFull);
  cfg.victims = {};
  auto registry = tiny_registry();
  auto data = advgen::testing::toy_val();
  REQUIRE_THROWS_AS(eval::evaluate<float>(cfg, data, registry), ConfigError);
  cfg.victims = {"victim_x"};
  cfg.eps_test = {-1.0};
  REQUIRE_THROWS_AS(eval::evaluate<float>(cfg, data, registry), ConfigError);
}

TEST_CASE("registry surrogate honors recorded feature layer and accuracy") {
  auto registry = tiny_registry();
  auto surrogate = registry.surrogate<float>("victim_x");
  REQUIRE(surrogate.spec().feature_layer == 8);
  REQUIRE(registry.entry("victim_x").reported_top1.has_value());
  REQUIRE_THROWS_AS(registry.entry("nope"), ConfigError);
}
