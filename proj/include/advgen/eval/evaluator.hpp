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

#include <functional>
#include <iostream>
#include <map>

#include "advgen/attack/trainer.hpp"
#include "advgen/eval/defenses.hpp"
#include "advgen/eval/metrics.hpp"
#include "advgen/io/registry.hpp"

namespace advgen::eval {

/// Generator branch loaded from a training checkpoint. The teacher branch is
/// the default inference artifact; baseline checkpoints have no teacher, so
/// the unrequested default falls back to the student with a warning while an
/// explicit teacher request fails.
template <typename T>
struct LoadedAttack {
  std::unique_ptr<nn::Generator<T>> generator;
  std::string branch;  // "teacher" or "student"
  attack::TrainConfig train_config;
  nlohmann::json meta;
};

template <typename T>
LoadedAttack<T> load_attack(const std::filesystem::path& path,
                            const std::optional<std::string>& requested_branch,
                            const std::vector<int>& tap_override = {}) {
  io::CheckpointReader r(path);
  if (r.meta().value("kind", std::string()) != "generator_attack") {
    throw ConfigError("'" + path.string() + "' is not an attack checkpoint");
  }
  LoadedAttack<T> out;
  out.meta = r.meta();
  out.train_config = r.meta().at("config").get<attack::TrainConfig>();

  std::string branch = requested_branch.value_or("teacher");
  if (branch != "teacher" && branch != "student") {
    throw ConfigError("branch must be 'teacher' or 'student'");
  }
  if (branch == "teacher" && !r.has_prefix("teacher")) {
    if (requested_branch.has_value()) {
      throw ConfigError("checkpoint has no teacher branch (trained in mode=" +
                        r.meta().value("mode", std::string("?")) +
                        "); use --branch student");
    }
    std::cerr << "[eval] checkpoint has no teacher branch; falling back to student\n";
    branch = "student";
  }

  nn::GeneratorConfig gcfg = out.train_config.generator;
  if (!tap_override.empty()) gcfg.tap_blocks = tap_override;
  out.generator = nn::build_generator<T>(gcfg, /*seed=*/0);
  auto params = out.generator->named_parameters();
  r.load_params(branch, params);
  for (auto& [name, p] : params) p.set_requires_grad(false);
  out.branch = branch;
  return out;
}

/// Single-pass attack: project the generator output around x at the
/// test-time budget. Pure inference.
template <typename T>
Tensor<T> attack_batch(nn::Generator<T>& gen, const Tensor<T>& x, double eps_test) {
  ag::NoGradGuard guard;
  auto xv = ag::Variable<T>::constant(x);
  auto out = gen.forward(xv);
  return attack::project(x, out.image.value(), attack::PerturbationBudget{eps_test});
}

/// Ordered, introspectable image pipeline: generator forward, projection,
/// then each defense. apply() executes exactly the stages stages() reports.
template <typename T>
class AttackPipeline {
 public:
  AttackPipeline(nn::Generator<T>& gen, double eps_test, std::vector<DefenseSpec> defenses,
                 std::string branch = "teacher") {
    names_.push_back("generator_forward(branch=" + branch + ")");
    fns_.push_back([&gen](const Tensor<T>& x, const Tensor<T>&) {
      ag::NoGradGuard guard;
      return gen.forward(ag::Variable<T>::constant(x)).image.value();
    });
    names_.push_back("project(eps=" + std::to_string(eps_test) + ")");
    fns_.push_back([eps_test](const Tensor<T>& x, const Tensor<T>& cur) {
      return attack::project(x, cur, attack::PerturbationBudget{eps_test});
    });
    for (const auto& d : defenses) {
      names_.push_back("defense:" + d.name());
      fns_.push_back([d](const Tensor<T>&, const Tensor<T>& cur) { return defend(cur, d); });
    }
    names_.push_back("victim_normalize");
    names_.push_back("victim_predict");
  }

  /// Stage names in execution order; the last two run inside the victim.
  const std::vector<std::string>& stages() const { return names_; }

  /// Produce the image the victim will consume.
  Tensor<T> apply(const Tensor<T>& x) const {
    Tensor<T> cur = x;
    for (const auto& fn : fns_) cur = fn(x, cur);
    return cur;
  }

 private:
  std::vector<std::string> names_;
  std::vector<std::function<Tensor<T>(const Tensor<T>&, const Tensor<T>&)>> fns_;
};

struct EvalConfig {
  std::filesystem::path checkpoint;
  std::vector<std::string> victims;
  std::vector<double> eps_test{10.0};
  int resolution = 224;
  std::vector<DefenseSpec> defenses;
  std::optional<std::string> branch;  // unset: teacher with student fallback
  std::int64_t subset = 0;            // 0: whole split
  int batch_size = 16;

  void validate() const {
    if (victims.empty()) throw ConfigError("at least one victim id is required");
    if (eps_test.empty()) throw ConfigError("at least one eps value is required");
    for (double e : eps_test) {
      if (e < 0) throw ConfigError("eps values must be non-negative");
    }
    if (batch_size < 1) throw ConfigError("batch_size must be positive");
  }
};

/// One (victim, eps) outcome.
struct EvalCell {
  std::string victim;
  double eps = 0;
  MetricReport report;
  double mean_psnr = 0;  // projected adversarial vs clean, before defenses
  std::vector<PredictionRecord> records;
  std::optional<std::string> error;
};

/// Cross-model evaluation: for every victim and every test-time budget,
/// clean and attacked predictions plus the metric report. Victims that fail
/// to load are skipped with the error recorded; the rest proceed.
template <typename T>
std::vector<EvalCell> evaluate(const EvalConfig& cfg, const io::DatasetHandle& data,
                               const io::ModelRegistry& registry,
                               std::ostream* status = nullptr) {
  cfg.validate();
  auto attack = load_attack<T>(cfg.checkpoint, cfg.branch);

  struct Victim {
    std::string id;
    std::optional<nn::LayeredClassifier<T>> net;
    std::optional<std::string> error;
  };
  std::vector<Victim> victims;
  for (const auto& id : cfg.victims) {
    Victim v{id, std::nullopt, std::nullopt};
    try {
      v.net = registry.instantiate<T>(id);
    } catch (const Error& e) {
      v.error = e.what();
      if (status) (*status) << "[eval] skipping victim '" << id << "': " << e.what() << "\n";
    }
    victims.push_back(std::move(v));
  }

  const std::int64_t total =
      cfg.subset > 0 ? std::min<std::int64_t>(cfg.subset, data.size()) : data.size();

  std::map<std::pair<std::string, double>, std::vector<PredictionRecord>> records;
  std::map<double, double> psnr_sum;
  std::map<double, std::int64_t> psnr_batches;

  for (std::int64_t begin = 0; begin < total; begin += cfg.batch_size) {
    const std::int64_t end = std::min<std::int64_t>(begin + cfg.batch_size, total);
    auto [x, labels] = data.load_range(begin, end);

    Tensor<T> unbounded;
    {
      ag::NoGradGuard guard;
      unbounded = attack.generator->forward(ag::Variable<T>::constant(x)).image.value();
    }

    // clean predictions once per victim per batch
    std::map<std::string, std::vector<int>> clean_preds;
    for (auto& v : victims) {
      if (v.net) clean_preds[v.id] = v.net->predict(x);
    }

    for (double eps : cfg.eps_test) {
      Tensor<T> adv =
          attack::project(x, unbounded, attack::PerturbationBudget{eps});
      psnr_sum[eps] += io::psnr(x, adv);
      psnr_batches[eps] += 1;
      Tensor<T> served = adv;
      for (const auto& d : cfg.defenses) served = defend(served, d);
      for (auto& v : victims) {
        if (!v.net) continue;
        auto adv_preds = v.net->predict(served);
        auto& recs = records[{v.id, eps}];
        for (std::size_t i = 0; i < labels.size(); ++i) {
          recs.push_back({labels[i], clean_preds[v.id][i], adv_preds[i]});
        }
      }
    }
    if (status) {
      (*status) << "[eval] " << end << "/" << total << " images\n";
    }
  }

  std::vector<EvalCell> cells;
  for (const auto& v : victims) {
    for (double eps : cfg.eps_test) {
      EvalCell cell;
      cell.victim = v.id;
      cell.eps = eps;
      if (v.error) {
        cell.error = v.error;
      } else {
        cell.records = records[{v.id, eps}];
        cell.report = compute_metrics(cell.records);
        cell.mean_psnr = psnr_sum[eps] / static_cast<double>(psnr_batches[eps]);
      }
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

/// Mean attacked accuracy over victims at each eps, ascending by eps
/// (the budget-sweep summary).
inline std::vector<std::pair<double, double>> mean_accuracy_by_eps(
    const std::vector<EvalCell>& cells) {
  std::map<double, std::pair<double, int>> acc;
  for (const auto& c : cells) {
    if (c.error) continue;
    acc[c.eps].first += c.report.accuracy;
    acc[c.eps].second += 1;
  }
  std::vector<std::pair<double, double>> out;
  for (const auto& [eps, pair] : acc) {
    out.emplace_back(eps, pair.first / std::max(1, pair.second));
  }
  return out;
}

}  // namespace advgen::eval
