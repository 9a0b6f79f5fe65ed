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

#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include "advgen/attack/mean_teacher.hpp"
#include "advgen/attack/objectives.hpp"
#include "advgen/attack/projector.hpp"
#include "advgen/attack/surrogate.hpp"
#include "advgen/io/checkpoint.hpp"
#include "advgen/io/config_json.hpp"
#include "advgen/io/dataset.hpp"
#include "advgen/nn/optim.hpp"

namespace advgen::attack {

enum class AblationMode { kBaseline, kMTOnly, kFull };

inline std::string to_string(AblationMode m) {
  switch (m) {
    case AblationMode::kBaseline: return "baseline";
    case AblationMode::kMTOnly: return "mt_only";
    case AblationMode::kFull: return "full";
  }
  return "full";
}

inline AblationMode ablation_mode_from_string(const std::string& s) {
  if (s == "baseline") return AblationMode::kBaseline;
  if (s == "mt_only") return AblationMode::kMTOnly;
  if (s == "full") return AblationMode::kFull;
  throw ConfigError("unknown ablation mode '" + s + "' (baseline|mt_only|full)");
}

struct TrainConfig {
  int epochs = 1;
  int batch_size = 16;
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.99;
  double epsilon_train = 10.0;  // 8-bit pixel units
  double lambda_distill = 0.7;
  double tau = 0.6;
  double eta = 0.999;
  std::vector<int> early_blocks = {1, 2};
  bool per_sample_hinge = false;
  std::uint64_t seed = 0;
  std::int64_t checkpoint_every = 0;  // 0: final checkpoint only
  std::int64_t max_iters = 0;         // 0: run the configured epochs
  AblationMode mode = AblationMode::kFull;
  nn::GeneratorConfig generator;

  void validate() const {
    if (epochs < 1 && max_iters <= 0) throw ConfigError("epochs or max_iters required");
    if (batch_size < 1) throw ConfigError("batch_size must be positive");
    if (!(lr > 0) || !std::isfinite(lr)) throw ConfigError("learning rate must be positive");
    if (epsilon_train < 0) throw ConfigError("epsilon must be non-negative");
    if (lambda_distill < 0) throw ConfigError("lambda_distill must be non-negative");
    if (tau < -1 || tau > 1) throw ConfigError("tau must lie in [-1, 1]");
    if (eta < 0 || eta > 1) throw ConfigError("eta must lie in [0, 1]");
    if (mode == AblationMode::kFull && early_blocks.empty()) {
      throw ConfigError("full mode requires at least one early block");
    }
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"lr", c.lr},
       {"beta1", c.beta1},
       {"beta2", c.beta2},
       {"epsilon_train", c.epsilon_train},
       {"lambda_distill", c.lambda_distill},
       {"tau", c.tau},
       {"eta", c.eta},
       {"early_blocks", c.early_blocks},
       {"per_sample_hinge", c.per_sample_hinge},
       {"seed", c.seed},
       {"checkpoint_every", c.checkpoint_every},
       {"max_iters", c.max_iters},
       {"mode", to_string(c.mode)},
       {"generator", c.generator}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.epochs = j.value("epochs", 1);
  c.batch_size = j.value("batch_size", 16);
  c.lr = j.value("lr", 2e-4);
  c.beta1 = j.value("beta1", 0.5);
  c.beta2 = j.value("beta2", 0.99);
  c.epsilon_train = j.value("epsilon_train", 10.0);
  c.lambda_distill = j.value("lambda_distill", 0.7);
  c.tau = j.value("tau", 0.6);
  c.eta = j.value("eta", 0.999);
  c.early_blocks = j.value("early_blocks", std::vector<int>{1, 2});
  c.per_sample_hinge = j.value("per_sample_hinge", false);
  c.seed = j.value("seed", std::uint64_t{0});
  c.checkpoint_every = j.value("checkpoint_every", std::int64_t{0});
  c.max_iters = j.value("max_iters", std::int64_t{0});
  c.mode = ablation_mode_from_string(j.value("mode", std::string("full")));
  c.generator = j.value("generator", nn::GeneratorConfig{});
}

/// One line of the training log.
struct TrainRecord {
  std::int64_t iter = 0;
  double adv = 0, distill = 0, total = 0;
  std::vector<double> per_block;

  nlohmann::json to_json() const {
    return {{"iter", iter}, {"adv", adv}, {"distill", distill},
            {"total", total}, {"per_block", per_block}};
  }
  static TrainRecord from_json(const nlohmann::json& j) {
    TrainRecord r;
    r.iter = j.at("iter").get<std::int64_t>();
    r.adv = j.at("adv").get<double>();
    r.distill = j.at("distill").get<double>();
    r.total = j.at("total").get<double>();
    r.per_block = j.value("per_block", std::vector<double>{});
    return r;
  }
};

/// Runs the training loop: per batch, student features/taps; teacher taps
/// (EMA branch); decode to the unbounded adversarial image; project into the
/// budget; surrogate features of benign and projected images; loss; student
/// update; EMA teacher update.
template <typename T>
class Trainer {
 public:
  Trainer(TrainConfig cfg, std::shared_ptr<Surrogate<T>> surrogate)
      : cfg_(std::move(cfg)), surrogate_(std::move(surrogate)) {
    cfg_.validate();
    student_ = nn::build_generator<T>(cfg_.generator, split_seed(cfg_.seed, 0));
    if (cfg_.mode == AblationMode::kFull) {
      const auto& taps = student_->config().tap_blocks;
      for (int b : cfg_.early_blocks) {
        if (std::find(taps.begin(), taps.end(), b) == taps.end()) {
          throw ConfigError("early block " + std::to_string(b) +
                            " is not among the generator taps");
        }
      }
    }
    if (cfg_.mode != AblationMode::kBaseline) {
      teacher_ = std::make_unique<MeanTeacher<T>>(*student_, EMAConfig{cfg_.eta});
    }
    if (cfg_.mode == AblationMode::kFull) {
      weight_logits_ = ag::Variable<T>::leaf(
          Tensor<T>({static_cast<std::int64_t>(cfg_.early_blocks.size())}), true);
    }
    auto params = student_->named_parameters();
    opt_param_names_.clear();
    for (const auto& [name, p] : params) opt_param_names_.push_back("student/" + name);
    if (cfg_.mode == AblationMode::kFull) {
      params.emplace_back("weight_logits", weight_logits_);
      opt_param_names_.push_back("objective/weight_logits");
    }
    optimizer_ = nn::Adam<T>(std::move(params),
                             {cfg_.lr, cfg_.beta1, cfg_.beta2, 1e-8});
    surrogate_checksum_ = surrogate_->checksum();
  }

  /// Rebuild a trainer mid-run from a checkpoint (exact state).
  static Trainer resume(const std::filesystem::path& path,
                        std::shared_ptr<Surrogate<T>> surrogate) {
    io::CheckpointReader r(path);
    const auto& meta = r.meta();
    if (meta.value("kind", std::string()) != "generator_attack") {
      throw ConfigError("'" + path.string() + "' is not a training checkpoint");
    }
    TrainConfig cfg = meta.at("config").get<TrainConfig>();
    Trainer t(cfg, std::move(surrogate));
    auto sp = t.student_->named_parameters();
    r.load_params("student", sp);
    if (t.teacher_) {
      auto tp = t.teacher_->net().named_parameters();
      r.load_params("teacher", tp);
      t.teacher_->set_step_count(meta.value("ema_steps", std::uint64_t{0}));
    }
    if (t.weight_logits_.defined() && r.has("objective/weight_logits")) {
      Tensor<T> logits = r.template load<T>("objective/weight_logits");
      std::copy(logits.data(), logits.data() + logits.numel(),
                t.weight_logits_.value().data());
    }
    for (std::size_t i = 0; i < t.opt_param_names_.size(); ++i) {
      t.optimizer_.restore_state(
          i, r.template load<T>("optim/m/" + t.opt_param_names_[i]),
          r.template load<T>("optim/v/" + t.opt_param_names_[i]));
    }
    t.optimizer_.set_step_count(meta.value("optim_step", std::int64_t{0}));
    t.iter_ = meta.value("iteration", std::int64_t{0});
    t.epoch_ = meta.value("epoch", 0);
    t.pos_ = meta.value("pos_in_epoch", std::int64_t{0});
    for (const auto& rec : meta.value("log", nlohmann::json::array())) {
      t.log_.push_back(TrainRecord::from_json(rec));
    }
    return t;
  }

  /// Train until max_iters (if set) or the configured epochs finish; writes
  /// the final checkpoint to `out` and appends JSONL records to `log_path`
  /// (empty path: no sidecar log).
  std::vector<TrainRecord> run(const io::DatasetHandle& data,
                               const std::filesystem::path& out,
                               const std::filesystem::path& log_path = {},
                               std::ostream* status = nullptr) {
    if (data.size() == 0) throw DataError("training dataset is empty");
    std::ofstream log_stream;
    if (!log_path.empty()) {
      log_stream.open(log_path, std::ios::app);
      if (!log_stream) throw DataError("cannot open training log '" + log_path.string() + "'");
    }

    const std::int64_t batches_per_epoch =
        std::max<std::int64_t>(1, data.size() / cfg_.batch_size);
    const std::int64_t total_iters =
        cfg_.max_iters > 0 ? cfg_.max_iters
                           : static_cast<std::int64_t>(cfg_.epochs) * batches_per_epoch;

    while (iter_ < total_iters) {
      if (pos_ >= batches_per_epoch) {
        ++epoch_;
        pos_ = 0;
      }
      const auto order = epoch_order(data.size(), epoch_);
      std::vector<std::int64_t> idx;
      const std::int64_t base = pos_ * cfg_.batch_size;
      for (int i = 0; i < cfg_.batch_size && base + i < data.size(); ++i) {
        idx.push_back(order[static_cast<std::size_t>(base + i)]);
      }
      auto [batch, labels] = data.load_batch(idx);
      (void)labels;  // the attack is label-free
      TrainRecord rec = step(batch);
      log_.push_back(rec);
      if (log_stream) {
        log_stream << rec.to_json().dump() << "\n";
        log_stream.flush();
      }
      if (status && (iter_ % 25 == 0 || iter_ == total_iters)) {
        (*status) << "iter " << iter_ << "/" << total_iters << "  adv=" << rec.adv
                  << "  distill=" << rec.distill << "  total=" << rec.total << "\n";
      }
      ++pos_;
      if (cfg_.checkpoint_every > 0 && iter_ % cfg_.checkpoint_every == 0 &&
          iter_ < total_iters) {
        save_checkpoint(out);
      }
    }
    save_checkpoint(out);
    return log_;
  }

  /// One optimizer step on one batch. Exposed for tests.
  TrainRecord step(const Tensor<T>& batch) {
    auto x = ag::Variable<T>::constant(batch);

    // student features + unbounded adversarial image (encoder then decoder)
    auto student_out = student_->forward(x);
    // teacher features from the same input, off-tape
    nn::FeatureBundle<T> teacher_taps;
    if (teacher_) teacher_taps = teacher_->encode(x);
    // budget projection, then the frozen surrogate on benign and projected
    auto projected = project(x, student_out.image, PerturbationBudget{cfg_.epsilon_train});
    ag::Variable<T> f_benign;
    {
      ag::NoGradGuard guard;
      f_benign = surrogate_->features(x);
    }
    auto f_adv = surrogate_->features(projected);

    auto adv = adv_loss(f_benign, f_adv);
    TrainRecord rec;
    rec.iter = iter_ + 1;
    rec.adv = static_cast<double>(adv.value()[0]);

    ag::Variable<T> total;
    if (cfg_.mode == AblationMode::kFull) {
      DistillConfig dcfg{cfg_.tau, cfg_.lambda_distill, cfg_.early_blocks,
                         cfg_.per_sample_hinge};
      auto dres = distill_loss<T>(student_out.taps, teacher_taps, dcfg, weight_logits_);
      rec.distill = static_cast<double>(dres.loss.value()[0]);
      rec.per_block = dres.per_block;
      total = total_loss(adv, dres.loss, cfg_.lambda_distill);
    } else {
      total = adv;
    }
    rec.total = static_cast<double>(total.value()[0]);

    if (!std::isfinite(rec.total)) {
      throw NumericsError(nan_diagnostics(batch, student_out.image.value(), rec));
    }

    optimizer_.zero_grad();
    total.backward();
    optimizer_.step();
    if (teacher_) teacher_->ema_update(*student_);

    ++iter_;
    return rec;
  }

  void save_checkpoint(const std::filesystem::path& path) const {
    io::CheckpointWriter w;
    nlohmann::json log = nlohmann::json::array();
    for (const auto& r : log_) log.push_back(r.to_json());
    nlohmann::json meta = {{"kind", "generator_attack"},
                           {"config", cfg_},
                           {"seed", cfg_.seed},
                           {"mode", to_string(cfg_.mode)},
                           {"iteration", iter_},
                           {"epoch", epoch_},
                           {"pos_in_epoch", pos_},
                           {"optim_step", optimizer_.step_count()},
                           {"surrogate_id", surrogate_->spec().model_id},
                           {"surrogate_feature_layer", surrogate_->spec().feature_layer},
                           {"log", std::move(log)},
                           {"version", kVersionString}};
    if (teacher_) meta["ema_steps"] = teacher_->step_count();
    w.set_meta(std::move(meta));
    w.add_params("student", student_->named_parameters());
    if (teacher_) w.add_params("teacher", teacher_->net().named_parameters());
    if (weight_logits_.defined()) w.add("objective/weight_logits", weight_logits_.value());
    const auto& params = optimizer_.params();
    for (std::size_t i = 0; i < params.size(); ++i) {
      w.add("optim/m/" + opt_param_names_[i], optimizer_.moment1(i));
      w.add("optim/v/" + opt_param_names_[i], optimizer_.moment2(i));
    }
    w.save(path);
  }

  /// Extend or shorten the run; useful when resuming past the original cap.
  void set_max_iters(std::int64_t iters) { cfg_.max_iters = iters; }

  nn::Generator<T>& student() { return *student_; }
  MeanTeacher<T>* teacher() { return teacher_.get(); }
  const ag::Variable<T>& weight_logits() const { return weight_logits_; }
  const TrainConfig& config() const { return cfg_; }
  std::int64_t iteration() const { return iter_; }
  const std::vector<TrainRecord>& log() const { return log_; }
  std::uint64_t surrogate_checksum() const { return surrogate_->checksum(); }
  const Surrogate<T>& surrogate() const { return *surrogate_; }

  /// Deterministic per-epoch sample order: a pure function of (seed, epoch).
  std::vector<std::int64_t> epoch_order(std::int64_t n, int epoch) const {
    std::vector<std::int64_t> order(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    Rng rng(split_seed(cfg_.seed, 1000 + static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);
    return order;
  }

 private:
  std::string nan_diagnostics(const Tensor<T>& batch, const Tensor<T>& image,
                              const TrainRecord& rec) const {
    std::ostringstream os;
    os << "non-finite loss at iteration " << (iter_ + 1) << ": adv=" << rec.adv
       << " distill=" << rec.distill << " total=" << rec.total
       << " | batch min/max/mean=" << batch.min() << "/" << batch.max() << "/"
       << batch.mean() << " | generator output min/max=" << image.min() << "/"
       << image.max() << " | batch finite=" << (batch.all_finite() ? "yes" : "no")
       << " image finite=" << (image.all_finite() ? "yes" : "no");
    return os.str();
  }

  TrainConfig cfg_;
  std::shared_ptr<Surrogate<T>> surrogate_;
  std::unique_ptr<nn::Generator<T>> student_;
  std::unique_ptr<MeanTeacher<T>> teacher_;
  ag::Variable<T> weight_logits_;
  nn::Adam<T> optimizer_;
  std::vector<std::string> opt_param_names_;
  std::vector<TrainRecord> log_;
  std::int64_t iter_ = 0;
  int epoch_ = 0;
  std::int64_t pos_ = 0;
  std::uint64_t surrogate_checksum_ = 0;
};

/// Mean surrogate-feature cosine between benign and attacked images, no
/// gradients. The probe metric behind training-effectiveness checks.
template <typename T>
double mean_probe_cosine(const Surrogate<T>& surrogate, nn::Generator<T>& gen,
                         const Tensor<T>& probe, double epsilon) {
  ag::NoGradGuard guard;
  auto x = ag::Variable<T>::constant(probe);
  auto out = gen.forward(x);
  auto adv = project(x, out.image, PerturbationBudget{epsilon});
  auto fb = surrogate.features(x);
  auto fa = surrogate.features(adv);
  auto cos = ag::cosine_pairs(fb, fa);
  return cos.value().mean();
}

}  // namespace advgen::attack
