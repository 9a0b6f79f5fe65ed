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

#include <CLI11.hpp>

#include "advgen/analysis/maps.hpp"
#include "advgen/data/synthetic.hpp"
#include "advgen/eval/evaluator.hpp"
#include "advgen/io/manifest.hpp"

namespace advgen::cli {

// Exit codes: 0 success, 2 configuration error, 3 data error,
// 4 runtime/numerics error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitRuntime = 4;

namespace detail {

inline io::ResizePolicy parse_policy(const std::string& s) {
  if (s == "crop") return io::ResizePolicy::kShorterSideCrop;
  if (s == "stretch") return io::ResizePolicy::kStretch;
  if (s == "none") return io::ResizePolicy::kNone;
  throw ConfigError("unknown resize policy '" + s + "' (crop|stretch|none)");
}

inline std::string eps_tag(double eps) {
  std::ostringstream os;
  if (eps == static_cast<std::int64_t>(eps)) {
    os << static_cast<std::int64_t>(eps);
  } else {
    os << eps;
  }
  std::string s = os.str();
  for (auto& c : s) {
    if (c == '.') c = 'p';
  }
  return s;
}

inline io::ModelRegistry load_registry(const std::string& path) {
  return path.empty() ? io::ModelRegistry() : io::ModelRegistry::from_file(path);
}

/// Flat-directory image loader for the analysis command.
inline std::vector<std::pair<std::string, Tensor<float>>> load_images_flat(
    const std::filesystem::path& dir, int resolution, int limit) {
  if (!std::filesystem::is_directory(dir)) {
    throw DataError("image directory '" + dir.string() + "' does not exist");
  }
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp") {
      files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no images under '" + dir.string() + "'");
  std::vector<std::pair<std::string, Tensor<float>>> out;
  for (const auto& f : files) {
    if (limit > 0 && static_cast<int>(out.size()) >= limit) break;
    cv::Mat img = cv::imread(f.string(), cv::IMREAD_COLOR);
    if (img.empty()) {
      std::cerr << "[analyze] skipping undecodable file " << f << "\n";
      continue;
    }
    cv::Mat sized;
    cv::resize(img, sized, cv::Size(resolution, resolution), 0, 0, cv::INTER_LINEAR);
    Tensor<float> t({1, 3, resolution, resolution});
    io::mat_to_chw(sized, t.data());
    out.emplace_back(f.stem().string(), std::move(t));
  }
  if (out.empty()) throw DataError("no decodable images under '" + dir.string() + "'");
  return out;
}

inline std::vector<int> parse_block_range(const std::string& s) {
  // "1-6" or "1,2,5"
  std::vector<int> blocks;
  if (auto dash = s.find('-'); dash != std::string::npos) {
    const int lo = std::stoi(s.substr(0, dash));
    const int hi = std::stoi(s.substr(dash + 1));
    for (int b = lo; b <= hi; ++b) blocks.push_back(b);
  } else {
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (!tok.empty()) blocks.push_back(std::stoi(tok));
    }
  }
  if (blocks.empty()) throw ConfigError("empty block list '" + s + "'");
  return blocks;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string data, out, registry, surrogate_id, resume;
  int feature_layer = -1;
  attack::TrainConfig cfg;
  int resolution = 224;
  std::string arch = "resnet";
  std::string mode = "full";
  std::string resize_policy = "crop";
  bool no_verify = false;
  bool quiet = false;
  int threads = 0;
};

inline int cmd_train(const TrainArgs& a, const std::vector<std::string>& argv) {
  set_threads(a.threads);
  io::RunManifest manifest;
  manifest.command = "train";
  manifest.argv = argv;
  manifest.started_at = io::utc_timestamp();

  auto registry = detail::load_registry(a.registry);
  std::ostream* status = a.quiet ? nullptr : &std::cerr;

  attack::TrainConfig cfg = a.cfg;
  cfg.mode = attack::ablation_mode_from_string(a.mode);
  cfg.generator.architecture = nn::gen_arch_from_string(a.arch);

  const auto data = io::DatasetHandle::ingest(a.data, io::Split::kTrain, a.resolution,
                                              detail::parse_policy(a.resize_policy),
                                              !a.no_verify);
  if (status) {
    (*status) << "[train] dataset: " << data.size() << " images, "
              << data.num_classes() << " classes";
    if (data.skipped() > 0) (*status) << " (" << data.skipped() << " skipped)";
    (*status) << "\n";
  }

  std::vector<attack::TrainRecord> log;
  const std::filesystem::path out = a.out;
  const std::filesystem::path log_path = out.string() + ".log.jsonl";
  if (!a.resume.empty()) {
    std::string sid = a.surrogate_id;
    if (sid.empty()) {
      sid = io::CheckpointReader(a.resume).meta().value("surrogate_id", std::string("vgg16"));
    }
    auto surrogate = std::make_shared<attack::Surrogate<float>>(
        registry.surrogate<float>(sid, a.feature_layer));
    auto trainer = attack::Trainer<float>::resume(a.resume, surrogate);
    if (status) (*status) << "[train] resumed at iteration " << trainer.iteration() << "\n";
    log = trainer.run(data, out, log_path, status);
    manifest.resolved_config = nlohmann::json(trainer.config());
    manifest.seed = trainer.config().seed;
  } else {
    const std::string sid = a.surrogate_id.empty() ? "vgg16" : a.surrogate_id;
    auto surrogate = std::make_shared<attack::Surrogate<float>>(
        registry.surrogate<float>(sid, a.feature_layer));
    attack::Trainer<float> trainer(cfg, surrogate);
    if (status) {
      (*status) << "[train] mode=" << to_string(cfg.mode) << " surrogate=" << sid
                << " (layer " << surrogate->spec().feature_layer << ")\n";
    }
    log = trainer.run(data, out, log_path, status);
    manifest.resolved_config = nlohmann::json(trainer.config());
    manifest.seed = cfg.seed;
  }
  manifest.add_checkpoint(out);
  manifest.finished_at = io::utc_timestamp();
  manifest.write(out.string() + ".manifest.json");
  std::cout << "checkpoint written to " << out << " (" << log.size()
            << " logged iterations)\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string ckpt, data, registry, report, branch, split = "val";
  std::vector<std::string> victims;
  std::vector<double> eps{10.0};
  std::vector<std::string> defenses;
  int resolution = 224;
  std::int64_t subset = 0;
  int batch_size = 16;
  bool dump = false;
  std::string resize_policy = "crop";
  bool no_verify = false;
  bool quiet = false;
  int threads = 0;
};

inline int cmd_eval(const EvalArgs& a, const std::vector<std::string>& argv) {
  set_threads(a.threads);
  io::RunManifest manifest;
  manifest.command = "eval";
  manifest.argv = argv;
  manifest.started_at = io::utc_timestamp();

  eval::EvalConfig cfg;
  cfg.checkpoint = a.ckpt;
  cfg.victims = a.victims;
  cfg.eps_test = a.eps;
  cfg.resolution = a.resolution;
  cfg.subset = a.subset;
  cfg.batch_size = a.batch_size;
  if (!a.branch.empty()) cfg.branch = a.branch;
  for (const auto& d : a.defenses) cfg.defenses.push_back(eval::DefenseSpec::parse(d));

  auto registry = detail::load_registry(a.registry);
  const auto split = a.split == "train" ? io::Split::kTrain : io::Split::kVal;
  const auto data = io::DatasetHandle::ingest(a.data, split, a.resolution,
                                              detail::parse_policy(a.resize_policy),
                                              !a.no_verify);
  std::ostream* status = a.quiet ? nullptr : &std::cerr;
  auto cells = eval::evaluate<float>(cfg, data, registry, status);

  std::filesystem::path report_dir = a.report.empty() ? "." : a.report;
  std::filesystem::create_directories(report_dir);

  for (double eps : cfg.eps_test) {
    std::vector<eval::AggregateRow> rows;
    nlohmann::json victims_json = nlohmann::json::array();
    for (const auto& cell : cells) {
      if (cell.eps != eps) continue;
      nlohmann::json j = {{"victim", cell.victim}, {"eps", cell.eps}};
      if (cell.error) {
        j["error"] = *cell.error;
      } else {
        j["metrics"] = cell.report.to_json();
        j["mean_psnr_db"] = cell.mean_psnr;
        rows.push_back({cell.victim, cell.report});
        if (a.dump) {
          const auto dump_path = report_dir / ("records_" + cell.victim + "_eps" +
                                               detail::eps_tag(eps) + ".csv");
          eval::write_records(dump_path, cell.records);
          j["records"] = dump_path.string();
        }
      }
      victims_json.push_back(std::move(j));
    }
    const auto table = eval::aggregate(rows);
    std::cout << "== eps " << eps << " ==\n" << eval::format_table(table);
    nlohmann::json report = {{"eps", eps},
                             {"checkpoint", a.ckpt},
                             {"victims", victims_json}};
    std::ofstream out(report_dir / ("report_eps" + detail::eps_tag(eps) + ".json"));
    out << report.dump(2) << "\n";
  }

  manifest.resolved_config = {{"checkpoint", a.ckpt},
                              {"victims", a.victims},
                              {"eps", a.eps},
                              {"resolution", a.resolution},
                              {"defenses", a.defenses},
                              {"branch", a.branch},
                              {"subset", a.subset}};
  manifest.add_checkpoint(a.ckpt);
  manifest.finished_at = io::utc_timestamp();
  manifest.write(report_dir / "manifest.json");
  return kExitOk;
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

struct AnalyzeArgs {
  std::string ckpt, ckpt_b, images, out, branch;
  std::string blocks = "1-6";
  int resolution = 224;
  int count = 4;
  bool quiet = false;
  int threads = 0;
};

inline int cmd_analyze(const AnalyzeArgs& a, const std::vector<std::string>& argv) {
  set_threads(a.threads);
  io::RunManifest manifest;
  manifest.command = "analyze";
  manifest.argv = argv;
  manifest.started_at = io::utc_timestamp();

  const auto blocks = detail::parse_block_range(a.blocks);
  std::optional<std::string> branch;
  if (!a.branch.empty()) branch = a.branch;
  auto attack_a = eval::load_attack<float>(a.ckpt, branch, blocks);
  std::optional<eval::LoadedAttack<float>> attack_b;
  if (!a.ckpt_b.empty()) {
    attack_b = eval::load_attack<float>(a.ckpt_b, branch, blocks);
  }

  auto images = detail::load_images_flat(a.images, a.resolution, a.count);
  std::vector<analysis::FigureEntry> figures;
  ag::NoGradGuard guard;
  for (const auto& [name, img] : images) {
    auto x = ag::Variable<float>::constant(img);
    auto taps_a = attack_a.generator->encode(x);
    std::vector<analysis::PooledMap> pooled_a;
    for (int b : blocks) {
      pooled_a.push_back(analysis::pooled_activation(taps_a, b));
      figures.push_back({"activation", name, b, pooled_a.back().values});
    }
    // inter-block added-noise maps for consecutive same-shape blocks
    for (std::size_t i = 1; i < blocks.size(); ++i) {
      const auto& prev = taps_a.at(blocks[i - 1]).value();
      const auto& cur = taps_a.at(blocks[i]).value();
      if (prev.same_shape(cur)) {
        auto noise = analysis::block_noise_map(taps_a, blocks[i - 1], blocks[i]);
        figures.push_back({"noise", name, blocks[i], noise.values});
      }
    }
    if (attack_b) {
      auto taps_b = attack_b->generator->encode(x);
      for (std::size_t i = 0; i < blocks.size(); ++i) {
        auto pooled_b = analysis::pooled_activation(taps_b, blocks[i]);
        figures.push_back(
            {"diff_mask", name, blocks[i], analysis::diff_mask(pooled_a[i], pooled_b)});
      }
    }
  }
  const auto manifest_path = analysis::emit_figures(figures, a.out);
  std::cout << "wrote " << figures.size() << " figures; manifest at " << manifest_path
            << "\n";

  manifest.resolved_config = {{"ckpt", a.ckpt},      {"ckpt_b", a.ckpt_b},
                              {"images", a.images},  {"blocks", a.blocks},
                              {"count", a.count},    {"resolution", a.resolution}};
  manifest.add_checkpoint(a.ckpt);
  if (!a.ckpt_b.empty()) manifest.add_checkpoint(a.ckpt_b);
  manifest.finished_at = io::utc_timestamp();
  manifest.write(std::filesystem::path(a.out) / "run_manifest.json");
  return kExitOk;
}

// ---------------------------------------------------------------------------
// metrics (recompute from a per-record dump, no model required)
// ---------------------------------------------------------------------------

struct MetricsArgs {
  std::string records, out;
};

inline int cmd_metrics(const MetricsArgs& a) {
  const auto recs = eval::read_records(a.records);
  const auto report = eval::compute_metrics(recs);
  eval::AggregateTable t = eval::aggregate({{a.records, report}});
  std::cout << eval::format_table(t);
  if (!a.out.empty()) {
    std::ofstream out(a.out);
    out << report.to_json().dump(2) << "\n";
    if (!out) throw DataError("failed to write '" + a.out + "'");
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// fixture (desk-scale synthetic dataset + toy surrogate/victims)
// ---------------------------------------------------------------------------

struct FixtureArgs {
  std::string out;
  int classes = 10;
  int train_per_class = 210;
  int val_per_class = 40;
  int resolution = 64;
  std::uint64_t seed = 7;
  bool skip_models = false;
  bool quiet = false;
  int threads = 0;
};

inline int cmd_fixture(const FixtureArgs& a) {
  set_threads(a.threads);
  data::FixtureOptions opt;
  opt.out_dir = a.out;
  opt.num_classes = a.classes;
  opt.train_per_class = a.train_per_class;
  opt.val_per_class = a.val_per_class;
  opt.resolution = a.resolution;
  opt.seed = a.seed;
  opt.train_models = !a.skip_models;
  auto res = data::make_fixture(opt, a.quiet ? nullptr : &std::cerr);
  std::cout << "fixture ready: dataset=" << res.dataset_root
            << " registry=" << res.registry_path << "\n";
  for (const auto& [id, top1] : res.val_top1) {
    std::cout << "  " << id << " val top-1 " << top1 << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// dispatch
// ---------------------------------------------------------------------------

inline int run(std::vector<std::string> argv) {
  CLI::App app{"generative adversarial perturbation toolkit"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "train a perturbation generator");
  train->set_config("--config");
  train->add_option("--data", ta.data, "dataset root (train/ subtree used)")->required();
  train->add_option("--out", ta.out, "output checkpoint path")->required();
  train->add_option("--surrogate", ta.surrogate_id, "surrogate model id (default vgg16)");
  train->add_option("--registry", ta.registry, "model registry JSON");
  train->add_option("--feature-layer", ta.feature_layer, "surrogate feature layer");
  train->add_option("--eps", ta.cfg.epsilon_train, "training budget, 8-bit units");
  train->add_option("--lambda", ta.cfg.lambda_distill, "distillation weight");
  train->add_option("--tau", ta.cfg.tau, "hinge cosine threshold");
  train->add_option("--eta", ta.cfg.eta, "EMA decay");
  train->add_option("--early", ta.cfg.early_blocks, "distilled blocks")->delimiter(',');
  train->add_option("--mode", ta.mode, "baseline|mt_only|full");
  train->add_option("--iters", ta.cfg.max_iters, "iteration cap (0: full epochs)");
  train->add_option("--epochs", ta.cfg.epochs, "epochs when no cap");
  train->add_option("--batch-size", ta.cfg.batch_size, "batch size");
  train->add_option("--lr", ta.cfg.lr, "learning rate");
  train->add_option("--seed", ta.cfg.seed, "run seed");
  train->add_option("--checkpoint-every", ta.cfg.checkpoint_every, "periodic checkpointing");
  train->add_option("--arch", ta.arch, "generator architecture resnet|unet");
  train->add_option("--base-width", ta.cfg.generator.base_width, "generator base width");
  train->add_option("--blocks", ta.cfg.generator.num_residual_blocks, "residual blocks");
  train->add_option("--resolution", ta.resolution, "training resolution");
  train->add_option("--resize-policy", ta.resize_policy, "crop|stretch|none");
  train->add_flag("--per-sample-hinge", ta.cfg.per_sample_hinge,
                  "hinge per sample instead of batch-mean cosine");
  train->add_flag("--no-verify", ta.no_verify, "skip decode check at ingest");
  train->add_option("--resume", ta.resume, "resume from checkpoint");
  train->add_option("--threads", ta.threads, "worker threads (0: default)");
  train->add_flag("--quiet", ta.quiet, "suppress progress output");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint against victims");
  ev->set_config("--config");
  ev->add_option("--ckpt", ea.ckpt, "attack checkpoint")->required();
  ev->add_option("--data", ea.data, "dataset root (val/ subtree by default)")->required();
  ev->add_option("--victims", ea.victims, "victim model ids")->required()->delimiter(',');
  ev->add_option("--registry", ea.registry, "model registry JSON");
  ev->add_option("--eps", ea.eps, "test-time budgets")->delimiter(',');
  ev->add_option("--resolution", ea.resolution, "evaluation resolution");
  ev->add_option("--defense", ea.defenses, "defense spec (bdr:N | rp[:seed] | jpeg:Q)");
  ev->add_option("--branch", ea.branch, "teacher|student (default: teacher)");
  ev->add_option("--subset", ea.subset, "evaluate only the first N images");
  ev->add_option("--batch-size", ea.batch_size, "batch size");
  ev->add_option("--split", ea.split, "dataset split (val|train)");
  ev->add_option("--report", ea.report, "report output directory");
  ev->add_flag("--dump", ea.dump, "write per-record CSV dumps");
  ev->add_option("--resize-policy", ea.resize_policy, "crop|stretch|none");
  ev->add_flag("--no-verify", ea.no_verify, "skip decode check at ingest");
  ev->add_option("--threads", ea.threads, "worker threads");
  ev->add_flag("--quiet", ea.quiet, "suppress progress output");

  AnalyzeArgs aa;
  auto* an = app.add_subcommand("analyze", "emit generator-internal diagnostics");
  an->add_option("--ckpt", aa.ckpt, "checkpoint (baseline when --ckpt-b given)")->required();
  an->add_option("--ckpt-b", aa.ckpt_b, "comparison checkpoint for diff masks");
  an->add_option("--images", aa.images, "directory of input images")->required();
  an->add_option("--blocks", aa.blocks, "block range, e.g. 1-6");
  an->add_option("--out", aa.out, "figure output directory")->required();
  an->add_option("--count", aa.count, "number of images to analyze");
  an->add_option("--branch", aa.branch, "teacher|student");
  an->add_option("--resolution", aa.resolution, "analysis resolution");
  an->add_option("--threads", aa.threads, "worker threads");
  an->add_flag("--quiet", aa.quiet, "suppress progress output");

  MetricsArgs ma;
  auto* me = app.add_subcommand("metrics", "recompute metrics from a record dump");
  me->add_option("--records", ma.records, "per-record CSV dump")->required();
  me->add_option("--out", ma.out, "metric report JSON output");

  FixtureArgs fa;
  auto* fx = app.add_subcommand("fixture", "build the desk-scale synthetic fixture");
  fx->add_option("--out", fa.out, "fixture output directory")->required();
  fx->add_option("--classes", fa.classes, "number of classes");
  fx->add_option("--train-per-class", fa.train_per_class, "training images per class");
  fx->add_option("--val-per-class", fa.val_per_class, "validation images per class");
  fx->add_option("--resolution", fa.resolution, "image resolution");
  fx->add_option("--seed", fa.seed, "fixture seed");
  fx->add_flag("--skip-models", fa.skip_models, "render the dataset only");
  fx->add_option("--threads", fa.threads, "worker threads");
  fx->add_flag("--quiet", fa.quiet, "suppress progress output");

  std::vector<char*> cargs;
  cargs.reserve(argv.size());
  for (auto& s : argv) cargs.push_back(s.data());

  try {
    app.parse(static_cast<int>(cargs.size()), cargs.data());
    if (train->parsed()) return cmd_train(ta, argv);
    if (ev->parsed()) return cmd_eval(ea, argv);
    if (an->parsed()) return cmd_analyze(aa, argv);
    if (me->parsed()) return cmd_metrics(ma);
    if (fx->parsed()) return cmd_fixture(fa);
    return kExitConfig;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericsError& e) {
    std::cerr << "numerics error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace advgen::cli
