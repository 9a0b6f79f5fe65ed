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

#include <iostream>
#include <map>

#include <opencv2/imgproc.hpp>

#include "advgen/io/dataset.hpp"
#include "advgen/io/registry.hpp"
#include "advgen/nn/optim.hpp"

namespace advgen::data {

// ---------------------------------------------------------------------------
// Procedural class-folder dataset. Ten texture/shape families; hue is drawn
// independently of the class so classifiers must key on structure, not color.
// ---------------------------------------------------------------------------

namespace detail {

inline cv::Scalar random_color(Rng& rng, int v_lo = 120, int v_hi = 255) {
  cv::Mat hsv(1, 1, CV_8UC3,
              cv::Scalar(rng.below(180), 120 + rng.below(120), v_lo + rng.below(v_hi - v_lo)));
  cv::Mat bgr;
  cv::cvtColor(hsv, bgr, cv::COLOR_HSV2BGR);
  const auto px = bgr.at<cv::Vec3b>(0, 0);
  return {static_cast<double>(px[0]), static_cast<double>(px[1]),
          static_cast<double>(px[2])};
}

inline void draw_pattern(cv::Mat& img, int cls, Rng& rng) {
  const int r = img.rows;
  const cv::Scalar color = random_color(rng);
  const int cx = r / 2 + static_cast<int>(rng.normal(0, r * 0.08));
  const int cy = r / 2 + static_cast<int>(rng.normal(0, r * 0.08));
  const int size = static_cast<int>(r * rng.uniform(0.22, 0.34));
  switch (cls % 10) {
    case 0:  // filled disc
      cv::circle(img, {cx, cy}, size, color, cv::FILLED, cv::LINE_AA);
      break;
    case 1:  // filled square
      cv::rectangle(img, {cx - size, cy - size}, {cx + size, cy + size}, color,
                    cv::FILLED);
      break;
    case 2: {  // triangle
      std::vector<cv::Point> pts{{cx, cy - size}, {cx - size, cy + size},
                                 {cx + size, cy + size}};
      cv::fillConvexPoly(img, pts, color, cv::LINE_AA);
      break;
    }
    case 3: {  // plus sign
      const int t = std::max(2, size / 2);
      cv::rectangle(img, {cx - size, cy - t}, {cx + size, cy + t}, color, cv::FILLED);
      cv::rectangle(img, {cx - t, cy - size}, {cx + t, cy + size}, color, cv::FILLED);
      break;
    }
    case 4: {  // horizontal stripes
      const int period = 4 + static_cast<int>(rng.below(5));
      for (int y = static_cast<int>(rng.below(static_cast<std::uint64_t>(period))); y < r;
           y += 2 * period) {
        cv::rectangle(img, {0, y}, {r - 1, std::min(r - 1, y + period - 1)}, color,
                      cv::FILLED);
      }
      break;
    }
    case 5: {  // vertical stripes
      const int period = 4 + static_cast<int>(rng.below(5));
      for (int x = static_cast<int>(rng.below(static_cast<std::uint64_t>(period))); x < r;
           x += 2 * period) {
        cv::rectangle(img, {x, 0}, {std::min(r - 1, x + period - 1), r - 1}, color,
                      cv::FILLED);
      }
      break;
    }
    case 6: {  // checkerboard
      const int cell = 6 + static_cast<int>(rng.below(5));
      for (int y = 0; y < r; y += cell) {
        for (int x = ((y / cell) % 2) * cell; x < r; x += 2 * cell) {
          cv::rectangle(img, {x, y}, {std::min(r - 1, x + cell - 1), std::min(r - 1, y + cell - 1)},
                        color, cv::FILLED);
        }
      }
      break;
    }
    case 7: {  // dot grid
      const int step = 8 + static_cast<int>(rng.below(6));
      const int rad = std::max(2, step / 4);
      for (int y = step / 2; y < r; y += step) {
        for (int x = step / 2; x < r; x += step) {
          cv::circle(img, {x, y}, rad, color, cv::FILLED, cv::LINE_AA);
        }
      }
      break;
    }
    case 8:  // ring
      cv::circle(img, {cx, cy}, size, color, std::max(2, size / 4), cv::LINE_AA);
      break;
    default: {  // diamond
      std::vector<cv::Point> pts{{cx, cy - size}, {cx + size, cy}, {cx, cy + size},
                                 {cx - size, cy}};
      cv::fillConvexPoly(img, pts, color, cv::LINE_AA);
      break;
    }
  }
}

inline cv::Mat render_sample(int cls, int resolution, Rng& rng) {
  cv::Mat img(resolution, resolution, CV_8UC3);
  const cv::Scalar top = random_color(rng, 20, 120);
  const cv::Scalar bottom = random_color(rng, 20, 120);
  for (int y = 0; y < resolution; ++y) {
    const double a = static_cast<double>(y) / resolution;
    cv::Vec3b* row = img.ptr<cv::Vec3b>(y);
    for (int x = 0; x < resolution; ++x) {
      for (int c = 0; c < 3; ++c) {
        row[x][c] = cv::saturate_cast<unsigned char>((1 - a) * top[c] + a * bottom[c]);
      }
    }
  }
  draw_pattern(img, cls, rng);
  // mild sensor-style noise
  for (int y = 0; y < resolution; ++y) {
    cv::Vec3b* row = img.ptr<cv::Vec3b>(y);
    for (int x = 0; x < resolution; ++x) {
      for (int c = 0; c < 3; ++c) {
        row[x][c] = cv::saturate_cast<unsigned char>(row[x][c] + rng.normal(0, 6.0));
      }
    }
  }
  return img;
}

}  // namespace detail

struct FixtureOptions {
  std::filesystem::path out_dir;
  int num_classes = 10;
  int train_per_class = 210;
  int val_per_class = 40;
  int resolution = 64;
  std::uint64_t seed = 7;
  int surrogate_epochs = 8;
  int victim_epochs = 5;
  bool train_models = true;
};

struct FixtureResult {
  std::filesystem::path dataset_root;
  std::filesystem::path registry_path;
  std::string surrogate_id = "toy_surrogate";
  std::vector<std::string> victim_ids{"toy_victim_a", "toy_victim_b"};
  std::map<std::string, double> val_top1;
};

/// Render the synthetic dataset tree: root/{train,val}/class_XX/img_XXXXX.png.
inline void render_dataset(const FixtureOptions& opt) {
  for (const char* split : {"train", "val"}) {
    const bool is_train = std::string(split) == "train";
    const int per_class = is_train ? opt.train_per_class : opt.val_per_class;
    for (int cls = 0; cls < opt.num_classes; ++cls) {
      char cls_name[32];
      std::snprintf(cls_name, sizeof(cls_name), "class_%02d", cls);
      const auto dir = opt.out_dir / "dataset" / split / cls_name;
      std::filesystem::create_directories(dir);
      for (int i = 0; i < per_class; ++i) {
        Rng rng(split_seed(opt.seed, (is_train ? 0x10000000ull : 0x20000000ull) +
                                         static_cast<std::uint64_t>(cls) * 100000 + i));
        cv::Mat img = detail::render_sample(cls, opt.resolution, rng);
        char file[32];
        std::snprintf(file, sizeof(file), "img_%05d.png", i);
        io::write_image(dir / file, img);
      }
    }
  }
}

/// Top-1 accuracy of a classifier over a dataset split.
template <typename T>
double classifier_accuracy(const nn::LayeredClassifier<T>& net,
                           const io::DatasetHandle& data, int batch_size = 32,
                           std::int64_t limit = 0) {
  const std::int64_t total = limit > 0 ? std::min(limit, data.size()) : data.size();
  std::int64_t hits = 0;
  for (std::int64_t begin = 0; begin < total; begin += batch_size) {
    const std::int64_t end = std::min(begin + batch_size, total);
    auto [x, labels] = data.load_range(begin, end);
    auto preds = net.predict(x.template cast<T>());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (preds[i] == labels[i]) ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

/// Cross-entropy training for the desk-scale classifiers.
template <typename T>
double train_classifier(nn::LayeredClassifier<T>& net, const io::DatasetHandle& train,
                        const io::DatasetHandle& val, int epochs, double lr,
                        std::uint64_t seed, std::ostream* status = nullptr) {
  nn::Adam<T> opt(net.named_parameters(), {lr, 0.9, 0.999, 1e-8});
  const int batch_size = 32;
  std::vector<std::int64_t> order(static_cast<std::size_t>(train.size()));
  for (std::int64_t i = 0; i < train.size(); ++i) order[static_cast<std::size_t>(i)] = i;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    Rng rng(split_seed(seed, 500 + static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);
    double loss_sum = 0;
    std::int64_t batches = 0;
    for (std::int64_t begin = 0; begin + batch_size <= train.size(); begin += batch_size) {
      std::vector<std::int64_t> idx(order.begin() + begin, order.begin() + begin + batch_size);
      auto [x, labels] = train.load_batch(idx);
      auto logits = net.logits(ag::Variable<T>::constant(x.template cast<T>()));
      auto loss = ag::cross_entropy(logits, labels);
      loss_sum += loss.value()[0];
      ++batches;
      opt.zero_grad();
      loss.backward();
      opt.step();
    }
    if (status) {
      (*status) << "  epoch " << (epoch + 1) << "/" << epochs
                << "  ce=" << loss_sum / std::max<std::int64_t>(1, batches) << "\n";
    }
  }
  return classifier_accuracy(net, val);
}

/// Build the full desk-scale fixture: dataset + trained surrogate + victims +
/// registry file. Everything is deterministic in opt.seed.
inline FixtureResult make_fixture(const FixtureOptions& opt, std::ostream* status = nullptr) {
  FixtureResult res;
  res.dataset_root = opt.out_dir / "dataset";
  res.registry_path = opt.out_dir / "registry.json";
  std::filesystem::create_directories(opt.out_dir);

  if (status) (*status) << "[fixture] rendering synthetic dataset...\n";
  render_dataset(opt);

  nlohmann::json registry;
  registry["models"] = nlohmann::json::array();
  if (opt.train_models) {
    const auto train = io::DatasetHandle::ingest(res.dataset_root, io::Split::kTrain,
                                                 opt.resolution, io::ResizePolicy::kNone);
    const auto val = io::DatasetHandle::ingest(res.dataset_root, io::Split::kVal,
                                               opt.resolution, io::ResizePolicy::kNone);
    nn::InputNorm toy_norm;
    toy_norm.mean = {0.5, 0.5, 0.5};
    toy_norm.stddev = {0.5, 0.5, 0.5};

    struct Plan {
      std::string id, arch;
      int epochs;
      std::uint64_t seed;
    };
    const std::vector<Plan> plans = {
        {res.surrogate_id, "smallcnn", opt.surrogate_epochs, split_seed(opt.seed, 11)},
        {res.victim_ids[0], "smallcnn_w48", opt.victim_epochs, split_seed(opt.seed, 12)},
        {res.victim_ids[1], "smallcnn_deep", opt.victim_epochs, split_seed(opt.seed, 13)},
    };
    for (const auto& plan : plans) {
      if (status) (*status) << "[fixture] training " << plan.id << " (" << plan.arch << ")\n";
      auto net = nn::make_classifier<float>(plan.arch, opt.num_classes, plan.seed, toy_norm);
      const double top1 =
          train_classifier<float>(net, train, val, plan.epochs, 1e-3, plan.seed, status);
      if (status) (*status) << "[fixture] " << plan.id << " val top-1 = " << top1 << "\n";
      const auto ckpt = opt.out_dir / (plan.id + ".ckpt");
      io::save_classifier(net, ckpt, top1);
      res.val_top1[plan.id] = top1;

      io::ModelEntry entry;
      entry.id = plan.id;
      entry.arch = plan.arch;
      entry.num_classes = opt.num_classes;
      entry.checkpoint = ckpt.filename().string();  // relative to the registry
      entry.normalization = toy_norm;
      entry.feature_layer = nn::default_feature_layer(plan.arch);
      entry.reported_top1 = top1;
      registry["models"].push_back(entry);
    }
  }
  std::ofstream out(res.registry_path);
  out << registry.dump(2) << "\n";
  if (!out) throw DataError("failed to write fixture registry");

  nlohmann::json manifest = {{"dataset_root", res.dataset_root.string()},
                             {"num_classes", opt.num_classes},
                             {"train_images", opt.num_classes * opt.train_per_class},
                             {"val_images", opt.num_classes * opt.val_per_class},
                             {"resolution", opt.resolution},
                             {"seed", opt.seed},
                             {"val_top1", res.val_top1}};
  std::ofstream mf(opt.out_dir / "fixture.json");
  mf << manifest.dump(2) << "\n";
  return res;
}

}  // namespace advgen::data
