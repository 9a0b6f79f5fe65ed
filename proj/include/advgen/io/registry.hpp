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

#include <cstdlib>
#include <map>
#include <optional>

#include <httplib.h>
#include <json.hpp>

#include "advgen/attack/surrogate.hpp"
#include "advgen/io/checkpoint.hpp"

namespace advgen::io {

/// One registered classifier: how to build it, where its weights live, and
/// how its inputs are normalized. `checkpoint` is a local archive;
/// `url` is fetched once and cached under the cache directory.
struct ModelEntry {
  std::string id;
  std::string arch = "vgg16";
  int num_classes = 1000;
  std::optional<std::string> checkpoint;
  std::optional<std::string> url;
  nn::InputNorm normalization;
  int feature_layer = -1;  // -1: architecture default
  std::optional<double> reported_top1;

  int resolved_feature_layer() const {
    return feature_layer >= 0 ? feature_layer : nn::default_feature_layer(arch);
  }
};

inline void from_json(const nlohmann::json& j, ModelEntry& e) {
  e.id = j.at("id").get<std::string>();
  e.arch = j.value("arch", std::string("vgg16"));
  e.num_classes = j.value("num_classes", 1000);
  if (j.contains("checkpoint")) e.checkpoint = j.at("checkpoint").get<std::string>();
  if (j.contains("url")) e.url = j.at("url").get<std::string>();
  if (j.contains("normalization")) {
    const auto& n = j.at("normalization");
    e.normalization.mean = n.at("mean").get<std::array<double, 3>>();
    e.normalization.stddev = n.at("std").get<std::array<double, 3>>();
  }
  e.feature_layer = j.value("feature_layer", -1);
  if (j.contains("reported_top1")) e.reported_top1 = j.at("reported_top1").get<double>();
}

inline void to_json(nlohmann::json& j, const ModelEntry& e) {
  j = {{"id", e.id},
       {"arch", e.arch},
       {"num_classes", e.num_classes},
       {"normalization",
        {{"mean", e.normalization.mean}, {"std", e.normalization.stddev}}},
       {"feature_layer", e.feature_layer}};
  if (e.checkpoint) j["checkpoint"] = *e.checkpoint;
  if (e.url) j["url"] = *e.url;
  if (e.reported_top1) j["reported_top1"] = *e.reported_top1;
}

/// Maps model ids to buildable classifiers. Always contains the built-in
/// "vgg16" entry (random weights unless a checkpoint is supplied).
class ModelRegistry {
 public:
  ModelRegistry() {
    ModelEntry vgg;
    vgg.id = "vgg16";
    add(vgg);
  }

  static ModelRegistry from_file(const std::filesystem::path& path) {
    ModelRegistry reg;
    std::ifstream in(path);
    if (!in) throw DataError("cannot open model registry '" + path.string() + "'");
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("model registry is not valid JSON");
    reg.base_dir_ = path.parent_path();
    for (const auto& m : j.value("models", nlohmann::json::array())) {
      reg.add(m.get<ModelEntry>());
    }
    return reg;
  }

  void add(ModelEntry e) { entries_[e.id] = std::move(e); }
  bool has(const std::string& id) const { return entries_.count(id) > 0; }

  const ModelEntry& entry(const std::string& id) const {
    auto it = entries_.find(id);
    if (it == entries_.end()) {
      throw ConfigError("unknown model id '" + id + "' (not in the registry)");
    }
    return it->second;
  }

  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    for (const auto& [id, e] : entries_) out.push_back(id);
    return out;
  }

  static std::filesystem::path cache_dir() {
    if (const char* env = std::getenv("ADVGEN_CACHE_DIR")) return env;
    if (const char* home = std::getenv("HOME")) {
      return std::filesystem::path(home) / ".cache" / "advgen";
    }
    return std::filesystem::temp_directory_path() / "advgen_cache";
  }

  /// Local checkpoint path for the entry, downloading into the cache when
  /// only a URL is given. Returns nullopt for entries without weights.
  std::optional<std::filesystem::path> resolve_weights(const ModelEntry& e) const {
    if (e.checkpoint) {
      std::filesystem::path p = *e.checkpoint;
      if (p.is_relative() && !base_dir_.empty()) p = base_dir_ / p;
      if (!std::filesystem::exists(p)) {
        throw DataError("checkpoint '" + p.string() + "' for model '" + e.id +
                        "' does not exist");
      }
      return p;
    }
    if (e.url) return fetch_to_cache(e);
    return std::nullopt;
  }

  template <typename T>
  nn::LayeredClassifier<T> instantiate(const ModelEntry& e) const {
    auto net = nn::make_classifier<T>(e.arch, e.num_classes, /*seed=*/1, e.normalization);
    if (auto weights = resolve_weights(e)) {
      CheckpointReader r(*weights);
      const auto& meta = r.meta();
      if (meta.value("kind", std::string()) != "classifier") {
        throw ConfigError("'" + weights->string() + "' is not a classifier checkpoint");
      }
      if (meta.value("arch", e.arch) != e.arch) {
        throw ConfigError("registry entry '" + e.id + "' declares arch " + e.arch +
                          " but the checkpoint holds " +
                          meta.value("arch", std::string("?")));
      }
      auto params = net.named_parameters();
      r.load_params("net", params);
    }
    return net;
  }

  template <typename T>
  nn::LayeredClassifier<T> instantiate(const std::string& id) const {
    return instantiate<T>(entry(id));
  }

  template <typename T>
  attack::Surrogate<T> surrogate(const std::string& id, int feature_layer = -1) const {
    const ModelEntry& e = entry(id);
    attack::SurrogateSpec spec;
    spec.model_id = id;
    spec.feature_layer = feature_layer >= 0 ? feature_layer : e.resolved_feature_layer();
    spec.normalization = e.normalization;
    spec.frozen = true;
    return attack::Surrogate<T>(instantiate<T>(e), std::move(spec));
  }

 private:
  std::filesystem::path fetch_to_cache(const ModelEntry& e) const {
    const std::string& url = *e.url;
    const auto cached =
        cache_dir() / (e.id + "_" + std::to_string(fnv1a(url.data(), url.size())) + ".ckpt");
    if (std::filesystem::exists(cached)) return cached;

    // http://host[:port]/path
    if (url.rfind("http://", 0) != 0) {
      throw ConfigError("unsupported weight URL '" + url + "' (only http:// is handled)");
    }
    const std::string rest = url.substr(7);
    const auto slash = rest.find('/');
    const std::string hostport = slash == std::string::npos ? rest : rest.substr(0, slash);
    const std::string path = slash == std::string::npos ? "/" : rest.substr(slash);
    httplib::Client client(("http://" + hostport).c_str());
    client.set_read_timeout(30, 0);
    auto res = client.Get(path.c_str());
    if (!res || res->status != 200) {
      throw DataError("failed to download weights for '" + e.id + "' from " + url);
    }
    std::filesystem::create_directories(cached.parent_path());
    std::ofstream out(cached, std::ios::binary | std::ios::trunc);
    out.write(res->body.data(), static_cast<std::streamsize>(res->body.size()));
    if (!out) throw DataError("failed to cache weights at '" + cached.string() + "'");
    return cached;
  }

  std::map<std::string, ModelEntry> entries_;
  std::filesystem::path base_dir_;
};

/// Persist a trained classifier so registry entries can point at it.
template <typename T>
void save_classifier(const nn::LayeredClassifier<T>& net,
                     const std::filesystem::path& path,
                     std::optional<double> val_top1 = std::nullopt) {
  CheckpointWriter w;
  nlohmann::json meta = {{"kind", "classifier"},
                         {"arch", net.arch()},
                         {"num_classes", net.num_classes()},
                         {"normalization",
                          {{"mean", net.norm().mean}, {"std", net.norm().stddev}}}};
  if (val_top1) meta["val_top1"] = *val_top1;
  w.set_meta(std::move(meta));
  w.add_params("net", net.named_parameters());
  w.save(path);
}

}  // namespace advgen::io
