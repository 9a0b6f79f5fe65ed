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

#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "advgen/core/tensor.hpp"
#include "advgen/nn/module.hpp"

namespace advgen::io {

// Single-file archive: 8-byte magic, little-endian u64 header length, JSON
// header (metadata + tensor index), then raw tensor bytes. Floats are dumped
// verbatim, so save -> load round-trips bit-exactly on a given platform.
inline constexpr char kCheckpointMagic[8] = {'A', 'G', 'C', 'K', '0', '0', '0', '1'};
inline constexpr int kCheckpointVersion = 1;

template <typename T>
constexpr const char* dtype_name() {
  if constexpr (std::is_same_v<T, float>) return "f32";
  else if constexpr (std::is_same_v<T, double>) return "f64";
  else return "unknown";
}

class CheckpointWriter {
 public:
  void set_meta(nlohmann::json meta) { meta_ = std::move(meta); }
  nlohmann::json& meta() { return meta_; }

  template <typename T>
  void add(const std::string& name, const Tensor<T>& t) {
    if (index_.count(name)) throw ConfigError("duplicate tensor name '" + name + "'");
    Entry e;
    e.dtype = dtype_name<T>();
    e.shape = t.shape();
    e.offset = static_cast<std::uint64_t>(blob_.size());
    e.nbytes = static_cast<std::uint64_t>(t.numel()) * sizeof(T);
    blob_.resize(blob_.size() + e.nbytes);
    std::memcpy(blob_.data() + e.offset, t.data(), e.nbytes);
    order_.push_back(name);
    index_[name] = std::move(e);
  }

  template <typename T>
  void add_params(const std::string& prefix, const nn::NamedParams<T>& params) {
    for (const auto& [name, p] : params) add(prefix + "/" + name, p.value());
  }

  void save(const std::filesystem::path& path) const {
    nlohmann::json header;
    header["format_version"] = kCheckpointVersion;
    header["meta"] = meta_;
    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& name : order_) {
      const Entry& e = index_.at(name);
      tensors.push_back({{"name", name},
                         {"dtype", e.dtype},
                         {"shape", e.shape},
                         {"offset", e.offset},
                         {"nbytes", e.nbytes}});
    }
    header["tensors"] = std::move(tensors);
    const std::string hs = header.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
    out.write(kCheckpointMagic, 8);
    const std::uint64_t hlen = hs.size();
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    out.write(reinterpret_cast<const char*>(blob_.data()),
              static_cast<std::streamsize>(blob_.size()));
    if (!out) throw DataError("write failed for '" + path.string() + "'");
  }

 private:
  struct Entry {
    std::string dtype;
    Shape shape;
    std::uint64_t offset = 0, nbytes = 0;
  };
  nlohmann::json meta_;
  std::vector<std::string> order_;
  std::map<std::string, Entry> index_;
  std::vector<unsigned char> blob_;
};

class CheckpointReader {
 public:
  explicit CheckpointReader(const std::filesystem::path& path) : path_(path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
      throw ConfigError("'" + path.string() + "' is not a checkpoint archive");
    }
    std::uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    std::string hs(hlen, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(hlen));
    if (!in) throw DataError("truncated checkpoint header in '" + path.string() + "'");
    nlohmann::json header = nlohmann::json::parse(hs, nullptr, false);
    if (header.is_discarded()) throw DataError("corrupt checkpoint header");
    const int version = header.value("format_version", -1);
    if (version != kCheckpointVersion) {
      throw ConfigError("checkpoint format version " + std::to_string(version) +
                        " is not supported (expected " +
                        std::to_string(kCheckpointVersion) + ")");
    }
    meta_ = header.value("meta", nlohmann::json::object());
    blob_offset_ = 16 + hlen;
    for (const auto& t : header.at("tensors")) {
      Entry e;
      e.dtype = t.at("dtype").get<std::string>();
      e.shape = t.at("shape").get<Shape>();
      e.offset = t.at("offset").get<std::uint64_t>();
      e.nbytes = t.at("nbytes").get<std::uint64_t>();
      const std::string name = t.at("name").get<std::string>();
      order_.push_back(name);
      index_[name] = std::move(e);
    }
  }

  const nlohmann::json& meta() const { return meta_; }
  const std::vector<std::string>& names() const { return order_; }
  bool has(const std::string& name) const { return index_.count(name) > 0; }

  template <typename T>
  Tensor<T> load(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) {
      throw StructuralError("checkpoint has no tensor '" + name + "'");
    }
    const Entry& e = it->second;
    if (e.dtype != dtype_name<T>()) {
      throw StructuralError("tensor '" + name + "' has dtype " + e.dtype +
                            ", requested " + dtype_name<T>());
    }
    Tensor<T> t(e.shape);
    if (static_cast<std::uint64_t>(t.numel()) * sizeof(T) != e.nbytes) {
      throw DataError("tensor '" + name + "' payload size mismatch");
    }
    std::ifstream in(path_, std::ios::binary);
    in.seekg(static_cast<std::streamoff>(blob_offset_ + e.offset));
    in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(e.nbytes));
    if (!in) throw DataError("truncated tensor payload for '" + name + "'");
    return t;
  }

  /// Load every `prefix/...` tensor into a structurally identical tree.
  template <typename T>
  void load_params(const std::string& prefix, nn::NamedParams<T>& params) const {
    for (auto& [name, p] : params) {
      Tensor<T> t = load<T>(prefix + "/" + name);
      if (!t.same_shape(p.value())) {
        throw StructuralError("parameter '" + name + "' shape mismatch: checkpoint " +
                              shape_string(t.shape()) + " vs model " +
                              shape_string(p.value().shape()));
      }
      std::copy(t.data(), t.data() + t.numel(), p.value().data());
    }
  }

  bool has_prefix(const std::string& prefix) const {
    for (const auto& n : order_) {
      if (n.rfind(prefix + "/", 0) == 0) return true;
    }
    return false;
  }

 private:
  struct Entry {
    std::string dtype;
    Shape shape;
    std::uint64_t offset = 0, nbytes = 0;
  };
  std::filesystem::path path_;
  nlohmann::json meta_;
  std::uint64_t blob_offset_ = 0;
  std::vector<std::string> order_;
  std::map<std::string, Entry> index_;
};

}  // namespace advgen::io
