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

#include <chrono>
#include <ctime>

#include <json.hpp>

#include "advgen/io/hash.hpp"

namespace advgen::io {

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Record of one CLI run: command, resolved configuration, seed and content
/// hashes of the checkpoints it read/wrote. Enough to re-run the command
/// bit-compatibly in deterministic mode.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  nlohmann::json resolved_config;
  std::uint64_t seed = 0;
  nlohmann::json checkpoint_hashes = nlohmann::json::object();  // path -> sha256
  std::string started_at;
  std::string finished_at;

  void add_checkpoint(const std::filesystem::path& path) {
    if (std::filesystem::exists(path)) {
      checkpoint_hashes[path.string()] = sha256_file(path);
    }
  }

  void write(const std::filesystem::path& path) const {
    nlohmann::json j = {{"command", command},
                        {"argv", argv},
                        {"resolved_config", resolved_config},
                        {"seed", seed},
                        {"checkpoint_sha256", checkpoint_hashes},
                        {"started_at", started_at},
                        {"finished_at", finished_at},
                        {"version", kVersionString}};
    std::ofstream out(path);
    out << j.dump(2) << "\n";
    if (!out) throw DataError("failed to write run manifest '" + path.string() + "'");
  }
};

}  // namespace advgen::io
