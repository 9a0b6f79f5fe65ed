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

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace advgen {

inline constexpr int kVersionMajor = 0;
inline constexpr int kVersionMinor = 1;
inline constexpr const char* kVersionString = "0.1.0";

/// Base class for all advgen errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration: bad flag values, out-of-range indices, unknown
/// model ids. Maps to CLI exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Dataset problems: missing directories, empty datasets, undecodable files
/// where that is fatal. Maps to CLI exit code 3.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Structural mismatch between tensors or parameter trees (shape errors,
/// missing blocks). Maps to CLI exit code 4.
class StructuralError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values where finiteness is a contract (NaN loss abort).
/// Maps to CLI exit code 4.
class NumericsError : public Error {
 public:
  using Error::Error;
};

inline std::string shape_string(const std::vector<std::int64_t>& shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

/// FNV-1a over raw bytes; used for parameter checksums in frozenness tests.
inline std::uint64_t fnv1a(const void* data, std::size_t nbytes,
                           std::uint64_t seed = 1469598103934665603ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < nbytes; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace advgen
