// Copyright (c) 2026 The HTCL Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line front end: config resolution, run manifests and dispatch of
// gen-data / pretrain / finetune / eval / analyze.

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "htcl/config.hpp"

namespace htcl::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

/// Environment variable naming the mel-spectrogram cache directory.
inline constexpr const char* kCacheEnv = "HTCL_CACHE_DIR";

/// Resolves defaults, then the JSON file (if any), then "dotted.key=value"
/// overrides. Override values are parsed as JSON and fall back to a string.
RunConfig parse_config(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides);

/// Sets one dotted key in a resolved config tree; the key must already exist.
void apply_override(Json& tree, const std::string& assignment);

struct RunManifest {
  std::string command;
  Json config;
  std::map<std::string, std::string> inputs;
  std::map<std::string, std::string> outputs;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> artifact_hashes;

  Json to_json() const;
  void write(const std::filesystem::path& path) const;
};

/// FNV-1a 64 of a file's bytes, as 16 hex digits.
std::string file_hash(const std::filesystem::path& path);

/// Runs one command line; returns the process exit status.
int run(int argc, const char* const* argv);

}  // namespace htcl::cli
