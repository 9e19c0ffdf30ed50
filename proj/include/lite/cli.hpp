// Copyright 2026 The litetr Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

namespace lite {

/// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitGate = 2;
inline constexpr int kExitNumeric = 3;

struct RunManifest {
  std::string command;
  std::string config_path;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;
  std::vector<std::filesystem::path> artifacts;  // relative to out_dir

  nlohmann::ordered_json to_json() const;
  /// Checksums the artifacts and writes manifest.json into out_dir.
  void write() const;
};

std::string sha256_file(const std::filesystem::path& path);

/// Runs one command line (without the program name). Output goes to `out`,
/// diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lite
