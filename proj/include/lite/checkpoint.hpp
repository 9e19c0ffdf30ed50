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

// Binary checkpoints. Layout of both container formats:
//
//   4 bytes   magic ("LTC1" dense, "LTQ1" compressed)
//   u32 LE    metadata length M
//   M bytes   JSON metadata
//   payload   little-endian sections described by the metadata
//
// LTC1 metadata is {"config": ..., "params": [{"name", "shape", "offset"}]}
// with offsets in bytes from the start of the payload; every parameter is
// stored as float32.

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"
#include "lite/model.hpp"

namespace lite {

struct Container {
  nlohmann::ordered_json meta;
  std::string payload;
};

void write_container(const std::filesystem::path& path, const char (&magic)[5], const nlohmann::ordered_json& meta,
                     const std::string& payload);
Container read_container(const std::filesystem::path& path, const char (&magic)[5]);

void put_f32(std::string& buf, double value);
void put_u32(std::string& buf, std::uint32_t value);
float get_f32(const std::string& buf, std::size_t offset);
std::uint32_t get_u32(const std::string& buf, std::size_t offset);

/// Rounds every parameter through float32, as a save/load round trip would.
void round_to_f32(Model& model);

void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

/// Copies `values` into the parameter `name`; shapes must agree.
void assign_parameter(Model& model, const std::string& name, const Shape& shape, std::span<const double> values);

}  // namespace lite
