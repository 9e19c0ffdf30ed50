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

#include "lite/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "lite/errors.hpp"

namespace lite {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void put_u32(std::string& buf, std::uint32_t value) {
  char bytes[4];
  std::memcpy(bytes, &value, 4);
  buf.append(bytes, 4);
}

void put_f32(std::string& buf, double value) {
  const float f = static_cast<float>(value);
  char bytes[4];
  std::memcpy(bytes, &f, 4);
  buf.append(bytes, 4);
}

std::uint32_t get_u32(const std::string& buf, std::size_t offset) {
  if (offset + 4 > buf.size()) throw IoError("checkpoint: truncated data at byte " + std::to_string(offset));
  std::uint32_t v;
  std::memcpy(&v, buf.data() + offset, 4);
  return v;
}

float get_f32(const std::string& buf, std::size_t offset) {
  if (offset + 4 > buf.size()) throw IoError("checkpoint: truncated data at byte " + std::to_string(offset));
  float v;
  std::memcpy(&v, buf.data() + offset, 4);
  return v;
}

void write_container(const std::filesystem::path& path, const char (&magic)[5], const nlohmann::ordered_json& meta,
                     const std::string& payload) {
  const std::string text = meta.dump();
  std::string head(magic, 4);
  put_u32(head, static_cast<std::uint32_t>(text.size()));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

Container read_container(const std::filesystem::path& path, const char (&magic)[5]) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();
  if (bytes.size() < 8 || bytes.compare(0, 4, magic, 4) != 0) {
    throw IoError(path.string() + ": not a " + std::string(magic, 4) + " file");
  }
  const std::uint32_t meta_len = get_u32(bytes, 4);
  if (8 + static_cast<std::size_t>(meta_len) > bytes.size()) throw IoError(path.string() + ": truncated metadata");
  Container c;
  try {
    c.meta = nlohmann::ordered_json::parse(bytes.substr(8, meta_len));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": bad metadata: " + e.what());
  }
  c.payload = bytes.substr(8 + meta_len);
  return c;
}

void round_to_f32(Model& model) {
  for (auto& [name, t] : model.parameters()) {
    Tensor p = t;
    for (double& v : p.mutable_data()) v = static_cast<double>(static_cast<float>(v));
  }
}

void assign_parameter(Model& model, const std::string& name, const Shape& shape, std::span<const double> values) {
  for (auto& [pname, t] : model.parameters()) {
    if (pname != name) continue;
    if (t.shape() != shape) {
      throw DimensionError("checkpoint: parameter " + name + " has shape " + shape_str(t.shape()) +
                           ", file has " + shape_str(shape));
    }
    Tensor p = t;
    std::copy(values.begin(), values.end(), p.mutable_data().begin());
    return;
  }
  throw IoError("checkpoint: unknown parameter " + name);
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  nlohmann::ordered_json meta;
  meta["config"] = to_json(model.config());
  nlohmann::ordered_json params = nlohmann::ordered_json::array();
  std::string payload;
  for (const auto& [name, t] : model.parameters()) {
    params.push_back({{"name", name}, {"shape", t.shape()}, {"offset", payload.size()}});
    for (double v : t.data()) put_f32(payload, v);
  }
  meta["params"] = params;
  write_container(path, "LTC1", meta, payload);
}

Model load_checkpoint(const std::filesystem::path& path) {
  const Container c = read_container(path, "LTC1");
  ModelConfig config;
  try {
    config = model_config_from_json(c.meta.at("config"));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": bad metadata: " + e.what());
  }
  Rng rng(0);
  Model model = Model::build(config, rng);
  const std::size_t expected = model.parameters().size();
  const auto& params = c.meta.at("params");
  if (params.size() != expected) {
    throw IoError(path.string() + ": " + std::to_string(params.size()) + " parameters, model has " +
                  std::to_string(expected));
  }
  for (const auto& entry : params) {
    const std::string name = entry.at("name").get<std::string>();
    const Shape shape = entry.at("shape").get<Shape>();
    const std::size_t offset = entry.at("offset").get<std::size_t>();
    std::vector<double> values(shape_numel(shape));
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = get_f32(c.payload, offset + 4 * i);
    assign_parameter(model, name, shape, values);
  }
  return model;
}

}  // namespace lite
