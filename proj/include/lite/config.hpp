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

// Model and training configuration with a fixed JSON schema. Unknown keys
// and out-of-range values raise ConfigError naming the field.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "lite/layers.hpp"
#include "lite/lsra.hpp"

namespace lite {

enum class Task { seq2seq, lm };

/// Reserved token ids shared by every synthetic vocabulary.
inline constexpr int kPadId = 0;
inline constexpr int kBosId = 1;
inline constexpr int kEosId = 2;
inline constexpr int kFirstSymbolId = 3;

struct ModelConfig {
  Task task = Task::seq2seq;
  std::size_t vocab_src = 16;
  std::size_t vocab_tgt = 16;
  std::size_t d_model = 64;
  std::size_t n_layers_enc = 2;
  std::size_t n_layers_dec = 2;
  std::size_t heads = 4;
  BlockStyle block_style = BlockStyle::lsra;
  std::vector<std::size_t> kernel_schedule;  // one K per layer, lsra only
  KernelSource conv_mode = KernelSource::static_lightweight;
  bool glu_on_conv_input = false;
  double d_ff_ratio = 1.0;
  double dropout = 0.0;
  double ffn_dropout = 0.0;
  bool share_embeddings = false;  // source and target tables are one tensor

  std::size_t d_ff() const;
  /// Throws ConfigError on the first violated invariant.
  void validate() const;
  /// Block layout for layer `layer` of the encoder (decoder = false) or decoder.
  BlockSpec block_spec(std::size_t layer, bool decoder) const;
};

enum class TaskKind { copy, reverse, toy_translate, char_lm };
enum class ScheduleKind { inverse_sqrt, cosine };

struct TrainConfig {
  TaskKind task = TaskKind::copy;
  std::size_t max_len = 10;
  std::size_t min_len = 1;
  std::size_t vocab = 0;  // 0 = take the model's target vocabulary
  std::size_t batch_tokens = 256;
  std::size_t steps = 5000;
  std::size_t accumulation = 1;
  ScheduleKind schedule = ScheduleKind::inverse_sqrt;
  double lr_start = 1e-7;
  double lr_peak = 1e-3;
  double lr_floor = 1e-9;
  std::size_t warmup_steps = 400;
  double label_smoothing = 0.1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.98;
  double adam_eps = 1e-9;
  std::size_t eval_every = 100;
  std::size_t eval_sequences = 64;
  double target_accuracy = 1.01;  // > 1 disables early stopping
  std::uint64_t seed = 1;

  void validate(const ModelConfig& model) const;
};

struct RunConfig {
  ModelConfig model;
  std::optional<TrainConfig> train;
};

nlohmann::ordered_json to_json(const ModelConfig& c);
nlohmann::ordered_json to_json(const TrainConfig& c);
nlohmann::ordered_json to_json(const RunConfig& c);

ModelConfig model_config_from_json(const nlohmann::json& j);
TrainConfig train_config_from_json(const nlohmann::json& j);
/// {"model": {...}, "train": {...}}; "train" optional. Validated.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

const char* to_string(Task t);
const char* to_string(KernelSource s);
const char* to_string(TaskKind t);
const char* to_string(ScheduleKind s);

}  // namespace lite
