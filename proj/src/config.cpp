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

#include "lite/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "lite/errors.hpp"

namespace lite {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// Reads known keys of one JSON object and rejects everything else.
class FieldReader {
 public:
  FieldReader(const json& j, std::string section) : j_(j), section_(std::move(section)) {
    if (!j_.is_object()) throw ConfigError(section_ + ": expected an object");
  }

  template <typename T>
  bool get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return false;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(field(key) + ": wrong type (" + j_.at(key).dump() + ")");
    }
    return true;
  }

  bool get_size(const char* key, std::size_t& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return false;
    const json& v = j_.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0) {
      throw ConfigError(field(key) + ": expected a non-negative integer, got " + v.dump());
    }
    out = v.get<std::size_t>();
    return true;
  }

  const json* raw(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string field(const char* key) const { return section_ + "." + key; }

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (seen_.count(key) == 0) throw ConfigError(section_ + "." + key + ": unknown key");
    }
  }

 private:
  const json& j_;
  std::string section_;
  std::set<std::string> seen_;
};

// Accepts 7 or "31x3" (three layers of 31).
std::vector<std::size_t> parse_kernel_schedule(const json& v, const std::string& field) {
  if (!v.is_array()) throw ConfigError(field + ": expected an array");
  std::vector<std::size_t> out;
  for (const json& e : v) {
    if (e.is_number_integer() && e.get<long long>() > 0) {
      out.push_back(e.get<std::size_t>());
    } else if (e.is_string()) {
      const std::string s = e.get<std::string>();
      const auto x = s.find('x');
      try {
        if (x == std::string::npos) throw std::invalid_argument(s);
        const std::size_t k = std::stoul(s.substr(0, x));
        const std::size_t reps = std::stoul(s.substr(x + 1));
        out.insert(out.end(), reps, k);
      } catch (const std::exception&) {
        throw ConfigError(field + ": cannot parse entry '" + s + "' (use K or \"KxR\")");
      }
    } else {
      throw ConfigError(field + ": invalid entry " + e.dump());
    }
  }
  return out;
}

template <typename Enum, std::size_t N>
Enum parse_enum(const std::string& value, const std::string& field,
                const std::pair<const char*, Enum> (&table)[N]) {
  for (const auto& [name, e] : table) {
    if (value == name) return e;
  }
  std::string names;
  for (const auto& [name, e] : table) names += std::string(names.empty() ? "" : ", ") + name;
  throw ConfigError(field + ": unknown value '" + value + "' (expected one of " + names + ")");
}

constexpr std::pair<const char*, Task> kTasks[] = {{"seq2seq", Task::seq2seq}, {"lm", Task::lm}};
constexpr std::pair<const char*, KernelSource> kSources[] = {
    {"static_lightweight", KernelSource::static_lightweight}, {"dynamic", KernelSource::dynamic}};
constexpr std::pair<const char*, BlockStyle> kStyles[] = {{"base_bottleneck", BlockStyle::base_bottleneck},
                                                          {"flattened", BlockStyle::flattened},
                                                          {"lsra", BlockStyle::lsra}};
constexpr std::pair<const char*, TaskKind> kTaskKinds[] = {{"copy", TaskKind::copy},
                                                           {"reverse", TaskKind::reverse},
                                                           {"toy_translate", TaskKind::toy_translate},
                                                           {"char_lm", TaskKind::char_lm}};
constexpr std::pair<const char*, ScheduleKind> kSchedules[] = {{"inverse_sqrt", ScheduleKind::inverse_sqrt},
                                                               {"cosine", ScheduleKind::cosine}};

bool uses_flat_ffn(BlockStyle s) { return s == BlockStyle::flattened || s == BlockStyle::lsra; }

}  // namespace

const char* to_string(Task t) { return t == Task::seq2seq ? "seq2seq" : "lm"; }
const char* to_string(KernelSource s) {
  return s == KernelSource::static_lightweight ? "static_lightweight" : "dynamic";
}
const char* to_string(TaskKind t) {
  for (const auto& [name, e] : kTaskKinds) {
    if (e == t) return name;
  }
  return "?";
}
const char* to_string(ScheduleKind s) { return s == ScheduleKind::cosine ? "cosine" : "inverse_sqrt"; }

std::size_t ModelConfig::d_ff() const {
  return static_cast<std::size_t>(std::llround(d_ff_ratio * static_cast<double>(d_model)));
}

void ModelConfig::validate() const {
  if (d_model == 0 || d_model % 2 != 0) {
    throw ConfigError("model.d_model: must be a positive even integer, got " + std::to_string(d_model));
  }
  if (heads == 0 || d_model % (2 * heads) != 0) {
    throw ConfigError("model.heads: d_model " + std::to_string(d_model) + " is not divisible by 2*heads = " +
                      std::to_string(2 * heads));
  }
  if (vocab_tgt < 4) throw ConfigError("model.vocab_tgt: need at least 4 tokens (3 are reserved)");
  if (task == Task::seq2seq && vocab_src < 4) {
    throw ConfigError("model.vocab_src: need at least 4 tokens (3 are reserved)");
  }
  if (n_layers_dec == 0) throw ConfigError("model.n_layers_dec: must be at least 1");
  if (task == Task::seq2seq && n_layers_enc == 0) throw ConfigError("model.n_layers_enc: must be at least 1 for seq2seq");
  if (task == Task::lm && n_layers_enc != 0) throw ConfigError("model.n_layers_enc: must be 0 for lm");
  const double d_ff_exact = d_ff_ratio * static_cast<double>(d_model);
  if (!(d_ff_ratio > 0.0) || std::abs(d_ff_exact - std::round(d_ff_exact)) > 1e-9) {
    throw ConfigError("model.d_ff_ratio: d_model * d_ff_ratio must be a positive integer");
  }
  if (block_style == BlockStyle::lsra || !kernel_schedule.empty()) {
    if (kernel_schedule.size() != n_layers_dec ||
        (task == Task::seq2seq && kernel_schedule.size() != n_layers_enc)) {
      throw ConfigError("model.kernel_schedule: length " + std::to_string(kernel_schedule.size()) +
                        " must equal the layer count of every stack");
    }
  }
  for (std::size_t k : kernel_schedule) {
    if (k % 2 == 0) throw ConfigError("model.kernel_schedule: kernel size " + std::to_string(k) + " is not odd");
  }
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("model.dropout: must be in [0, 1)");
  if (ffn_dropout < 0.0 || ffn_dropout >= 1.0) throw ConfigError("model.ffn_dropout: must be in [0, 1)");
  if (uses_flat_ffn(block_style) && std::abs(ffn_dropout - dropout / 2.0) > 1e-12) {
    throw ConfigError("model.ffn_dropout: must be dropout/2 for flattened and lsra blocks");
  }
  if (share_embeddings && task == Task::seq2seq && vocab_src != vocab_tgt) {
    throw ConfigError("model.share_embeddings: requires vocab_src == vocab_tgt");
  }
}

BlockSpec ModelConfig::block_spec(std::size_t layer, bool decoder) const {
  BlockSpec s;
  s.style = block_style;
  s.d_model = d_model;
  s.heads = heads;
  s.d_ff = d_ff();
  s.kernel_size = kernel_schedule.empty() ? 1 : kernel_schedule.at(layer);
  s.conv_source = conv_mode;
  s.glu_on_conv_input = glu_on_conv_input;
  s.causal = decoder;
  s.cross_attention = decoder && task == Task::seq2seq;
  return s;
}

void TrainConfig::validate(const ModelConfig& model) const {
  if (task == TaskKind::char_lm && model.task != Task::lm) {
    throw ConfigError("train.task: char_lm needs a model with task 'lm'");
  }
  if (task != TaskKind::char_lm && model.task != Task::seq2seq) {
    throw ConfigError("train.task: " + std::string(to_string(task)) + " needs a seq2seq model");
  }
  const std::size_t v = vocab == 0 ? model.vocab_tgt : vocab;
  if (v < 4) throw ConfigError("train.vocab: need at least 4 tokens (3 are reserved)");
  if (v != model.vocab_tgt || (model.task == Task::seq2seq && v != model.vocab_src)) {
    throw ConfigError("train.vocab: must match the model vocabularies");
  }
  if (max_len == 0 || min_len == 0 || min_len > max_len) throw ConfigError("train.max_len: need 1 <= min_len <= max_len");
  if (batch_tokens == 0 || batch_tokens > 4096) throw ConfigError("train.batch_tokens: must be in [1, 4096]");
  if (batch_tokens < max_len + 2) throw ConfigError("train.batch_tokens: smaller than one sequence");
  if (accumulation == 0) throw ConfigError("train.accumulation: must be at least 1");
  if (steps == 0) throw ConfigError("train.steps: must be at least 1");
  if (label_smoothing < 0.0 || label_smoothing >= 1.0) throw ConfigError("train.label_smoothing: must be in [0, 1)");
  if (!(lr_peak > 0.0) || !(lr_start > 0.0) || lr_floor < 0.0 || lr_floor > lr_peak) {
    throw ConfigError("train.lr_peak: need lr_start > 0, lr_peak > 0 and 0 <= lr_floor <= lr_peak");
  }
  if (warmup_steps == 0) throw ConfigError("train.warmup_steps: must be at least 1");
  if (schedule == ScheduleKind::cosine && warmup_steps >= steps) {
    throw ConfigError("train.warmup_steps: must be smaller than steps for the cosine schedule");
  }
  if (eval_every == 0) throw ConfigError("train.eval_every: must be at least 1");
}

ordered_json to_json(const ModelConfig& c) {
  ordered_json j;
  j["task"] = to_string(c.task);
  j["vocab_src"] = c.vocab_src;
  j["vocab_tgt"] = c.vocab_tgt;
  j["d_model"] = c.d_model;
  j["n_layers_enc"] = c.n_layers_enc;
  j["n_layers_dec"] = c.n_layers_dec;
  j["heads"] = c.heads;
  j["block_style"] = to_string(c.block_style);
  j["kernel_schedule"] = c.kernel_schedule;
  j["conv_mode"] = to_string(c.conv_mode);
  j["glu_on_conv_input"] = c.glu_on_conv_input;
  j["d_ff_ratio"] = c.d_ff_ratio;
  j["dropout"] = c.dropout;
  j["ffn_dropout"] = c.ffn_dropout;
  j["share_embeddings"] = c.share_embeddings;
  return j;
}

ordered_json to_json(const TrainConfig& c) {
  ordered_json j;
  j["task"] = to_string(c.task);
  j["max_len"] = c.max_len;
  j["min_len"] = c.min_len;
  j["vocab"] = c.vocab;
  j["batch_tokens"] = c.batch_tokens;
  j["steps"] = c.steps;
  j["accumulation"] = c.accumulation;
  j["schedule"] = to_string(c.schedule);
  j["lr_start"] = c.lr_start;
  j["lr_peak"] = c.lr_peak;
  j["lr_floor"] = c.lr_floor;
  j["warmup_steps"] = c.warmup_steps;
  j["label_smoothing"] = c.label_smoothing;
  j["adam_beta1"] = c.adam_beta1;
  j["adam_beta2"] = c.adam_beta2;
  j["adam_eps"] = c.adam_eps;
  j["eval_every"] = c.eval_every;
  j["eval_sequences"] = c.eval_sequences;
  j["target_accuracy"] = c.target_accuracy;
  j["seed"] = c.seed;
  return j;
}

ordered_json to_json(const RunConfig& c) {
  ordered_json j;
  j["model"] = to_json(c.model);
  if (c.train) j["train"] = to_json(*c.train);
  return j;
}

ModelConfig model_config_from_json(const json& j) {
  FieldReader r(j, "model");
  ModelConfig c;
  std::string s;
  if (r.get("task", s)) c.task = parse_enum(s, r.field("task"), kTasks);
  if (c.task == Task::lm) c.n_layers_enc = 0;
  r.get_size("vocab_src", c.vocab_src);
  r.get_size("vocab_tgt", c.vocab_tgt);
  r.get_size("d_model", c.d_model);
  r.get_size("n_layers_enc", c.n_layers_enc);
  r.get_size("n_layers_dec", c.n_layers_dec);
  r.get_size("heads", c.heads);
  if (r.get("block_style", s)) c.block_style = parse_enum(s, r.field("block_style"), kStyles);
  c.d_ff_ratio = c.block_style == BlockStyle::base_bottleneck ? 4.0 : 1.0;
  if (const json* v = r.raw("kernel_schedule")) c.kernel_schedule = parse_kernel_schedule(*v, r.field("kernel_schedule"));
  if (r.get("conv_mode", s)) c.conv_mode = parse_enum(s, r.field("conv_mode"), kSources);
  r.get("glu_on_conv_input", c.glu_on_conv_input);
  r.get("d_ff_ratio", c.d_ff_ratio);
  r.get("dropout", c.dropout);
  if (!r.get("ffn_dropout", c.ffn_dropout)) {
    c.ffn_dropout = uses_flat_ffn(c.block_style) ? c.dropout / 2.0 : c.dropout;
  }
  r.get("share_embeddings", c.share_embeddings);
  r.finish();
  c.validate();
  return c;
}

TrainConfig train_config_from_json(const json& j) {
  FieldReader r(j, "train");
  TrainConfig c;
  std::string s;
  if (r.get("task", s)) c.task = parse_enum(s, r.field("task"), kTaskKinds);
  r.get_size("max_len", c.max_len);
  r.get_size("min_len", c.min_len);
  r.get_size("vocab", c.vocab);
  r.get_size("batch_tokens", c.batch_tokens);
  r.get_size("steps", c.steps);
  r.get_size("accumulation", c.accumulation);
  if (r.get("schedule", s)) c.schedule = parse_enum(s, r.field("schedule"), kSchedules);
  r.get("lr_start", c.lr_start);
  r.get("lr_peak", c.lr_peak);
  r.get("lr_floor", c.lr_floor);
  r.get_size("warmup_steps", c.warmup_steps);
  r.get("label_smoothing", c.label_smoothing);
  r.get("adam_beta1", c.adam_beta1);
  r.get("adam_beta2", c.adam_beta2);
  r.get("adam_eps", c.adam_eps);
  r.get_size("eval_every", c.eval_every);
  r.get_size("eval_sequences", c.eval_sequences);
  r.get("target_accuracy", c.target_accuracy);
  r.get("seed", c.seed);
  r.finish();
  return c;
}

RunConfig run_config_from_json(const json& j) {
  FieldReader r(j, "config");
  RunConfig rc;
  const json* model = r.raw("model");
  if (model == nullptr) throw ConfigError("config.model: missing");
  rc.model = model_config_from_json(*model);
  if (const json* train = r.raw("train")) {
    rc.train = train_config_from_json(*train);
    rc.train->validate(rc.model);
  }
  r.finish();
  return rc;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + path.string() + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace lite
