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

// Desk-scale training: synthetic tasks, label-smoothed loss, learning-rate
// schedules, Adam and token-weighted gradient accumulation.
//
// Batches are packed: sequences are concatenated row-wise and carried with
// their lengths, so no padding is materialized.

#include <chrono>
#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <vector>

#include "json.hpp"
#include "lite/config.hpp"
#include "lite/model.hpp"
#include "lite/rng.hpp"

namespace lite {

struct Example {
  TokenSeq src;  // symbols only; empty for language modelling
  TokenSeq tgt;  // symbols only
};

struct Batch {
  TokenBatch src;      // src + eos
  TokenBatch tgt_in;   // bos + tgt (lm: bos + stream[0..L-1))
  TokenBatch tgt_out;  // tgt + eos (lm: stream[0..L))

  std::size_t target_tokens() const;
  std::vector<int> flat_targets() const;
  std::size_t size() const { return tgt_in.size(); }
};

class TaskGenerator {
 public:
  /// The fixed structure of toy_translate and char_lm (permutation, grammar)
  /// is derived from `structure_seed`, independent of the sampling rng.
  TaskGenerator(TaskKind kind, std::size_t vocab, std::size_t min_len, std::size_t max_len,
                std::uint64_t structure_seed = 0x5eed);

  Example sample(Rng& rng) const;
  /// Target for a source under the task rule (seq2seq tasks only).
  TokenSeq target_for(std::span<const int> src) const;
  /// Inverts toy_translate.
  TokenSeq invert(std::span<const int> tgt) const;
  /// Continues an order-3 context under the char_lm grammar.
  int next_symbol(int a, int b, int c, Rng& rng) const;

  TaskKind kind() const { return kind_; }
  std::size_t symbols() const { return vocab_ - kFirstSymbolId; }

 private:
  TaskKind kind_;
  std::size_t vocab_;
  std::size_t min_len_;
  std::size_t max_len_;
  std::uint64_t structure_seed_;
  std::vector<int> perm_;
  std::vector<int> inverse_;
};

Batch make_batch(const std::vector<Example>& examples, TaskKind kind);
/// Samples examples until the next one would push the target token count
/// past `batch_tokens` (always at least one).
Batch gen_batch(const TaskGenerator& gen, Rng& rng, std::size_t batch_tokens);

/// Label-smoothed cross entropy summed over non-pad rows and divided by
/// `normalizer` (0 = number of non-pad rows). Per row:
/// (1 - eps) * -log p[target] + eps * mean_v(-log p[v]).
Tensor smoothed_loss(const Tensor& logits, std::span<const int> targets, double eps, double normalizer = 0.0);

/// Fraction of non-pad rows whose argmax equals the target.
double token_accuracy(const Tensor& logits, std::span<const int> targets);

struct LrSchedule {
  ScheduleKind kind = ScheduleKind::inverse_sqrt;
  std::size_t warmup_steps = 400;
  double lr_start = 1e-7;
  double lr_peak = 1e-3;
  double lr_floor = 1e-9;
  std::size_t total_steps = 5000;

  static LrSchedule from(const TrainConfig& c);
};

double lr_at(const LrSchedule& s, std::size_t step);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
};

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::size_t t = 0;
};

/// One Adam step with bias correction on every tensor in `params`, using
/// their stored grads (missing grads count as zero). Throws NumericError
/// before touching anything if a grad is not finite. Returns the grad norm.
double optimizer_step(const ParameterList& params, AdamState& state, double lr, const AdamConfig& cfg = {});

void zero_grads(const ParameterList& params);
double grad_norm(const ParameterList& params);

struct UpdateMetrics {
  std::size_t step = 0;
  double loss = 0.0;  // token-weighted mean over the micro-batches
  double lr = 0.0;
  double grad_norm = 0.0;
  std::size_t tokens = 0;
  double tokens_per_second = 0.0;
};

nlohmann::ordered_json to_json(const UpdateMetrics& m);

/// Loss of one batch under the model's task (teacher forcing).
Tensor batch_logits(const Model& model, const Batch& batch, const ForwardOptions& opts = {});

/// Back-propagates each micro-batch with token weights so the summed grad
/// equals the grad of the pooled batch, then takes one Adam step.
/// `rng` drives dropout (may be null when the model has no dropout).
UpdateMetrics accumulate_and_update(Model& model, const std::vector<Batch>& micro_batches, AdamState& opt,
                                    const LrSchedule& schedule, std::size_t step, double label_smoothing,
                                    const AdamConfig& adam = {}, Rng* rng = nullptr);

/// Sums token-weighted grads of the micro-batches into the parameters
/// without updating them. Returns the weighted loss.
double accumulate_grads(const Model& model, const std::vector<Batch>& micro_batches, double label_smoothing,
                        Rng* rng = nullptr);

struct EvalResult {
  double loss = 0.0;      // unsmoothed NLL per token
  double accuracy = 0.0;  // teacher-forced token accuracy
};

EvalResult evaluate(const Model& model, const Batch& batch);

struct TrainResult {
  std::size_t updates = 0;
  bool reached_target = false;
  EvalResult final_eval;
  double seconds = 0.0;
  std::vector<UpdateMetrics> history;
};

struct TrainHooks {
  std::ostream* metrics = nullptr;  // JSON lines, one per update
  std::function<void(std::size_t step, const EvalResult&)> on_eval;
};

/// Fixed evaluation set for a task, independent of the training stream.
Batch eval_batch(const TaskGenerator& gen, std::size_t sequences, std::uint64_t seed);

TrainResult train(Model& model, const TrainConfig& config, const TrainHooks& hooks = {});

}  // namespace lite
