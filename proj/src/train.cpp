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

#include "lite/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lite/errors.hpp"

namespace lite {

namespace {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

// ---------------------------------------------------------------------------
// Tasks

TaskGenerator::TaskGenerator(TaskKind kind, std::size_t vocab, std::size_t min_len, std::size_t max_len,
                             std::uint64_t structure_seed)
    : kind_(kind), vocab_(vocab), min_len_(min_len), max_len_(max_len), structure_seed_(structure_seed) {
  if (vocab < kFirstSymbolId + 1) {
    throw ConfigError("task: vocab " + std::to_string(vocab) + " leaves no symbols after the 3 reserved ids");
  }
  if (min_len == 0 || min_len > max_len) throw ConfigError("task: need 1 <= min_len <= max_len");
  if (kind == TaskKind::toy_translate) {
    perm_.resize(symbols());
    std::iota(perm_.begin(), perm_.end(), kFirstSymbolId);
    Rng rng(structure_seed);
    for (std::size_t i = perm_.size(); i > 1; --i) std::swap(perm_[i - 1], perm_[rng.below(i)]);
    inverse_.assign(vocab, 0);
    for (std::size_t i = 0; i < perm_.size(); ++i) inverse_[static_cast<std::size_t>(perm_[i])] = static_cast<int>(i) + kFirstSymbolId;
  }
}

int TaskGenerator::next_symbol(int a, int b, int c, Rng& rng) const {
  const std::uint64_t s = symbols();
  const auto key = static_cast<std::uint64_t>(a) * s * s + static_cast<std::uint64_t>(b) * s + static_cast<std::uint64_t>(c);
  const std::uint64_t h = mix64(structure_seed_ ^ mix64(key));
  const std::uint64_t pick = rng.uniform() < 0.75 ? (h & 0xffffffffULL) : (h >> 32);
  return static_cast<int>(pick % s) + kFirstSymbolId;
}

TokenSeq TaskGenerator::target_for(std::span<const int> src) const {
  TokenSeq out(src.begin(), src.end());
  switch (kind_) {
    case TaskKind::copy:
      break;
    case TaskKind::reverse:
      std::reverse(out.begin(), out.end());
      break;
    case TaskKind::toy_translate:
      for (int& t : out) t = perm_.at(static_cast<std::size_t>(t - kFirstSymbolId));
      for (std::size_t i = 0; i + 1 < out.size(); i += 2) std::swap(out[i], out[i + 1]);
      break;
    case TaskKind::char_lm:
      throw ContractError("target_for: char_lm has no source/target rule");
  }
  return out;
}

TokenSeq TaskGenerator::invert(std::span<const int> tgt) const {
  if (kind_ != TaskKind::toy_translate) throw ContractError("invert: only defined for toy_translate");
  TokenSeq out(tgt.begin(), tgt.end());
  for (std::size_t i = 0; i + 1 < out.size(); i += 2) std::swap(out[i], out[i + 1]);
  for (int& t : out) t = inverse_.at(static_cast<std::size_t>(t));
  return out;
}

Example TaskGenerator::sample(Rng& rng) const {
  const std::size_t len = min_len_ + rng.below(max_len_ - min_len_ + 1);
  auto symbol = [&] { return static_cast<int>(rng.below(symbols())) + kFirstSymbolId; };
  Example ex;
  if (kind_ == TaskKind::char_lm) {
    for (std::size_t i = 0; i < len; ++i) {
      const std::size_t n = ex.tgt.size();
      ex.tgt.push_back(n < 3 ? symbol()
                             : next_symbol(ex.tgt[n - 3] - kFirstSymbolId, ex.tgt[n - 2] - kFirstSymbolId,
                                           ex.tgt[n - 1] - kFirstSymbolId, rng));
    }
    return ex;
  }
  for (std::size_t i = 0; i < len; ++i) ex.src.push_back(symbol());
  ex.tgt = target_for(ex.src);
  return ex;
}

std::size_t Batch::target_tokens() const {
  std::size_t n = 0;
  for (const TokenSeq& s : tgt_out) n += s.size();
  return n;
}

std::vector<int> Batch::flat_targets() const {
  std::vector<int> out;
  for (const TokenSeq& s : tgt_out) out.insert(out.end(), s.begin(), s.end());
  return out;
}

Batch make_batch(const std::vector<Example>& examples, TaskKind kind) {
  Batch b;
  for (const Example& ex : examples) {
    if (kind == TaskKind::char_lm) {
      TokenSeq in{kBosId};
      in.insert(in.end(), ex.tgt.begin(), ex.tgt.end() - 1);
      b.tgt_in.push_back(std::move(in));
      b.tgt_out.push_back(ex.tgt);
      continue;
    }
    TokenSeq src = ex.src;
    src.push_back(kEosId);
    TokenSeq in{kBosId};
    in.insert(in.end(), ex.tgt.begin(), ex.tgt.end());
    TokenSeq out = ex.tgt;
    out.push_back(kEosId);
    b.src.push_back(std::move(src));
    b.tgt_in.push_back(std::move(in));
    b.tgt_out.push_back(std::move(out));
  }
  return b;
}

Batch gen_batch(const TaskGenerator& gen, Rng& rng, std::size_t batch_tokens) {
  std::vector<Example> examples;
  std::size_t tokens = 0;
  while (true) {
    Example ex = gen.sample(rng);
    const std::size_t n = ex.tgt.size() + (gen.kind() == TaskKind::char_lm ? 0 : 1);
    if (!examples.empty() && tokens + n > batch_tokens) break;
    tokens += n;
    examples.push_back(std::move(ex));
  }
  return make_batch(examples, gen.kind());
}

Batch eval_batch(const TaskGenerator& gen, std::size_t sequences, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Example> examples;
  for (std::size_t i = 0; i < sequences; ++i) examples.push_back(gen.sample(rng));
  return make_batch(examples, gen.kind());
}

// ---------------------------------------------------------------------------
// Loss

Tensor smoothed_loss(const Tensor& logits, std::span<const int> targets, double eps, double normalizer) {
  if (logits.rank() != 2 || logits.dim(0) != targets.size()) {
    throw DimensionError("smoothed_loss: logits " + shape_str(logits.shape()) + " vs " +
                         std::to_string(targets.size()) + " targets");
  }
  if (eps < 0.0 || eps >= 1.0) throw ContractError("smoothed_loss: eps must be in [0, 1)");
  const std::size_t rows = logits.dim(0);
  const std::size_t vocab = logits.dim(1);
  std::size_t counted = 0;
  for (int t : targets) {
    if (t < 0 || static_cast<std::size_t>(t) >= vocab) {
      throw IndexError("smoothed_loss: target " + std::to_string(t) + " outside vocab " + std::to_string(vocab));
    }
    if (t != kPadId) ++counted;
  }
  if (counted == 0) throw ContractError("smoothed_loss: every target is padding");
  const double norm = normalizer > 0.0 ? normalizer : static_cast<double>(counted);

  const auto x = logits.data();
  auto probs = std::make_shared<std::vector<double>>(rows * vocab);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] == kPadId) continue;
    const double* row = x.data() + r * vocab;
    const double mx = *std::max_element(row, row + vocab);
    double z = 0.0;
    for (std::size_t v = 0; v < vocab; ++v) z += std::exp(row[v] - mx);
    const double lse = mx + std::log(z);
    double sum_nll = 0.0;
    for (std::size_t v = 0; v < vocab; ++v) {
      sum_nll += lse - row[v];
      (*probs)[r * vocab + v] = std::exp(row[v] - lse);
    }
    const double nll = lse - row[static_cast<std::size_t>(targets[r])];
    total += (1.0 - eps) * nll + eps * sum_nll / static_cast<double>(vocab);
  }
  const double value = total / norm;
  if (!std::isfinite(value)) throw NumericError("smoothed_loss: non-finite loss");
  std::vector<int> tg(targets.begin(), targets.end());
  return make_op_result({}, {value}, {logits}, "smoothed_loss",
                        [probs, tg = std::move(tg), rows, vocab, eps, norm](Node& self) {
    auto g = self.parents[0]->grad_buffer();
    const double go = self.grad[0] / norm;
    const double uniform = eps / static_cast<double>(vocab);
    for (std::size_t r = 0; r < rows; ++r) {
      if (tg[r] == kPadId) continue;
      for (std::size_t v = 0; v < vocab; ++v) {
        double d = (*probs)[r * vocab + v] - uniform;
        if (static_cast<int>(v) == tg[r]) d -= 1.0 - eps;
        g[r * vocab + v] += go * d;
      }
    }
  });
}

double token_accuracy(const Tensor& logits, std::span<const int> targets) {
  if (logits.rank() != 2 || logits.dim(0) != targets.size()) throw DimensionError("token_accuracy: shape mismatch");
  const std::size_t vocab = logits.dim(1);
  std::size_t hits = 0;
  std::size_t counted = 0;
  for (std::size_t r = 0; r < targets.size(); ++r) {
    if (targets[r] == kPadId) continue;
    const double* row = logits.data().data() + r * vocab;
    const auto best = static_cast<int>(std::max_element(row, row + vocab) - row);
    hits += best == targets[r] ? 1 : 0;
    ++counted;
  }
  if (counted == 0) throw ContractError("token_accuracy: every target is padding");
  return static_cast<double>(hits) / static_cast<double>(counted);
}

// ---------------------------------------------------------------------------
// Schedules and optimizer

LrSchedule LrSchedule::from(const TrainConfig& c) {
  return {c.schedule, c.warmup_steps, c.lr_start, c.lr_peak, c.lr_floor, c.steps};
}

double lr_at(const LrSchedule& s, std::size_t step) {
  if (step == 0) throw ContractError("lr_at: steps count from 1");
  if (s.warmup_steps == 0) throw ContractError("lr_at: warmup_steps must be at least 1");
  const double t = static_cast<double>(step);
  const double w = static_cast<double>(s.warmup_steps);
  if (s.kind == ScheduleKind::inverse_sqrt) {
    if (step <= s.warmup_steps) return s.lr_peak * t / w;
    return s.lr_peak * std::sqrt(w / t);
  }
  if (step <= s.warmup_steps) {
    if (s.warmup_steps == 1) return s.lr_peak;
    return s.lr_start + (s.lr_peak - s.lr_start) * (t - 1.0) / (w - 1.0);
  }
  if (step >= s.total_steps) return s.lr_floor;
  const double progress = (t - w) / (static_cast<double>(s.total_steps) - w);
  return s.lr_floor + 0.5 * (s.lr_peak - s.lr_floor) * (1.0 + std::cos(M_PI * progress));
}

void zero_grads(const ParameterList& params) {
  for (const auto& [name, t] : params) {
    Tensor p = t;
    p.zero_grad();
  }
}

double grad_norm(const ParameterList& params) {
  double s = 0.0;
  for (const auto& [name, t] : params) {
    for (double g : t.grad()) s += g * g;
  }
  return std::sqrt(s);
}

double optimizer_step(const ParameterList& params, AdamState& state, double lr, const AdamConfig& cfg) {
  for (const auto& [name, t] : params) {
    for (double g : t.grad()) {
      if (!std::isfinite(g)) throw NumericError("optimizer_step: non-finite gradient in " + name);
    }
  }
  if (state.m.empty()) {
    for (const auto& [name, t] : params) {
      state.m.emplace_back(t.numel(), 0.0);
      state.v.emplace_back(t.numel(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw DimensionError("optimizer_step: state does not match parameters");
  const double norm = grad_norm(params);
  ++state.t;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor p = params[i].second;
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != p.numel()) throw DimensionError("optimizer_step: state shape mismatch for " + params[i].first);
    const auto g = p.grad();
    auto w = p.mutable_data();
    for (std::size_t j = 0; j < m.size(); ++j) {
      const double gj = g.empty() ? 0.0 : g[j];
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
      w[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg.eps);
    }
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Updates

Tensor batch_logits(const Model& model, const Batch& batch, const ForwardOptions& opts) {
  if (model.config().task == Task::lm) return model.forward_lm(batch.tgt_in, opts);
  return model.forward_seq2seq(batch.src, batch.tgt_in, opts);
}

double accumulate_grads(const Model& model, const std::vector<Batch>& micro_batches, double label_smoothing,
                        Rng* rng) {
  if (micro_batches.empty()) throw ContractError("accumulate_and_update: no micro-batches");
  double total_tokens = 0.0;
  for (const Batch& b : micro_batches) total_tokens += static_cast<double>(b.target_tokens());
  ForwardOptions opts;
  opts.training = rng != nullptr;
  opts.rng = rng;
  double loss = 0.0;
  for (const Batch& b : micro_batches) {
    const Tensor logits = batch_logits(model, b, opts);
    const Tensor l = smoothed_loss(logits, b.flat_targets(), label_smoothing, total_tokens);
    backward(l);
    loss += l.item();
  }
  return loss;
}

UpdateMetrics accumulate_and_update(Model& model, const std::vector<Batch>& micro_batches, AdamState& opt,
                                    const LrSchedule& schedule, std::size_t step, double label_smoothing,
                                    const AdamConfig& adam, Rng* rng) {
  const auto start = std::chrono::steady_clock::now();
  const ParameterList params = model.parameters();
  zero_grads(params);
  UpdateMetrics m;
  m.step = step;
  m.lr = lr_at(schedule, step);
  m.loss = accumulate_grads(model, micro_batches, label_smoothing, rng);
  for (const Batch& b : micro_batches) m.tokens += b.target_tokens();
  m.grad_norm = optimizer_step(params, opt, m.lr, adam);
  zero_grads(params);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  m.tokens_per_second = secs > 0.0 ? static_cast<double>(m.tokens) / secs : 0.0;
  return m;
}

nlohmann::ordered_json to_json(const UpdateMetrics& m) {
  return {{"step", m.step},
          {"loss", m.loss},
          {"lr", m.lr},
          {"grad_norm", m.grad_norm},
          {"tokens", m.tokens},
          {"tokens_per_s", m.tokens_per_second}};
}

EvalResult evaluate(const Model& model, const Batch& batch) {
  NoGradGuard guard;
  const Tensor logits = batch_logits(model, batch);
  const std::vector<int> targets = batch.flat_targets();
  return {smoothed_loss(logits, targets, 0.0).item(), token_accuracy(logits, targets)};
}

TrainResult train(Model& model, const TrainConfig& config, const TrainHooks& hooks) {
  config.validate(model.config());
  const auto start = std::chrono::steady_clock::now();
  const std::size_t vocab = config.vocab == 0 ? model.config().vocab_tgt : config.vocab;
  const TaskGenerator gen(config.task, vocab, config.min_len, config.max_len);
  Rng root(config.seed);
  Rng data_rng = root.fork(1);
  Rng dropout_rng = root.fork(2);
  const bool use_dropout = model.config().dropout > 0.0 || model.config().ffn_dropout > 0.0;
  const Batch eval = eval_batch(gen, config.eval_sequences, config.seed ^ 0xe7a15e7ULL);
  const LrSchedule schedule = LrSchedule::from(config);
  const AdamConfig adam{config.adam_beta1, config.adam_beta2, config.adam_eps};
  AdamState state;
  TrainResult result;
  for (std::size_t step = 1; step <= config.steps; ++step) {
    std::vector<Batch> micro;
    for (std::size_t i = 0; i < config.accumulation; ++i) micro.push_back(gen_batch(gen, data_rng, config.batch_tokens));
    UpdateMetrics m = accumulate_and_update(model, micro, state, schedule, step, config.label_smoothing, adam,
                                            use_dropout ? &dropout_rng : nullptr);
    if (hooks.metrics != nullptr) *hooks.metrics << to_json(m).dump() << '\n';
    result.history.push_back(m);
    result.updates = step;
    if (step % config.eval_every == 0 || step == config.steps) {
      result.final_eval = evaluate(model, eval);
      if (hooks.on_eval) hooks.on_eval(step, result.final_eval);
      if (result.final_eval.accuracy >= config.target_accuracy) {
        result.reached_target = true;
        break;
      }
    }
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace lite
