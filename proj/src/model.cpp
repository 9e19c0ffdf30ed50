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

#include "lite/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lite/errors.hpp"

namespace lite {

Lengths lengths_of(const TokenBatch& batch) {
  Lengths out;
  out.reserve(batch.size());
  for (const TokenSeq& s : batch) {
    if (s.empty()) throw ContractError("model: empty sequence in batch");
    out.push_back(s.size());
  }
  return out;
}

Model Model::build(const ModelConfig& config, Rng& rng) {
  config.validate();
  Model m;
  m.config_ = config;
  const std::size_t d = config.d_model;
  const double stddev = 1.0 / std::sqrt(static_cast<double>(d));
  if (config.task == Task::seq2seq) {
    m.src_embed_ = Tensor::normal({config.vocab_src, d}, 0.0, stddev, rng, true);
    m.tgt_embed_ = config.share_embeddings ? m.src_embed_
                                           : Tensor::normal({config.vocab_tgt, d}, 0.0, stddev, rng, true);
  } else {
    m.tgt_embed_ = Tensor::normal({config.vocab_tgt, d}, 0.0, stddev, rng, true);
  }
  for (std::size_t i = 0; i < config.n_layers_enc; ++i) {
    m.encoder_.push_back(BlockParams::init(config.block_spec(i, false), rng));
  }
  for (std::size_t i = 0; i < config.n_layers_dec; ++i) {
    m.decoder_.push_back(BlockParams::init(config.block_spec(i, true), rng));
  }
  return m;
}

ParameterList Model::parameters() const {
  ParameterList out;
  if (config_.task == Task::seq2seq && config_.share_embeddings) {
    out.emplace_back("embed_tokens", src_embed_);
  } else {
    if (config_.task == Task::seq2seq) out.emplace_back("encoder.embed_tokens", src_embed_);
    out.emplace_back("decoder.embed_tokens", tgt_embed_);
  }
  for (std::size_t i = 0; i < encoder_.size(); ++i) {
    encoder_[i].collect("encoder.layers." + std::to_string(i), out);
  }
  for (std::size_t i = 0; i < decoder_.size(); ++i) {
    decoder_[i].collect("decoder.layers." + std::to_string(i), out);
  }
  return out;
}

bool Model::is_embedding(const std::string& name) {
  constexpr std::string_view suffix = "embed_tokens";
  return name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::size_t Model::parameter_count(bool include_embeddings) const {
  std::size_t total = 0;
  for (const auto& [name, t] : parameters()) {
    if (include_embeddings || !is_embedding(name)) total += t.numel();
  }
  return total;
}

BlockContext Model::context(const TokenBatch& batch, const ForwardOptions& opts) const {
  BlockContext ctx;
  ctx.lengths = lengths_of(batch);
  if (opts.training) {
    if (opts.rng == nullptr) throw ContractError("model: training forward needs an rng");
    ctx.sublayer_dropout = {config_.dropout, opts.rng};
    ctx.attention_dropout = {config_.dropout, opts.rng};
    ctx.ffn_dropout = {config_.ffn_dropout, opts.rng};
  }
  ctx.keep_attention = opts.trace != nullptr;
  return ctx;
}

Tensor Model::embed_batch(const TokenBatch& batch, const Tensor& table, const ForwardOptions& opts) const {
  TokenSeq flat;
  for (const TokenSeq& s : batch) flat.insert(flat.end(), s.begin(), s.end());
  const Lengths lengths = lengths_of(batch);
  Tensor x = add(embed(flat, table, std::sqrt(static_cast<double>(config_.d_model))),
                 positional_encoding(lengths, config_.d_model));
  if (opts.training) x = Dropout{config_.dropout, opts.rng}(x);
  return x;
}

Tensor Model::encode(const TokenBatch& src, const ForwardOptions& opts) const {
  if (config_.task != Task::seq2seq) throw ContractError("encode: model has no encoder");
  const BlockContext ctx = context(src, opts);
  Tensor x = embed_batch(src, src_embed_, opts);
  if (opts.trace != nullptr) opts.trace->encoder.assign(encoder_.size(), {});
  for (std::size_t i = 0; i < encoder_.size(); ++i) {
    BlockOutput out = apply_block(x, nullptr, encoder_[i], ctx);
    if (opts.trace != nullptr) opts.trace->encoder[i].self = std::move(out.self_weights);
    x = out.y;
  }
  return x;
}

Tensor Model::decode(const TokenBatch& tgt_in, const Tensor* memory, const Lengths& memory_lengths,
                     const ForwardOptions& opts) const {
  if (config_.task == Task::seq2seq && memory == nullptr) {
    throw ContractError("decode: seq2seq decoder needs the encoder output");
  }
  BlockContext ctx = context(tgt_in, opts);
  ctx.memory_lengths = memory_lengths;
  Tensor x = embed_batch(tgt_in, tgt_embed_, opts);
  if (opts.trace != nullptr) opts.trace->decoder.assign(decoder_.size(), {});
  for (std::size_t i = 0; i < decoder_.size(); ++i) {
    BlockOutput out = apply_block(x, memory, decoder_[i], ctx);
    if (opts.trace != nullptr) {
      opts.trace->decoder[i].self = std::move(out.self_weights);
      opts.trace->decoder[i].cross = std::move(out.cross_weights);
    }
    x = out.y;
  }
  return matmul_nt(x, tgt_embed_);
}

Tensor Model::forward_seq2seq(const TokenBatch& src, const TokenBatch& tgt_in,
                              const ForwardOptions& opts) const {
  if (src.size() != tgt_in.size()) {
    throw DimensionError("forward_seq2seq: " + std::to_string(src.size()) + " sources vs " +
                         std::to_string(tgt_in.size()) + " targets");
  }
  const Tensor memory = encode(src, opts);
  return decode(tgt_in, &memory, lengths_of(src), opts);
}

Tensor Model::forward_lm(const TokenBatch& inputs, const ForwardOptions& opts) const {
  if (config_.task != Task::lm) throw ContractError("forward_lm: model is not a language model");
  return decode(inputs, nullptr, {}, opts);
}

Tensor forward_seq2seq(const Model& model, std::span<const int> src_ids, std::span<const int> tgt_ids) {
  return model.forward_seq2seq({TokenSeq(src_ids.begin(), src_ids.end())},
                               {TokenSeq(tgt_ids.begin(), tgt_ids.end())});
}

// ---------------------------------------------------------------------------
// Decoding

namespace {

double length_score(double logprob, std::size_t length, double lenpen) {
  return logprob / std::pow(static_cast<double>(std::max<std::size_t>(length, 1)), lenpen);
}

std::size_t argmax_lowest(const std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

struct Candidate {
  double logprob;
  std::size_t parent;
  int token;
};

}  // namespace

DecodeResult greedy_decode(const NextLogProbs& scorer, std::size_t max_len, int eos) {
  if (max_len == 0) throw ContractError("greedy_decode: max_len must be positive");
  DecodeResult r;
  for (std::size_t step = 0; step < max_len; ++step) {
    const auto lps = scorer({r.tokens});
    if (lps.size() != 1) throw DimensionError("greedy_decode: scorer returned wrong batch size");
    const std::size_t tok = argmax_lowest(lps[0]);
    r.logprob += lps[0][tok];
    if (static_cast<int>(tok) == eos) {
      r.score = length_score(r.logprob, r.tokens.size() + 1, 1.0);
      return r;
    }
    r.tokens.push_back(static_cast<int>(tok));
  }
  r.hit_max_len = true;
  r.score = length_score(r.logprob, r.tokens.size(), 1.0);
  return r;
}

DecodeResult beam_search(const NextLogProbs& scorer, std::size_t beam, double lenpen,
                         std::size_t max_len, int eos) {
  if (beam == 0) throw ContractError("beam_search: beam must be positive");
  if (max_len == 0) throw ContractError("beam_search: max_len must be positive");
  if (!std::isfinite(lenpen)) throw ContractError("beam_search: lenpen must be finite");
  struct Hyp {
    TokenSeq tokens;
    double logprob = 0.0;
  };
  std::vector<Hyp> live{Hyp{}};
  std::vector<DecodeResult> finished;
  for (std::size_t step = 0; step < max_len && !live.empty(); ++step) {
    TokenBatch prefixes;
    prefixes.reserve(live.size());
    for (const Hyp& h : live) prefixes.push_back(h.tokens);
    const auto lps = scorer(prefixes);
    if (lps.size() != live.size()) throw DimensionError("beam_search: scorer returned wrong batch size");

    std::vector<Candidate> cands;
    for (std::size_t b = 0; b < live.size(); ++b) {
      for (std::size_t t = 0; t < lps[b].size(); ++t) {
        cands.push_back({live[b].logprob + lps[b][t], b, static_cast<int>(t)});
      }
    }
    const std::size_t keep = std::min(cands.size(), 2 * beam);
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                      [](const Candidate& a, const Candidate& b) {
                        if (a.logprob != b.logprob) return a.logprob > b.logprob;
                        if (a.token != b.token) return a.token < b.token;
                        return a.parent < b.parent;
                      });
    std::vector<Hyp> next;
    for (std::size_t rank = 0; rank < keep; ++rank) {
      const Candidate& c = cands[rank];
      if (c.token == eos) {
        if (rank < beam) {
          DecodeResult r;
          r.tokens = live[c.parent].tokens;
          r.logprob = c.logprob;
          r.score = length_score(c.logprob, r.tokens.size() + 1, lenpen);
          finished.push_back(std::move(r));
        }
      } else if (next.size() < beam) {
        Hyp h{live[c.parent].tokens, c.logprob};
        h.tokens.push_back(c.token);
        next.push_back(std::move(h));
      }
    }
    live = std::move(next);
    if (finished.size() >= beam) break;
  }
  if (!finished.empty()) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < finished.size(); ++i) {
      if (finished[i].score > finished[best].score) best = i;
    }
    return finished[best];
  }
  DecodeResult best;
  best.score = -std::numeric_limits<double>::infinity();
  for (const Hyp& h : live) {
    const double s = length_score(h.logprob, h.tokens.size(), lenpen);
    if (s > best.score) {
      best.tokens = h.tokens;
      best.logprob = h.logprob;
      best.score = s;
    }
  }
  best.hit_max_len = true;
  return best;
}

NextLogProbs seq2seq_scorer(const Model& model, std::span<const int> src_ids) {
  if (model.config().task != Task::seq2seq) throw ContractError("seq2seq_scorer: model is not seq2seq");
  TokenSeq src(src_ids.begin(), src_ids.end());
  Tensor memory;
  {
    NoGradGuard guard;
    memory = model.encode({src});
  }
  return [&model, memory, n_src = src.size()](const TokenBatch& prefixes) {
    NoGradGuard guard;
    TokenBatch tgt_in;
    tgt_in.reserve(prefixes.size());
    for (const TokenSeq& p : prefixes) {
      TokenSeq seq{kBosId};
      seq.insert(seq.end(), p.begin(), p.end());
      tgt_in.push_back(std::move(seq));
    }
    const Tensor mem = concat_rows(std::vector<Tensor>(prefixes.size(), memory));
    const Lengths mem_lengths(prefixes.size(), n_src);
    const Tensor lp = log_softmax(model.decode(tgt_in, &mem, mem_lengths));
    const std::size_t vocab = lp.dim(1);
    std::vector<std::vector<double>> out;
    out.reserve(prefixes.size());
    std::size_t row = 0;
    for (const TokenSeq& seq : tgt_in) {
      row += seq.size();
      const double* last = lp.data().data() + (row - 1) * vocab;
      out.emplace_back(last, last + vocab);
    }
    return out;
  };
}

DecodeResult beam_search(const Model& model, std::span<const int> src_ids, std::size_t beam,
                         double lenpen, std::size_t max_len) {
  return beam_search(seq2seq_scorer(model, src_ids), beam, lenpen, max_len, kEosId);
}

// ---------------------------------------------------------------------------
// Evaluation

double perplexity(const WindowLogProbs& scorer, std::span<const int> stream, std::size_t context_len) {
  if (context_len == 0) throw ContractError("perplexity: context_len must be positive");
  if (stream.size() < 2) throw ContractError("perplexity: stream needs at least two tokens");
  double nll = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i + 1 < stream.size();) {
    const std::size_t len = std::min(context_len, stream.size() - 1 - i);
    const Tensor lp = scorer(stream.subspan(i, len));
    if (lp.rank() != 2 || lp.dim(0) != len) {
      throw DimensionError("perplexity: scorer returned " + shape_str(lp.shape()) + " for window of " +
                           std::to_string(len));
    }
    const std::size_t vocab = lp.dim(1);
    for (std::size_t t = 0; t < len; ++t) {
      const int next = stream[i + t + 1];
      if (next < 0 || static_cast<std::size_t>(next) >= vocab) {
        throw IndexError("perplexity: token " + std::to_string(next) + " outside vocab " +
                         std::to_string(vocab));
      }
      nll -= lp.data()[t * vocab + static_cast<std::size_t>(next)];
      ++count;
    }
    i += len;
  }
  const double ppl = std::exp(nll / static_cast<double>(count));
  if (!std::isfinite(ppl)) throw NumericError("perplexity: non-finite result");
  return ppl;
}

double perplexity(const Model& model, std::span<const int> stream, std::size_t context_len) {
  if (model.config().task != Task::lm) throw ContractError("perplexity: model is not a language model");
  return perplexity(
      [&model](std::span<const int> window) {
        NoGradGuard guard;
        return log_softmax(model.forward_lm({TokenSeq(window.begin(), window.end())}));
      },
      stream, context_len);
}

// ---------------------------------------------------------------------------
// Attention maps

const char* to_string(AttentionKind kind) {
  switch (kind) {
    case AttentionKind::self_enc: return "self_enc";
    case AttentionKind::self_dec: return "self_dec";
    case AttentionKind::cross: return "cross";
  }
  return "?";
}

std::string token_label(int id) {
  switch (id) {
    case kPadId: return "<pad>";
    case kBosId: return "<s>";
    case kEosId: return "</s>";
    default: return "w" + std::to_string(id);
  }
}

namespace {

AttentionMap head_average(const Tensor& w, std::size_t layer, AttentionKind kind,
                          std::span<const int> q_ids, std::span<const int> kv_ids) {
  AttentionMap m;
  m.layer = layer;
  m.kind = kind;
  const std::size_t heads = w.dim(0);
  m.rows = w.dim(1);
  m.cols = w.dim(2);
  m.weights.assign(m.rows * m.cols, 0.0);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t e = 0; e < m.rows * m.cols; ++e) m.weights[e] += w.data()[h * m.rows * m.cols + e];
  }
  for (double& v : m.weights) v /= static_cast<double>(heads);
  for (int id : q_ids) m.tokens_q.push_back(token_label(id));
  for (int id : kv_ids) m.tokens_kv.push_back(token_label(id));
  return m;
}

}  // namespace

std::vector<AttentionMap> export_attention(const Model& model, std::span<const int> src_ids,
                                           std::span<const int> tgt_ids, std::size_t layer) {
  const ModelConfig& cfg = model.config();
  const std::size_t depth = std::max(cfg.task == Task::seq2seq ? cfg.n_layers_enc : 0, cfg.n_layers_dec);
  if (layer >= depth) {
    throw IndexError("export_attention: layer " + std::to_string(layer) + " out of range (" +
                     std::to_string(depth) + " layers)");
  }
  NoGradGuard guard;
  AttentionTrace trace;
  ForwardOptions opts;
  opts.trace = &trace;
  const TokenSeq tgt(tgt_ids.begin(), tgt_ids.end());
  std::vector<AttentionMap> maps;
  if (cfg.task == Task::seq2seq) {
    const TokenSeq src(src_ids.begin(), src_ids.end());
    model.forward_seq2seq({src}, {tgt}, opts);
    if (layer < trace.encoder.size()) {
      maps.push_back(head_average(trace.encoder[layer].self.at(0), layer, AttentionKind::self_enc, src, src));
    }
    if (layer < trace.decoder.size()) {
      maps.push_back(head_average(trace.decoder[layer].self.at(0), layer, AttentionKind::self_dec, tgt, tgt));
      maps.push_back(head_average(trace.decoder[layer].cross.at(0), layer, AttentionKind::cross, tgt, src));
    }
  } else {
    model.forward_lm({tgt}, opts);
    maps.push_back(head_average(trace.decoder[layer].self.at(0), layer, AttentionKind::self_dec, tgt, tgt));
  }
  return maps;
}

double diagonal_mass(const AttentionMap& map, std::size_t bandwidth) {
  if (map.rows != map.cols) {
    throw ContractError("diagonal_mass: map is " + std::to_string(map.rows) + "x" + std::to_string(map.cols) +
                        ", needs square");
  }
  if (map.rows == 0) throw ContractError("diagonal_mass: empty map");
  double total = 0.0;
  for (std::size_t i = 0; i < map.rows; ++i) {
    const std::size_t lo = i > bandwidth ? i - bandwidth : 0;
    const std::size_t hi = std::min(map.cols - 1, i + bandwidth);
    for (std::size_t j = lo; j <= hi; ++j) total += map.at(i, j);
  }
  return total / static_cast<double>(map.rows);
}

nlohmann::ordered_json to_json(const AttentionMap& map) {
  nlohmann::ordered_json j;
  j["layer"] = map.layer;
  j["kind"] = to_string(map.kind);
  j["rows"] = map.rows;
  j["cols"] = map.cols;
  j["tokens_q"] = map.tokens_q;
  j["tokens_kv"] = map.tokens_kv;
  j["weights"] = map.weights;
  if (map.rows == map.cols) {
    nlohmann::ordered_json dm;
    for (std::size_t b = 0; b <= 2; ++b) dm[std::to_string(b)] = diagonal_mass(map, b);
    j["diagonal_mass"] = dm;
  } else {
    j["diagonal_mass"] = nullptr;
  }
  return j;
}

}  // namespace lite
