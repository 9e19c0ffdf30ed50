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

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "lite/config.hpp"
#include "lite/layers.hpp"
#include "lite/lsra.hpp"
#include "lite/rng.hpp"
#include "lite/tensor.hpp"

namespace lite {

using TokenSeq = std::vector<int>;
using TokenBatch = std::vector<TokenSeq>;

/// Attention weights recorded during a forward pass, per layer and sequence.
struct LayerAttention {
  std::vector<Tensor> self;   // [heads, N, N] per sequence
  std::vector<Tensor> cross;  // [heads, N_tgt, N_src] per sequence (decoder of seq2seq)
};

struct AttentionTrace {
  std::vector<LayerAttention> encoder;
  std::vector<LayerAttention> decoder;
};

struct ForwardOptions {
  bool training = false;  // enables dropout; needs rng
  Rng* rng = nullptr;
  AttentionTrace* trace = nullptr;
};

/// Encoder-decoder or decoder-only (LM) model built from one block style.
/// Token embeddings are scaled by sqrt(d) and summed with sinusoidal
/// positions; the output projection is tied to the target embedding.
///
/// Batch inputs are packed: sequences are concatenated row-wise and attention
/// and convolution stay inside each sequence.
class Model {
 public:
  static Model build(const ModelConfig& config, Rng& rng);

  const ModelConfig& config() const { return config_; }

  /// Named parameters in a fixed order (shared tensors listed once).
  ParameterList parameters() const;
  /// Parameter count; token embedding tables only when requested.
  std::size_t parameter_count(bool include_embeddings = false) const;
  static bool is_embedding(const std::string& name);

  /// Encoder states [sum N_src, d] for the packed source batch.
  Tensor encode(const TokenBatch& src, const ForwardOptions& opts = {}) const;
  /// Decoder logits [sum N_in, vocab_tgt]. `memory` is null for LM models.
  Tensor decode(const TokenBatch& tgt_in, const Tensor* memory, const Lengths& memory_lengths,
                const ForwardOptions& opts = {}) const;

  /// Teacher-forced logits for a packed seq2seq batch.
  Tensor forward_seq2seq(const TokenBatch& src, const TokenBatch& tgt_in,
                         const ForwardOptions& opts = {}) const;
  /// Next-token logits for a packed LM batch.
  Tensor forward_lm(const TokenBatch& inputs, const ForwardOptions& opts = {}) const;

  const Tensor& source_embedding() const { return src_embed_; }
  const Tensor& target_embedding() const { return tgt_embed_; }
  const std::vector<BlockParams>& encoder_layers() const { return encoder_; }
  const std::vector<BlockParams>& decoder_layers() const { return decoder_; }

 private:
  Tensor embed_batch(const TokenBatch& batch, const Tensor& table, const ForwardOptions& opts) const;
  BlockContext context(const TokenBatch& batch, const ForwardOptions& opts) const;

  ModelConfig config_;
  Tensor src_embed_;
  Tensor tgt_embed_;
  std::vector<BlockParams> encoder_;
  std::vector<BlockParams> decoder_;
  mutable Rng scratch_rng_{0};
};

Lengths lengths_of(const TokenBatch& batch);

/// Single-sequence teacher-forced logits [N_tgt, vocab_tgt].
Tensor forward_seq2seq(const Model& model, std::span<const int> src_ids, std::span<const int> tgt_ids);

// ---------------------------------------------------------------------------
// Decoding

/// Log-probabilities of the next token for each prefix (generated tokens only,
/// without the leading bos).
using NextLogProbs = std::function<std::vector<std::vector<double>>(const TokenBatch& prefixes)>;

struct DecodeResult {
  TokenSeq tokens;        // generated tokens, eos excluded
  double logprob = 0.0;   // sum of token log-probs, eos included
  double score = 0.0;     // logprob / |Y|^lenpen, |Y| counting eos
  bool hit_max_len = false;  // no eos within max_len; best partial returned
};

DecodeResult greedy_decode(const NextLogProbs& scorer, std::size_t max_len, int eos = kEosId);

/// Beam search: each step keeps the 2*beam best expansions by summed
/// log-prob; eos expansions ranked within the top `beam` finish. Stops when
/// `beam` hypotheses have finished or max_len is reached, and returns the
/// finished hypothesis with the best length-penalized score. Ties go to the
/// lower token id.
DecodeResult beam_search(const NextLogProbs& scorer, std::size_t beam, double lenpen,
                         std::size_t max_len, int eos = kEosId);

/// Scorer that encodes `src_ids` once and runs the decoder on bos + prefix.
NextLogProbs seq2seq_scorer(const Model& model, std::span<const int> src_ids);

DecodeResult beam_search(const Model& model, std::span<const int> src_ids, std::size_t beam,
                         double lenpen, std::size_t max_len);

// ---------------------------------------------------------------------------
// Evaluation

/// Log-probabilities [len, V] predicting token t+1 from window[0..t].
using WindowLogProbs = std::function<Tensor(std::span<const int> window)>;

/// exp(mean next-token NLL) over the stream, scored in consecutive windows
/// of `context_len` predictions.
double perplexity(const WindowLogProbs& scorer, std::span<const int> stream, std::size_t context_len);
double perplexity(const Model& model, std::span<const int> stream, std::size_t context_len);

// ---------------------------------------------------------------------------
// Attention maps

enum class AttentionKind { self_enc, self_dec, cross };
const char* to_string(AttentionKind kind);

struct AttentionMap {
  std::size_t layer = 0;
  AttentionKind kind = AttentionKind::self_enc;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> weights;  // row-major, head-averaged
  std::vector<std::string> tokens_q;
  std::vector<std::string> tokens_kv;

  double at(std::size_t i, std::size_t j) const { return weights[i * cols + j]; }
};

/// Head-averaged attention maps of every attention site at `layer`.
std::vector<AttentionMap> export_attention(const Model& model, std::span<const int> src_ids,
                                           std::span<const int> tgt_ids, std::size_t layer = 0);

/// Mean over rows of the probability mass within |i - j| <= bandwidth.
double diagonal_mass(const AttentionMap& map, std::size_t bandwidth);

std::string token_label(int id);
nlohmann::ordered_json to_json(const AttentionMap& map);

}  // namespace lite
