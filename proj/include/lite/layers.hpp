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

// Neural building blocks: linear maps, embeddings with sinusoidal positions,
// GLU, multi-head attention, depthwise convolution with lightweight
// (softmax-normalized, group-shared) and dynamic (input-predicted) kernels,
// and the position-wise FFN.
//
// Activations are rank-2 [rows, channels]. Several independent sequences can
// be packed row-wise; `lengths` lists the rows of each one, and attention and
// convolution never cross a sequence boundary. An empty `lengths` means one
// sequence spanning every row.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lite/kernels.hpp"
#include "lite/rng.hpp"
#include "lite/tensor.hpp"

namespace lite {

using ParameterList = std::vector<std::pair<std::string, Tensor>>;
using Lengths = std::vector<std::size_t>;

/// Inverted dropout that is a no-op when p == 0 or no generator is attached.
struct Dropout {
  double p = 0.0;
  Rng* rng = nullptr;

  bool active() const { return p > 0.0 && rng != nullptr; }
  Tensor operator()(const Tensor& x) const { return active() ? dropout(x, p, *rng) : x; }
};

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]

  /// Xavier-uniform weight, zero bias.
  static Linear init(std::size_t in, std::size_t out, Rng& rng);
  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }
  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, ParameterList& out) const;
};

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

/// Row lookup times `scale`. Positional encoding is added by the caller.
Tensor embed(std::span<const int> ids, const Tensor& table, double scale);

/// PE[t, 2i] = sin(t / 10000^(2i/d)), PE[t, 2i+1] = cos(t / 10000^(2i/d)).
Tensor positional_encoding(std::size_t length, std::size_t d);
/// Packed variant: positions restart at 0 for every sequence.
Tensor positional_encoding(std::span<const std::size_t> lengths, std::size_t d);

/// a * sigmoid(b) where [a | b] split the last axis in half.
Tensor glu(const Tensor& x);

// ---------------------------------------------------------------------------
// Attention

struct AttentionParams {
  std::size_t d_model = 0;
  std::size_t heads = 1;
  Linear q_proj, k_proj, v_proj, out_proj;

  static AttentionParams init(std::size_t d_model, std::size_t heads, Rng& rng);
  std::size_t head_dim() const { return d_model / heads; }
  void collect(const std::string& prefix, ParameterList& out) const;
};

struct AttentionMask {
  kernels::MaskKind kind = kernels::MaskKind::none;
  std::vector<std::uint8_t> allowed;  // explicit masks: row-major N_q x N_kv, 1 = attend

  static AttentionMask causal() { return {kernels::MaskKind::causal, {}}; }
  static AttentionMask from_matrix(std::vector<std::uint8_t> allowed) {
    return {kernels::MaskKind::explicit_mask, std::move(allowed)};
  }
};

struct AttentionOptions {
  AttentionMask mask;
  Lengths q_lengths;   // packing of the query rows
  Lengths kv_lengths;  // packing of the key/value rows
  Dropout weight_dropout;
  bool keep_weights = false;
};

struct AttentionResult {
  Tensor out;                   // [N_q, d]
  std::vector<Tensor> weights;  // per sequence [heads, N_q, N_kv]; empty unless requested
};

/// Scaled dot-product attention on already projected Q/K/V. Returns the
/// concatenated per-head context [N_q, width].
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                            const AttentionOptions& options, std::vector<Tensor>* weights_out);

AttentionResult multi_head_attention(const Tensor& query, const Tensor& key, const Tensor& value,
                                     const AttentionParams& params,
                                     const AttentionOptions& options = {});

// ---------------------------------------------------------------------------
// Convolution

enum class KernelSource { static_lightweight, dynamic };

struct ConvBranchParams {
  std::size_t channels = 0;
  std::size_t kernel_size = 1;
  std::size_t groups = 1;
  bool glu_input = false;
  KernelSource source = KernelSource::static_lightweight;
  bool causal = false;
  Linear in_proj;    // channels -> channels (2 * channels with GLU)
  Linear out_proj;   // channels -> channels
  Tensor kernel;     // [groups, K] raw logits, static source only
  Linear predictor;  // channels -> groups * K, dynamic source only

  static ConvBranchParams init(std::size_t channels, std::size_t kernel_size, std::size_t groups,
                               KernelSource source, bool glu_input, bool causal, Rng& rng);
  void collect(const std::string& prefix, ParameterList& out) const;
};

/// Per-channel convolution with zero padding: (K-1)/2 on both sides, or K-1
/// on the left when causal. `kernels` is [H, K]; channel ch uses row
/// floor(ch * H / c).
Tensor depthwise_conv1d(const Tensor& x, const Tensor& kernels, bool causal,
                        std::span<const std::size_t> lengths = {});

/// Depthwise conv with position-specific kernels [rows, H, K].
Tensor dynamic_depthwise_conv1d(const Tensor& x, const Tensor& kernels, std::size_t groups,
                                bool causal, std::span<const std::size_t> lengths = {});

/// Kernel rows softmax-normalized over taps, then group-shared depthwise conv.
Tensor lightweight_conv(const Tensor& x, const ConvBranchParams& params,
                        std::span<const std::size_t> lengths = {});

/// Kernels predicted per position from x, softmax-normalized over taps.
Tensor dynamic_conv(const Tensor& x, const ConvBranchParams& params,
                    std::span<const std::size_t> lengths = {});

/// out_proj(conv(in_proj(x) or glu(in_proj(x)))).
Tensor conv_branch(const Tensor& x, const ConvBranchParams& params,
                   std::span<const std::size_t> lengths = {});

// ---------------------------------------------------------------------------

struct FfnParams {
  Linear fc1;  // d -> d_ff
  Linear fc2;  // d_ff -> d

  static FfnParams init(std::size_t d, std::size_t d_ff, Rng& rng);
  void collect(const std::string& prefix, ParameterList& out) const;
};

/// fc2(dropout(relu(fc1(x)))).
Tensor ffn(const Tensor& x, const FfnParams& params, const Dropout& inner_dropout = {});

struct LayerNormParams {
  Tensor gamma;
  Tensor beta;

  static LayerNormParams init(std::size_t d);
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma, beta); }
  void collect(const std::string& prefix, ParameterList& out) const;
};

}  // namespace lite
