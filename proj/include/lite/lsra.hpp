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

// Transformer blocks in three layouts:
//
//   base_bottleneck  full-width attention, FFN expanded (d_ff = 4d typically)
//   flattened        full-width attention, FFN at d_ff = d
//   lsra             channel-split block: the left half of the channels goes
//                    through self-attention (global context), the right half
//                    through a lightweight/dynamic conv branch (local
//                    context); the halves are concatenated and mixed by the
//                    FFN that follows.
//
// All sublayers are post-norm: x = layer_norm(x + dropout(sublayer(x))).

#include <optional>
#include <string>
#include <vector>

#include "lite/layers.hpp"

namespace lite {

enum class BlockStyle { base_bottleneck, flattened, lsra };

const char* to_string(BlockStyle style);
BlockStyle block_style_from_string(const std::string& name);

/// Shape of one block, enough to allocate its parameters.
struct BlockSpec {
  BlockStyle style = BlockStyle::lsra;
  std::size_t d_model = 0;
  std::size_t heads = 1;
  std::size_t d_ff = 0;
  std::size_t kernel_size = 3;  // lsra only
  KernelSource conv_source = KernelSource::static_lightweight;
  bool glu_on_conv_input = false;
  bool causal = false;          // decoder/LM self-sublayer
  bool cross_attention = false; // decoder of an encoder-decoder model
};

struct BlockParams {
  BlockSpec spec;
  AttentionParams self_attn;              // width d, or d/2 for lsra
  std::optional<ConvBranchParams> conv;   // lsra only, width d/2
  LayerNormParams self_norm;
  std::optional<AttentionParams> cross_attn;
  std::optional<LayerNormParams> cross_norm;
  FfnParams ffn;
  LayerNormParams ffn_norm;

  static BlockParams init(const BlockSpec& spec, Rng& rng);
  void collect(const std::string& prefix, ParameterList& out) const;
};

/// Per-call execution settings shared by the blocks of a stack.
struct BlockContext {
  Lengths lengths;         // packing of x
  Lengths memory_lengths;  // packing of the encoder output, cross-attention only
  Dropout sublayer_dropout;
  Dropout attention_dropout;
  Dropout ffn_dropout;
  bool keep_attention = false;
};

struct BlockOutput {
  Tensor y;
  std::vector<Tensor> self_weights;   // per sequence [heads, N, N] when kept
  std::vector<Tensor> cross_weights;  // per sequence [heads, N_tgt, N_src] when kept
  // Left-branch output before concatenation (lsra), for isolation checks.
  Tensor left_branch;
  Tensor right_branch;
};

/// LSRA block: split, attention || conv, concat, residual + norm, FFN + norm.
BlockOutput lsra_block(const Tensor& x, const BlockParams& p, const BlockContext& ctx);

/// Full-width attention sublayer then FFN sublayer (flattened or base layout).
BlockOutput flattened_block(const Tensor& x, const BlockParams& p, const BlockContext& ctx);

/// Causal self-sublayer (lsra or full attention per style), cross-attention
/// over `memory`, then the FFN sublayer.
BlockOutput decoder_layer(const Tensor& x, const Tensor& memory, const BlockParams& p,
                          const BlockContext& ctx);

/// Dispatches on p.spec (self-only blocks ignore `memory`).
BlockOutput apply_block(const Tensor& x, const Tensor* memory, const BlockParams& p,
                        const BlockContext& ctx);

}  // namespace lite
