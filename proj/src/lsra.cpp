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

#include "lite/lsra.hpp"

#include "lite/errors.hpp"

namespace lite {

const char* to_string(BlockStyle style) {
  switch (style) {
    case BlockStyle::base_bottleneck:
      return "base_bottleneck";
    case BlockStyle::flattened:
      return "flattened";
    case BlockStyle::lsra:
      return "lsra";
  }
  return "?";
}

BlockStyle block_style_from_string(const std::string& name) {
  if (name == "base_bottleneck") return BlockStyle::base_bottleneck;
  if (name == "flattened") return BlockStyle::flattened;
  if (name == "lsra") return BlockStyle::lsra;
  throw ConfigError("block_style: unknown style '" + name + "'");
}

BlockParams BlockParams::init(const BlockSpec& spec, Rng& rng) {
  if (spec.style == BlockStyle::lsra && spec.d_model % 2 != 0) {
    throw ContractError("lsra block: d_model must be even, got " + std::to_string(spec.d_model));
  }
  BlockParams p;
  p.spec = spec;
  const std::size_t d = spec.d_model;
  if (spec.style == BlockStyle::lsra) {
    const std::size_t half = d / 2;
    p.self_attn = AttentionParams::init(half, spec.heads, rng);
    p.conv = ConvBranchParams::init(half, spec.kernel_size, spec.heads, spec.conv_source,
                                    spec.glu_on_conv_input, spec.causal, rng);
  } else {
    p.self_attn = AttentionParams::init(d, spec.heads, rng);
  }
  p.self_norm = LayerNormParams::init(d);
  if (spec.cross_attention) {
    p.cross_attn = AttentionParams::init(d, spec.heads, rng);
    p.cross_norm = LayerNormParams::init(d);
  }
  p.ffn = FfnParams::init(d, spec.d_ff, rng);
  p.ffn_norm = LayerNormParams::init(d);
  return p;
}

void BlockParams::collect(const std::string& prefix, ParameterList& out) const {
  self_attn.collect(prefix + ".self_attn", out);
  if (conv) conv->collect(prefix + ".conv", out);
  self_norm.collect(prefix + ".self_norm", out);
  if (cross_attn) {
    cross_attn->collect(prefix + ".cross_attn", out);
    cross_norm->collect(prefix + ".cross_norm", out);
  }
  ffn.collect(prefix + ".ffn", out);
  ffn_norm.collect(prefix + ".ffn_norm", out);
}

namespace {

AttentionOptions self_options(const BlockParams& p, const BlockContext& ctx) {
  AttentionOptions o;
  if (p.spec.causal) o.mask = AttentionMask::causal();
  o.q_lengths = ctx.lengths;
  o.kv_lengths = ctx.lengths;
  o.weight_dropout = ctx.attention_dropout;
  o.keep_weights = ctx.keep_attention;
  return o;
}

Tensor residual_norm(const Tensor& x, const Tensor& sub, const LayerNormParams& norm,
                     const BlockContext& ctx) {
  return norm(add(x, ctx.sublayer_dropout(sub)));
}

// LSRA self-sublayer; fills left/right branch outputs and attention weights.
Tensor lsra_sublayer(const Tensor& x, const BlockParams& p, const BlockContext& ctx, BlockOutput& out) {
  if (x.rank() != 2 || x.dim(1) != p.spec.d_model) {
    throw DimensionError("lsra block: input " + shape_str(x.shape()) + " does not match d_model " +
                         std::to_string(p.spec.d_model));
  }
  const std::size_t half = p.spec.d_model / 2;
  const Tensor x_left = slice_cols(x, 0, half);
  const Tensor x_right = slice_cols(x, half, half);
  AttentionResult attn = multi_head_attention(x_left, x_left, x_left, p.self_attn, self_options(p, ctx));
  out.self_weights = std::move(attn.weights);
  out.left_branch = attn.out;
  out.right_branch = conv_branch(x_right, *p.conv, ctx.lengths);
  return residual_norm(x, concat_cols(out.left_branch, out.right_branch), p.self_norm, ctx);
}

Tensor attention_sublayer(const Tensor& x, const BlockParams& p, const BlockContext& ctx, BlockOutput& out) {
  AttentionResult attn = multi_head_attention(x, x, x, p.self_attn, self_options(p, ctx));
  out.self_weights = std::move(attn.weights);
  return residual_norm(x, attn.out, p.self_norm, ctx);
}

Tensor ffn_sublayer(const Tensor& x, const BlockParams& p, const BlockContext& ctx) {
  return residual_norm(x, ffn(x, p.ffn, ctx.ffn_dropout), p.ffn_norm, ctx);
}

}  // namespace

BlockOutput lsra_block(const Tensor& x, const BlockParams& p, const BlockContext& ctx) {
  if (p.spec.style != BlockStyle::lsra) throw ContractError("lsra_block: parameters are not an lsra block");
  if (p.spec.d_model % 2 != 0) throw ContractError("lsra_block: d_model must be even");
  BlockOutput out;
  out.y = ffn_sublayer(lsra_sublayer(x, p, ctx, out), p, ctx);
  return out;
}

BlockOutput flattened_block(const Tensor& x, const BlockParams& p, const BlockContext& ctx) {
  if (p.spec.style == BlockStyle::lsra) throw ContractError("flattened_block: parameters are an lsra block");
  BlockOutput out;
  out.y = ffn_sublayer(attention_sublayer(x, p, ctx, out), p, ctx);
  return out;
}

BlockOutput decoder_layer(const Tensor& x, const Tensor& memory, const BlockParams& p,
                          const BlockContext& ctx) {
  if (!p.cross_attn) throw ContractError("decoder_layer: block has no cross-attention");
  if (!memory.defined()) throw ContractError("decoder_layer: encoder output is required");
  BlockOutput out;
  Tensor h = p.spec.style == BlockStyle::lsra ? lsra_sublayer(x, p, ctx, out)
                                              : attention_sublayer(x, p, ctx, out);
  AttentionOptions cross;
  cross.q_lengths = ctx.lengths;
  cross.kv_lengths = ctx.memory_lengths;
  cross.weight_dropout = ctx.attention_dropout;
  cross.keep_weights = ctx.keep_attention;
  AttentionResult attn = multi_head_attention(h, memory, memory, *p.cross_attn, cross);
  out.cross_weights = std::move(attn.weights);
  h = residual_norm(h, attn.out, *p.cross_norm, ctx);
  out.y = ffn_sublayer(h, p, ctx);
  return out;
}

BlockOutput apply_block(const Tensor& x, const Tensor* memory, const BlockParams& p,
                        const BlockContext& ctx) {
  if (p.spec.cross_attention) {
    if (memory == nullptr) throw ContractError("decoder_layer: encoder output is required");
    return decoder_layer(x, *memory, p, ctx);
  }
  return p.spec.style == BlockStyle::lsra ? lsra_block(x, p, ctx) : flattened_block(x, p, ctx);
}

}  // namespace lite
