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

#include "lite/layers.hpp"

#include <cmath>
#include <memory>
#include <numeric>

#include "lite/errors.hpp"

namespace lite {

namespace {

Lengths resolve_lengths(std::span<const std::size_t> lengths, std::size_t rows, const char* op) {
  if (lengths.empty()) return {rows};
  const std::size_t total = std::accumulate(lengths.begin(), lengths.end(), std::size_t{0});
  if (total != rows) {
    throw DimensionError(std::string(op) + ": sequence lengths cover " + std::to_string(total) +
                         " rows but the input has " + std::to_string(rows));
  }
  return {lengths.begin(), lengths.end()};
}

void check_kernel_size(std::size_t k, const char* op) {
  if (k == 0 || k % 2 == 0) {
    throw ContractError(std::string(op) + ": kernel size must be odd, got " + std::to_string(k));
  }
}

void check_groups(std::size_t channels, std::size_t groups, const char* op) {
  if (groups == 0 || channels % groups != 0) {
    throw ContractError(std::string(op) + ": " + std::to_string(groups) +
                        " kernel groups do not divide " + std::to_string(channels) + " channels");
  }
}

}  // namespace

Linear Linear::init(std::size_t in, std::size_t out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  return {Tensor::uniform({in, out}, -bound, bound, rng, true), Tensor::zeros({out}, true)};
}

Tensor Linear::operator()(const Tensor& x) const { return linear(x, weight, bias); }

void Linear::collect(const std::string& prefix, ParameterList& out) const {
  out.emplace_back(prefix + ".weight", weight);
  out.emplace_back(prefix + ".bias", bias);
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (weight.rank() != 2 || x.rank() == 0 || x.shape().back() != weight.dim(0)) {
    throw DimensionError("linear: input " + shape_str(x.shape()) + " does not match weight " +
                         shape_str(weight.shape()));
  }
  if (x.rank() == 2) return add_bias(matmul(x, weight), bias);
  Shape out_shape = x.shape();
  out_shape.back() = weight.dim(1);
  const Tensor flat = reshape(x, {x.numel() / weight.dim(0), weight.dim(0)});
  return reshape(add_bias(matmul(flat, weight), bias), std::move(out_shape));
}

Tensor embed(std::span<const int> ids, const Tensor& table, double scale_factor) {
  Tensor rows = gather_rows(table, ids);
  return scale_factor == 1.0 ? rows : scale(rows, scale_factor);
}

Tensor positional_encoding(std::size_t length, std::size_t d) {
  const std::size_t lengths[] = {length};
  return positional_encoding(lengths, d);
}

Tensor positional_encoding(std::span<const std::size_t> lengths, std::size_t d) {
  if (d % 2 != 0) throw ContractError("positional_encoding: channel count must be even, got " + std::to_string(d));
  const std::size_t rows = std::accumulate(lengths.begin(), lengths.end(), std::size_t{0});
  std::vector<double> pe(rows * d);
  std::vector<double> inv_freq(d / 2);
  for (std::size_t i = 0; i < d / 2; ++i) {
    inv_freq[i] = 1.0 / std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d));
  }
  std::size_t r = 0;
  for (std::size_t len : lengths) {
    for (std::size_t t = 0; t < len; ++t, ++r) {
      for (std::size_t i = 0; i < d / 2; ++i) {
        const double angle = static_cast<double>(t) * inv_freq[i];
        pe[r * d + 2 * i] = std::sin(angle);
        pe[r * d + 2 * i + 1] = std::cos(angle);
      }
    }
  }
  return Tensor({rows, d}, std::move(pe));
}

Tensor glu(const Tensor& x) {
  if (x.rank() == 0 || x.shape().back() % 2 != 0) {
    throw DimensionError("glu: trailing dimension must be even, got shape " + shape_str(x.shape()));
  }
  const std::size_t width = x.shape().back();
  const std::size_t half = width / 2;
  const std::size_t rows = x.numel() / width;
  Shape out_shape = x.shape();
  out_shape.back() = half;
  auto gate = std::make_shared<std::vector<double>>(rows * half);
  std::vector<double> out(rows * half);
  const auto xd = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < half; ++j) {
      const double s = 1.0 / (1.0 + std::exp(-xd[r * width + half + j]));
      (*gate)[r * half + j] = s;
      out[r * half + j] = xd[r * width + j] * s;
    }
  }
  return make_op_result(std::move(out_shape), std::move(out), {x}, "glu",
                        [rows, half, width, gate](Node& self) {
    auto g = self.parents[0]->grad_buffer();
    const auto& xd = self.parents[0]->data;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < half; ++j) {
        const double s = (*gate)[r * half + j];
        const double go = self.grad[r * half + j];
        g[r * width + j] += go * s;
        g[r * width + half + j] += go * xd[r * width + j] * s * (1.0 - s);
      }
    }
  });
}

// ---------------------------------------------------------------------------

AttentionParams AttentionParams::init(std::size_t d_model, std::size_t heads, Rng& rng) {
  if (heads == 0 || d_model % heads != 0) {
    throw ContractError("attention: " + std::to_string(heads) + " heads do not divide d_model " +
                        std::to_string(d_model));
  }
  AttentionParams p;
  p.d_model = d_model;
  p.heads = heads;
  p.q_proj = Linear::init(d_model, d_model, rng);
  p.k_proj = Linear::init(d_model, d_model, rng);
  p.v_proj = Linear::init(d_model, d_model, rng);
  p.out_proj = Linear::init(d_model, d_model, rng);
  return p;
}

void AttentionParams::collect(const std::string& prefix, ParameterList& out) const {
  q_proj.collect(prefix + ".q_proj", out);
  k_proj.collect(prefix + ".k_proj", out);
  v_proj.collect(prefix + ".v_proj", out);
  out_proj.collect(prefix + ".out_proj", out);
}

namespace {

// State the attention backward closure needs once the forward has returned.
struct AttentionTape {
  std::vector<kernels::SegmentPair> segments;
  std::vector<std::uint8_t> explicit_mask;
  kernels::MaskKind mask = kernels::MaskKind::none;
  std::size_t width = 0;
  std::size_t heads = 1;
  std::vector<double> probs;
  std::vector<double> drop_scale;

  kernels::AttentionShape shape() const {
    kernels::AttentionShape s;
    s.width = width;
    s.heads = heads;
    s.segments = segments;
    s.mask = mask;
    s.explicit_mask = explicit_mask.empty() ? nullptr : explicit_mask.data();
    return s;
  }
};

}  // namespace

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                            const AttentionOptions& options, std::vector<Tensor>* weights_out) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.dim(1) != k.dim(1) ||
      k.shape() != v.shape()) {
    throw DimensionError("attention: incompatible q/k/v shapes " + shape_str(q.shape()) + ", " +
                         shape_str(k.shape()) + ", " + shape_str(v.shape()));
  }
  const std::size_t width = q.dim(1);
  if (heads == 0 || width % heads != 0) {
    throw ContractError("attention: " + std::to_string(heads) + " heads do not divide width " +
                        std::to_string(width));
  }
  auto tape = std::make_shared<AttentionTape>();
  const Lengths ql = resolve_lengths(options.q_lengths, q.dim(0), "attention(query)");
  const Lengths kl = resolve_lengths(options.kv_lengths, k.dim(0), "attention(key)");
  tape->segments = kernels::pair_segments(ql, kl);
  tape->mask = options.mask.kind;
  tape->width = width;
  tape->heads = heads;
  for (const auto& seg : tape->segments) {
    if (seg.kv_len == 0 && seg.q_len > 0) throw ContractError("attention: query rows with no keys");
  }
  if (options.mask.kind == kernels::MaskKind::explicit_mask) {
    if (tape->segments.size() != 1) {
      throw ContractError("attention: explicit masks apply to a single sequence only");
    }
    const auto& seg = tape->segments.front();
    if (options.mask.allowed.size() != seg.q_len * seg.kv_len) {
      throw DimensionError("attention: mask has " + std::to_string(options.mask.allowed.size()) +
                           " entries, expected " + std::to_string(seg.q_len * seg.kv_len));
    }
    for (std::size_t i = 0; i < seg.q_len; ++i) {
      bool any = false;
      for (std::size_t j = 0; j < seg.kv_len; ++j) any = any || options.mask.allowed[i * seg.kv_len + j] != 0;
      if (!any) throw ContractError("attention: mask row " + std::to_string(i) + " allows no keys");
    }
    tape->explicit_mask = options.mask.allowed;
  }
  const kernels::AttentionShape shape = tape->shape();
  tape->probs.resize(shape.prob_count());
  if (options.weight_dropout.active()) {
    const double p = options.weight_dropout.p;
    tape->drop_scale.resize(tape->probs.size());
    for (double& s : tape->drop_scale) s = options.weight_dropout.rng->uniform() < p ? 0.0 : 1.0 / (1.0 - p);
  }
  std::vector<double> out(q.dim(0) * width);
  kernels::attention_forward(shape, q.data().data(), k.data().data(), v.data().data(),
                             tape->drop_scale.empty() ? nullptr : tape->drop_scale.data(),
                             tape->probs.data(), out.data());
  for (double p : tape->probs) {
    if (std::isnan(p)) throw NumericError("attention: NaN attention logits");
  }
  if (weights_out != nullptr) {
    weights_out->clear();
    std::size_t offset = 0;
    for (const auto& seg : tape->segments) {
      const std::size_t n = heads * seg.q_len * seg.kv_len;
      weights_out->emplace_back(Shape{heads, seg.q_len, seg.kv_len},
                                std::vector<double>(tape->probs.begin() + static_cast<std::ptrdiff_t>(offset),
                                                    tape->probs.begin() + static_cast<std::ptrdiff_t>(offset + n)));
      offset += n;
    }
  }
  return make_op_result({q.dim(0), width}, std::move(out), {q, k, v}, "attention", [tape](Node& self) {
    const kernels::AttentionShape s = tape->shape();
    auto grad_or_null = [&self](std::size_t i) -> double* {
      return self.parents[i]->requires_grad ? self.parents[i]->grad_buffer().data() : nullptr;
    };
    kernels::attention_backward(s, self.parents[0]->data.data(), self.parents[1]->data.data(),
                                self.parents[2]->data.data(), tape->probs.data(),
                                tape->drop_scale.empty() ? nullptr : tape->drop_scale.data(),
                                self.grad.data(), grad_or_null(0), grad_or_null(1), grad_or_null(2));
  });
}

AttentionResult multi_head_attention(const Tensor& query, const Tensor& key, const Tensor& value,
                                     const AttentionParams& params, const AttentionOptions& options) {
  if (query.rank() != 2 || query.dim(1) != params.d_model) {
    throw DimensionError("multi_head_attention: query " + shape_str(query.shape()) +
                         " does not match d_model " + std::to_string(params.d_model));
  }
  const Tensor q = params.q_proj(query);
  const Tensor k = params.k_proj(key);
  const Tensor v = params.v_proj(value);
  AttentionResult result;
  const Tensor context = scaled_dot_attention(q, k, v, params.heads, options,
                                              options.keep_weights ? &result.weights : nullptr);
  result.out = params.out_proj(context);
  return result;
}

// ---------------------------------------------------------------------------

ConvBranchParams ConvBranchParams::init(std::size_t channels, std::size_t kernel_size,
                                        std::size_t groups, KernelSource source, bool glu_input,
                                        bool causal, Rng& rng) {
  check_kernel_size(kernel_size, "conv branch");
  check_groups(channels, groups, "conv branch");
  ConvBranchParams p;
  p.channels = channels;
  p.kernel_size = kernel_size;
  p.groups = groups;
  p.glu_input = glu_input;
  p.source = source;
  p.causal = causal;
  p.in_proj = Linear::init(channels, glu_input ? 2 * channels : channels, rng);
  p.out_proj = Linear::init(channels, channels, rng);
  if (source == KernelSource::static_lightweight) {
    // Xavier bound for a [groups, 1, K] conv weight.
    const double bound = std::sqrt(6.0 / static_cast<double>(kernel_size + groups * kernel_size));
    p.kernel = Tensor::uniform({groups, kernel_size}, -bound, bound, rng, true);
  } else {
    p.predictor = Linear::init(channels, groups * kernel_size, rng);
  }
  return p;
}

void ConvBranchParams::collect(const std::string& prefix, ParameterList& out) const {
  in_proj.collect(prefix + ".in_proj", out);
  if (source == KernelSource::static_lightweight) {
    out.emplace_back(prefix + ".kernel", kernel);
  } else {
    predictor.collect(prefix + ".predictor", out);
  }
  out_proj.collect(prefix + ".out_proj", out);
}

namespace {

struct ConvTape {
  Lengths lengths;
  kernels::ConvShape shape;
};

std::shared_ptr<ConvTape> make_conv_tape(const Tensor& x, std::size_t kernel_size,
                                         std::size_t groups, bool causal,
                                         std::span<const std::size_t> lengths, const char* op) {
  if (x.rank() != 2) throw DimensionError(std::string(op) + ": expected [rows, channels], got " + shape_str(x.shape()));
  check_kernel_size(kernel_size, op);
  check_groups(x.dim(1), groups, op);
  auto tape = std::make_shared<ConvTape>();
  tape->lengths = resolve_lengths(lengths, x.dim(0), op);
  tape->shape.channels = x.dim(1);
  tape->shape.kernel_size = kernel_size;
  tape->shape.groups = groups;
  tape->shape.causal = causal;
  return tape;
}

}  // namespace

Tensor depthwise_conv1d(const Tensor& x, const Tensor& kernel_rows, bool causal,
                        std::span<const std::size_t> lengths) {
  if (kernel_rows.rank() != 2) {
    throw DimensionError("depthwise_conv1d: kernels must be [H, K], got " + shape_str(kernel_rows.shape()));
  }
  auto tape = make_conv_tape(x, kernel_rows.dim(1), kernel_rows.dim(0), causal, lengths, "depthwise_conv1d");
  tape->shape.seg_lengths = tape->lengths;
  std::vector<double> out(x.numel());
  kernels::depthwise_conv_forward(tape->shape, x.data().data(), kernel_rows.data().data(), out.data());
  return make_op_result(x.shape(), std::move(out), {x, kernel_rows}, "depthwise_conv1d", [tape](Node& self) {
    double* dx = self.parents[0]->requires_grad ? self.parents[0]->grad_buffer().data() : nullptr;
    double* dw = self.parents[1]->requires_grad ? self.parents[1]->grad_buffer().data() : nullptr;
    kernels::depthwise_conv_backward(tape->shape, self.parents[0]->data.data(),
                                     self.parents[1]->data.data(), self.grad.data(), dx, dw);
  });
}

Tensor dynamic_depthwise_conv1d(const Tensor& x, const Tensor& kernel_rows, std::size_t groups,
                                bool causal, std::span<const std::size_t> lengths) {
  if (x.rank() != 2 || groups == 0 || kernel_rows.numel() % (x.dim(0) * groups) != 0) {
    throw DimensionError("dynamic_depthwise_conv1d: kernels " + shape_str(kernel_rows.shape()) +
                         " do not hold rows x groups taps for input " + shape_str(x.shape()));
  }
  const std::size_t k = kernel_rows.numel() / (x.dim(0) * groups);
  auto tape = make_conv_tape(x, k, groups, causal, lengths, "dynamic_depthwise_conv1d");
  tape->shape.seg_lengths = tape->lengths;
  std::vector<double> out(x.numel());
  kernels::dynamic_conv_forward(tape->shape, x.data().data(), kernel_rows.data().data(), out.data());
  return make_op_result(x.shape(), std::move(out), {x, kernel_rows}, "dynamic_conv", [tape](Node& self) {
    double* dx = self.parents[0]->requires_grad ? self.parents[0]->grad_buffer().data() : nullptr;
    double* dw = self.parents[1]->requires_grad ? self.parents[1]->grad_buffer().data() : nullptr;
    kernels::dynamic_conv_backward(tape->shape, self.parents[0]->data.data(),
                                   self.parents[1]->data.data(), self.grad.data(), dx, dw);
  });
}

Tensor lightweight_conv(const Tensor& x, const ConvBranchParams& params,
                        std::span<const std::size_t> lengths) {
  return depthwise_conv1d(x, softmax(params.kernel, 1), params.causal, lengths);
}

Tensor dynamic_conv(const Tensor& x, const ConvBranchParams& params,
                    std::span<const std::size_t> lengths) {
  const std::size_t rows = x.dim(0);
  const Tensor logits = reshape(params.predictor(x), {rows * params.groups, params.kernel_size});
  return dynamic_depthwise_conv1d(x, softmax(logits, 1), params.groups, params.causal, lengths);
}

Tensor conv_branch(const Tensor& x, const ConvBranchParams& params,
                   std::span<const std::size_t> lengths) {
  Tensor h = params.in_proj(x);
  if (params.glu_input) h = glu(h);
  h = params.source == KernelSource::static_lightweight ? lightweight_conv(h, params, lengths)
                                                        : dynamic_conv(h, params, lengths);
  return params.out_proj(h);
}

// ---------------------------------------------------------------------------

FfnParams FfnParams::init(std::size_t d, std::size_t d_ff, Rng& rng) {
  return {Linear::init(d, d_ff, rng), Linear::init(d_ff, d, rng)};
}

void FfnParams::collect(const std::string& prefix, ParameterList& out) const {
  fc1.collect(prefix + ".fc1", out);
  fc2.collect(prefix + ".fc2", out);
}

Tensor ffn(const Tensor& x, const FfnParams& params, const Dropout& inner_dropout) {
  return params.fc2(inner_dropout(relu(params.fc1(x))));
}

LayerNormParams LayerNormParams::init(std::size_t d) {
  return {Tensor::full({d}, 1.0, true), Tensor::zeros({d}, true)};
}

void LayerNormParams::collect(const std::string& prefix, ParameterList& out) const {
  out.emplace_back(prefix + ".gamma", gamma);
  out.emplace_back(prefix + ".beta", beta);
}

}  // namespace lite
