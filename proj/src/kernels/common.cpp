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

#include <numeric>

#include "lite/errors.hpp"
#include "lite/kernels.hpp"

namespace lite::kernels {

namespace {
thread_local Mode t_mode = Mode::parallel;
thread_local std::uint64_t* t_counter = nullptr;

bool use_reference() { return t_counter != nullptr || t_mode == Mode::reference; }
}  // namespace

Mode mode() { return t_mode; }

ModeScope::ModeScope(Mode m) : previous_(t_mode) { t_mode = m; }
ModeScope::~ModeScope() { t_mode = previous_; }

MacCounter::MacCounter() : previous_(t_counter) { t_counter = &count_; }
MacCounter::~MacCounter() { t_counter = previous_; }

std::uint64_t* active_counter() { return t_counter; }

std::vector<SegmentPair> pair_segments(std::span<const std::size_t> q_lengths,
                                       std::span<const std::size_t> kv_lengths) {
  if (q_lengths.size() != kv_lengths.size()) {
    throw DimensionError("pair_segments: " + std::to_string(q_lengths.size()) +
                         " query segments vs " + std::to_string(kv_lengths.size()) +
                         " key segments");
  }
  std::vector<SegmentPair> out;
  out.reserve(q_lengths.size());
  std::size_t q_off = 0;
  std::size_t kv_off = 0;
  for (std::size_t i = 0; i < q_lengths.size(); ++i) {
    out.push_back({q_off, q_lengths[i], kv_off, kv_lengths[i]});
    q_off += q_lengths[i];
    kv_off += kv_lengths[i];
  }
  return out;
}

std::size_t AttentionShape::prob_count() const {
  std::size_t total = 0;
  for (const auto& s : segments) total += heads * s.q_len * s.kv_len;
  return total;
}

std::size_t ConvShape::rows() const {
  return std::accumulate(seg_lengths.begin(), seg_lengths.end(), std::size_t{0});
}

#define LITE_DISPATCH(name, ...) \
  (use_reference() ? reference::name(__VA_ARGS__) : parallel::name(__VA_ARGS__))

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n) {
  LITE_DISPATCH(matmul, a, b, c, m, k, n);
}
void matmul_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n) {
  LITE_DISPATCH(matmul_nt, a, b, c, m, k, n);
}
void matmul_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n) {
  LITE_DISPATCH(matmul_tn, a, b, c, m, k, n);
}
void attention_forward(const AttentionShape& s, const double* q, const double* k,
                       const double* v, const double* drop_scale, double* probs, double* out) {
  LITE_DISPATCH(attention_forward, s, q, k, v, drop_scale, probs, out);
}
void attention_backward(const AttentionShape& s, const double* q, const double* k,
                        const double* v, const double* probs, const double* drop_scale,
                        const double* d_out, double* dq, double* dk, double* dv) {
  LITE_DISPATCH(attention_backward, s, q, k, v, probs, drop_scale, d_out, dq, dk, dv);
}
void depthwise_conv_forward(const ConvShape& s, const double* x, const double* weights,
                            double* y) {
  LITE_DISPATCH(depthwise_conv_forward, s, x, weights, y);
}
void depthwise_conv_backward(const ConvShape& s, const double* x, const double* weights,
                             const double* dy, double* dx, double* dw) {
  LITE_DISPATCH(depthwise_conv_backward, s, x, weights, dy, dx, dw);
}
void dynamic_conv_forward(const ConvShape& s, const double* x, const double* weights,
                          double* y) {
  LITE_DISPATCH(dynamic_conv_forward, s, x, weights, y);
}
void dynamic_conv_backward(const ConvShape& s, const double* x, const double* weights,
                           const double* dy, double* dx, double* dw) {
  LITE_DISPATCH(dynamic_conv_backward, s, x, weights, dy, dx, dw);
}

#undef LITE_DISPATCH

}  // namespace lite::kernels
