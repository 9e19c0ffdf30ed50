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

// Raw numeric kernels behind the autograd ops.
//
// Every kernel exists twice with identical signatures: `reference` is a plain
// serial loop nest that also feeds the multiply-accumulate counter, and
// `parallel` is the OpenMP version used for training. Both sum every output
// element in the same order, so their results are bit-identical. The
// top-level `kernels::` functions dispatch between them.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace lite::kernels {

enum class Mode { parallel, reference };

/// Kernel flavour used by the calling thread.
Mode mode();

/// Pins the calling thread to a kernel flavour for the scope's lifetime.
class ModeScope {
 public:
  explicit ModeScope(Mode m);
  ~ModeScope();
  ModeScope(const ModeScope&) = delete;
  ModeScope& operator=(const ModeScope&) = delete;

 private:
  Mode previous_;
};

/// Instrumented execution: while alive, forward contractions on this thread
/// run through the reference kernels, which add one to the counter at every
/// scalar multiply-accumulate. Bias adds, activations, softmax and
/// normalization are not contractions and are never counted.
class MacCounter {
 public:
  MacCounter();
  ~MacCounter();
  MacCounter(const MacCounter&) = delete;
  MacCounter& operator=(const MacCounter&) = delete;

  std::uint64_t count() const { return count_; }
  void reset() { count_ = 0; }

 private:
  std::uint64_t count_ = 0;
  std::uint64_t* previous_;
};

/// Counter of the innermost live MacCounter on this thread, or nullptr.
std::uint64_t* active_counter();

/// One independent sequence inside a packed batch: rows [q_offset, q_offset+q_len)
/// of the query matrix attend to rows [kv_offset, kv_offset+kv_len) of the
/// key/value matrices.
struct SegmentPair {
  std::size_t q_offset = 0;
  std::size_t q_len = 0;
  std::size_t kv_offset = 0;
  std::size_t kv_len = 0;
};

/// Builds segment pairs from per-sequence lengths (both lists equally long).
std::vector<SegmentPair> pair_segments(std::span<const std::size_t> q_lengths,
                                       std::span<const std::size_t> kv_lengths);

enum class MaskKind { none, causal, explicit_mask };

struct AttentionShape {
  std::size_t width = 0;  // channel count of q/k/v rows
  std::size_t heads = 1;
  std::span<const SegmentPair> segments;
  MaskKind mask = MaskKind::none;
  // Row-major q_len x kv_len, nonzero = allowed. Only for a single segment.
  const std::uint8_t* explicit_mask = nullptr;

  std::size_t head_dim() const { return width / heads; }
  /// Number of probability entries across all segments and heads.
  std::size_t prob_count() const;
};

struct ConvShape {
  std::size_t channels = 0;
  std::size_t kernel_size = 1;
  std::size_t groups = 1;  // channel ch uses kernel row ch * groups / channels
  bool causal = false;
  std::span<const std::size_t> seg_lengths;  // rows of each packed sequence

  std::size_t rows() const;
  std::size_t pad_left() const { return causal ? kernel_size - 1 : (kernel_size - 1) / 2; }
};

// Kernel signatures shared by both flavours. Matrices are row-major.
#define LITE_KERNEL_DECLS                                                                    \
  /* c[m,n] = a[m,k] b[k,n] */                                                                 \
  void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,     \
              std::size_t n);                                                                \
  /* c[m,n] = a[m,k] b[n,k]^T */                                                               \
  void matmul_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,  \
                 std::size_t n);                                                             \
  /* c[m,n] = a[k,m]^T b[k,n] */                                                               \
  void matmul_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,  \
                 std::size_t n);                                                             \
  /* probs laid out segment-major, then head, then q row, then kv column. drop_scale   */     \
  /* (nullable) multiplies probs before the value product.                              */     \
  void attention_forward(const AttentionShape& s, const double* q, const double* k,          \
                         const double* v, const double* drop_scale, double* probs,           \
                         double* out);                                                       \
  /* Accumulates into dq/dk/dv; any of them may be null. */                                    \
  void attention_backward(const AttentionShape& s, const double* q, const double* k,         \
                          const double* v, const double* probs, const double* drop_scale,    \
                          const double* d_out, double* dq, double* dk, double* dv);          \
  /* weights: groups x K */                                                                    \
  void depthwise_conv_forward(const ConvShape& s, const double* x, const double* weights,    \
                              double* y);                                                    \
  void depthwise_conv_backward(const ConvShape& s, const double* x, const double* weights,   \
                               const double* dy, double* dx, double* dw);                    \
  /* weights: rows x groups x K, one kernel per position */                                    \
  void dynamic_conv_forward(const ConvShape& s, const double* x, const double* weights,      \
                            double* y);                                                      \
  void dynamic_conv_backward(const ConvShape& s, const double* x, const double* weights,     \
                             const double* dy, double* dx, double* dw);

namespace reference {
LITE_KERNEL_DECLS
}  // namespace reference

namespace parallel {
LITE_KERNEL_DECLS
}  // namespace parallel

// Dispatching entry points: reference when a MacCounter is live or the
// thread is pinned to Mode::reference, parallel otherwise.
LITE_KERNEL_DECLS

#undef LITE_KERNEL_DECLS

}  // namespace lite::kernels
