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

// Serial reference kernels. Straight loop nests over the textbook
// definitions; every scalar multiply-accumulate of a forward contraction
// bumps the active MacCounter.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "lite/kernels.hpp"

namespace lite::kernels::reference {

namespace {

inline void tick(std::uint64_t* counter) {
  if (counter != nullptr) ++*counter;
}

bool allowed(const AttentionShape& s, std::size_t i, std::size_t j, std::size_t kv_len) {
  switch (s.mask) {
    case MaskKind::none:
      return true;
    case MaskKind::causal:
      return j <= i;
    case MaskKind::explicit_mask:
      return s.explicit_mask[i * kv_len + j] != 0;
  }
  return true;
}

std::size_t group_of(const ConvShape& s, std::size_t ch) { return ch * s.groups / s.channels; }

}  // namespace

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n) {
  std::uint64_t* counter = active_counter();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) {
        acc += a[i * k + t] * b[t * n + j];
        tick(counter);
      }
      c[i * n + j] = acc;
    }
  }
}

void matmul_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n) {
  std::uint64_t* counter = active_counter();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) {
        acc += a[i * k + t] * b[j * k + t];
        tick(counter);
      }
      c[i * n + j] = acc;
    }
  }
}

void matmul_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n) {
  std::uint64_t* counter = active_counter();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) {
        acc += a[t * m + i] * b[t * n + j];
        tick(counter);
      }
      c[i * n + j] = acc;
    }
  }
}

void attention_forward(const AttentionShape& s, const double* q, const double* k,
                       const double* v, const double* drop_scale, double* probs, double* out) {
  std::uint64_t* counter = active_counter();
  const std::size_t w = s.width;
  const std::size_t dk = s.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  std::size_t base = 0;
  for (const SegmentPair& seg : s.segments) {
    for (std::size_t h = 0; h < s.heads; ++h) {
      const std::size_t col = h * dk;
      double* p = probs + base;
      // Scores for every (query, key) pair, masked or not.
      std::vector<double> scores(seg.q_len * seg.kv_len);
      for (std::size_t i = 0; i < seg.q_len; ++i) {
        for (std::size_t j = 0; j < seg.kv_len; ++j) {
          double acc = 0.0;
          for (std::size_t t = 0; t < dk; ++t) {
            acc += q[(seg.q_offset + i) * w + col + t] * k[(seg.kv_offset + j) * w + col + t];
            tick(counter);
          }
          scores[i * seg.kv_len + j] = acc * scale;
        }
      }
      for (std::size_t i = 0; i < seg.q_len; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < seg.kv_len; ++j) {
          if (allowed(s, i, j, seg.kv_len)) mx = std::max(mx, scores[i * seg.kv_len + j]);
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < seg.kv_len; ++j) {
          const double e =
              allowed(s, i, j, seg.kv_len) ? std::exp(scores[i * seg.kv_len + j] - mx) : 0.0;
          p[i * seg.kv_len + j] = e;
          sum += e;
        }
        for (std::size_t j = 0; j < seg.kv_len; ++j) p[i * seg.kv_len + j] /= sum;
      }
      for (std::size_t i = 0; i < seg.q_len; ++i) {
        for (std::size_t t = 0; t < dk; ++t) {
          double acc = 0.0;
          for (std::size_t j = 0; j < seg.kv_len; ++j) {
            double pj = p[i * seg.kv_len + j];
            if (drop_scale != nullptr) pj *= drop_scale[base + i * seg.kv_len + j];
            acc += pj * v[(seg.kv_offset + j) * w + col + t];
            tick(counter);
          }
          out[(seg.q_offset + i) * w + col + t] = acc;
        }
      }
      base += seg.q_len * seg.kv_len;
    }
  }
}

void attention_backward(const AttentionShape& s, const double* q, const double* k,
                        const double* v, const double* probs, const double* drop_scale,
                        const double* d_out, double* dq, double* dk, double* dv) {
  const std::size_t w = s.width;
  const std::size_t hd = s.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  std::size_t base = 0;
  for (const SegmentPair& seg : s.segments) {
    for (std::size_t h = 0; h < s.heads; ++h) {
      const std::size_t col = h * hd;
      const double* p = probs + base;
      for (std::size_t i = 0; i < seg.q_len; ++i) {
        const double* go = d_out + (seg.q_offset + i) * w + col;
        std::vector<double> dp(seg.kv_len);
        for (std::size_t j = 0; j < seg.kv_len; ++j) {
          double acc = 0.0;
          for (std::size_t t = 0; t < hd; ++t) acc += go[t] * v[(seg.kv_offset + j) * w + col + t];
          const double drop = drop_scale != nullptr ? drop_scale[base + i * seg.kv_len + j] : 1.0;
          dp[j] = acc * drop;
          if (dv != nullptr) {
            const double pd = p[i * seg.kv_len + j] * drop;
            for (std::size_t t = 0; t < hd; ++t) dv[(seg.kv_offset + j) * w + col + t] += pd * go[t];
          }
        }
        double row_dot = 0.0;
        for (std::size_t j = 0; j < seg.kv_len; ++j) row_dot += p[i * seg.kv_len + j] * dp[j];
        for (std::size_t j = 0; j < seg.kv_len; ++j) {
          const double ds = p[i * seg.kv_len + j] * (dp[j] - row_dot) * scale;
          for (std::size_t t = 0; t < hd; ++t) {
            if (dq != nullptr) dq[(seg.q_offset + i) * w + col + t] += ds * k[(seg.kv_offset + j) * w + col + t];
            if (dk != nullptr) dk[(seg.kv_offset + j) * w + col + t] += ds * q[(seg.q_offset + i) * w + col + t];
          }
        }
      }
      base += seg.q_len * seg.kv_len;
    }
  }
}

void depthwise_conv_forward(const ConvShape& s, const double* x, const double* weights,
                            double* y) {
  std::uint64_t* counter = active_counter();
  const std::size_t c = s.channels;
  const std::size_t kk = s.kernel_size;
  const std::size_t pad = s.pad_left();
  std::size_t row0 = 0;
  for (std::size_t len : s.seg_lengths) {
    // Explicitly zero-padded copy of the sequence: K-1 pad rows in total.
    const std::size_t padded_len = len + kk - 1;
    std::vector<double> padded(padded_len * c, 0.0);
    for (std::size_t t = 0; t < len; ++t) {
      for (std::size_t ch = 0; ch < c; ++ch) padded[(t + pad) * c + ch] = x[(row0 + t) * c + ch];
    }
    for (std::size_t t = 0; t < len; ++t) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double* kernel = weights + group_of(s, ch) * kk;
        double acc = 0.0;
        for (std::size_t j = 0; j < kk; ++j) {
          acc += kernel[j] * padded[(t + j) * c + ch];
          tick(counter);
        }
        y[(row0 + t) * c + ch] = acc;
      }
    }
    row0 += len;
  }
}

void depthwise_conv_backward(const ConvShape& s, const double* x, const double* weights,
                             const double* dy, double* dx, double* dw) {
  const std::size_t c = s.channels;
  const std::size_t kk = s.kernel_size;
  const std::size_t pad = s.pad_left();
  std::size_t row0 = 0;
  for (std::size_t len : s.seg_lengths) {
    // dx gathers, per input row, the taps of every output row that read it.
    for (std::size_t src = 0; src < len && dx != nullptr; ++src) {
      for (std::size_t j = 0; j < kk; ++j) {
        const std::ptrdiff_t t = static_cast<std::ptrdiff_t>(src + pad) - static_cast<std::ptrdiff_t>(j);
        if (t < 0 || t >= static_cast<std::ptrdiff_t>(len)) continue;
        const std::size_t tr = row0 + static_cast<std::size_t>(t);
        for (std::size_t ch = 0; ch < c; ++ch) {
          dx[(row0 + src) * c + ch] += weights[group_of(s, ch) * kk + j] * dy[tr * c + ch];
        }
      }
    }
    for (std::size_t t = 0; t < len && dw != nullptr; ++t) {
      for (std::size_t j = 0; j < kk; ++j) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(pad);
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
        const std::size_t r = row0 + static_cast<std::size_t>(src);
        for (std::size_t g = 0; g < s.groups; ++g) {
          double acc = 0.0;
          for (std::size_t ch = 0; ch < c; ++ch) {
            if (group_of(s, ch) == g) acc += x[r * c + ch] * dy[(row0 + t) * c + ch];
          }
          dw[g * kk + j] += acc;
        }
      }
    }
    row0 += len;
  }
}

void dynamic_conv_forward(const ConvShape& s, const double* x, const double* weights,
                          double* y) {
  std::uint64_t* counter = active_counter();
  const std::size_t c = s.channels;
  const std::size_t kk = s.kernel_size;
  const std::size_t pad = s.pad_left();
  const std::size_t hk = s.groups * kk;
  std::size_t row0 = 0;
  for (std::size_t len : s.seg_lengths) {
    const std::size_t padded_len = len + kk - 1;
    std::vector<double> padded(padded_len * c, 0.0);
    for (std::size_t t = 0; t < len; ++t) {
      for (std::size_t ch = 0; ch < c; ++ch) padded[(t + pad) * c + ch] = x[(row0 + t) * c + ch];
    }
    for (std::size_t t = 0; t < len; ++t) {
      const double* kernels_at_t = weights + (row0 + t) * hk;
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double* kernel = kernels_at_t + group_of(s, ch) * kk;
        double acc = 0.0;
        for (std::size_t j = 0; j < kk; ++j) {
          acc += kernel[j] * padded[(t + j) * c + ch];
          tick(counter);
        }
        y[(row0 + t) * c + ch] = acc;
      }
    }
    row0 += len;
  }
}

void dynamic_conv_backward(const ConvShape& s, const double* x, const double* weights,
                           const double* dy, double* dx, double* dw) {
  const std::size_t c = s.channels;
  const std::size_t kk = s.kernel_size;
  const std::size_t pad = s.pad_left();
  const std::size_t hk = s.groups * kk;
  std::size_t row0 = 0;
  for (std::size_t len : s.seg_lengths) {
    for (std::size_t t = 0; t < len && dw != nullptr; ++t) {
      for (std::size_t j = 0; j < kk; ++j) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(pad);
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
        const std::size_t r = row0 + static_cast<std::size_t>(src);
        for (std::size_t g = 0; g < s.groups; ++g) {
          double acc = 0.0;
          for (std::size_t ch = 0; ch < c; ++ch) {
            if (group_of(s, ch) == g) acc += x[r * c + ch] * dy[(row0 + t) * c + ch];
          }
          dw[(row0 + t) * hk + g * kk + j] += acc;
        }
      }
    }
    for (std::size_t src = 0; src < len && dx != nullptr; ++src) {
      for (std::size_t j = 0; j < kk; ++j) {
        const std::ptrdiff_t t = static_cast<std::ptrdiff_t>(src + pad) - static_cast<std::ptrdiff_t>(j);
        if (t < 0 || t >= static_cast<std::ptrdiff_t>(len)) continue;
        const std::size_t tr = row0 + static_cast<std::size_t>(t);
        for (std::size_t ch = 0; ch < c; ++ch) {
          dx[(row0 + src) * c + ch] += weights[tr * hk + group_of(s, ch) * kk + j] * dy[tr * c + ch];
        }
      }
    }
    row0 += len;
  }
}

}  // namespace lite::kernels::reference
