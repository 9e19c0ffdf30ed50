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

// OpenMP kernels. Each output element is summed in the same order as the
// reference loop nest, so forward results match the reference bit for bit.

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <vector>

#include "lite/kernels.hpp"

namespace lite::kernels::parallel {

namespace {

// Below this many multiply-adds a kernel stays on the calling thread.
constexpr std::size_t kParallelThreshold = 1 << 16;

std::vector<double> transpose(const double* src, std::size_t rows, std::size_t cols) {
  std::vector<double> dst(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
  }
  return dst;
}

struct RowSpan {
  std::size_t begin;
  std::size_t len;
};

// Segment owning each packed row.
std::vector<RowSpan> row_owners(std::span<const std::size_t> lengths) {
  std::vector<RowSpan> owners;
  std::size_t begin = 0;
  for (std::size_t len : lengths) {
    for (std::size_t t = 0; t < len; ++t) owners.push_back({begin, len});
    begin += len;
  }
  return owners;
}

}  // namespace

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n) {
  constexpr std::size_t kRows = 4;
  const std::size_t blocks = (m + kRows - 1) / kRows;
  const bool big = m * k * n >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (big)
  for (std::size_t blk = 0; blk < blocks; ++blk) {
    const std::size_t i0 = blk * kRows;
    const std::size_t rows = std::min(kRows, m - i0);
    double* crow = c + i0 * n;
    std::fill(crow, crow + rows * n, 0.0);
    if (rows == kRows) {
      double* c0 = crow;
      double* c1 = crow + n;
      double* c2 = crow + 2 * n;
      double* c3 = crow + 3 * n;
      const double* a0 = a + i0 * k;
      for (std::size_t t = 0; t < k; ++t) {
        const double x0 = a0[t];
        const double x1 = a0[k + t];
        const double x2 = a0[2 * k + t];
        const double x3 = a0[3 * k + t];
        const double* brow = b + t * n;
        for (std::size_t j = 0; j < n; ++j) {
          const double bj = brow[j];
          c0[j] += x0 * bj;
          c1[j] += x1 * bj;
          c2[j] += x2 * bj;
          c3[j] += x3 * bj;
        }
      }
    } else {
      for (std::size_t r = 0; r < rows; ++r) {
        double* ci = crow + r * n;
        const double* ai = a + (i0 + r) * k;
        for (std::size_t t = 0; t < k; ++t) {
          const double x = ai[t];
          const double* brow = b + t * n;
          for (std::size_t j = 0; j < n; ++j) ci[j] += x * brow[j];
        }
      }
    }
  }
}

void matmul_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n) {
  const std::vector<double> bt = transpose(b, n, k);
  matmul(a, bt.data(), c, m, k, n);
}

void matmul_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n) {
  const std::vector<double> at = transpose(a, k, m);
  matmul(at.data(), b, c, m, k, n);
}

void attention_forward(const AttentionShape& s, const double* q, const double* k,
                       const double* v, const double* drop_scale, double* probs, double* out) {
  const std::size_t w = s.width;
  const std::size_t dk = s.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  const std::size_t n_seg = s.segments.size();
  std::vector<std::size_t> base(n_seg + 1, 0);
  for (std::size_t i = 0; i < n_seg; ++i) {
    base[i + 1] = base[i] + s.heads * s.segments[i].q_len * s.segments[i].kv_len;
  }
  const std::size_t jobs = n_seg * s.heads;
  const bool big = s.prob_count() * dk >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (big)
  for (std::size_t job = 0; job < jobs; ++job) {
    const SegmentPair& seg = s.segments[job / s.heads];
    const std::size_t h = job % s.heads;
    const std::size_t col = h * dk;
    const std::size_t off = base[job / s.heads] + h * seg.q_len * seg.kv_len;
    for (std::size_t i = 0; i < seg.q_len; ++i) {
      double* p = probs + off + i * seg.kv_len;
      const double* qi = q + (seg.q_offset + i) * w + col;
      std::size_t limit = seg.kv_len;
      if (s.mask == MaskKind::causal) limit = std::min(seg.kv_len, i + 1);
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < seg.kv_len; ++j) {
        const double* kj = k + (seg.kv_offset + j) * w + col;
        double acc = 0.0;
        for (std::size_t t = 0; t < dk; ++t) acc += qi[t] * kj[t];
        p[j] = acc * scale;
        const bool ok = j < limit &&
                        (s.mask != MaskKind::explicit_mask || s.explicit_mask[i * seg.kv_len + j] != 0);
        if (ok) {
          mx = std::max(mx, p[j]);
        } else {
          p[j] = -std::numeric_limits<double>::infinity();
        }
      }
      double sum = 0.0;
      for (std::size_t j = 0; j < seg.kv_len; ++j) {
        const double e = p[j] == -std::numeric_limits<double>::infinity() ? 0.0 : std::exp(p[j] - mx);
        p[j] = e;
        sum += e;
      }
      for (std::size_t j = 0; j < seg.kv_len; ++j) p[j] /= sum;
      double* oi = out + (seg.q_offset + i) * w + col;
      std::fill(oi, oi + dk, 0.0);
      for (std::size_t j = 0; j < seg.kv_len; ++j) {
        double pj = p[j];
        if (drop_scale != nullptr) pj *= drop_scale[off + i * seg.kv_len + j];
        const double* vj = v + (seg.kv_offset + j) * w + col;
        for (std::size_t t = 0; t < dk; ++t) oi[t] += pj * vj[t];
      }
    }
  }
}

void attention_backward(const AttentionShape& s, const double* q, const double* k,
                        const double* v, const double* probs, const double* drop_scale,
                        const double* d_out, double* dq, double* dk, double* dv) {
  const std::size_t w = s.width;
  const std::size_t hd = s.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  const std::size_t n_seg = s.segments.size();
  std::vector<std::size_t> base(n_seg + 1, 0);
  for (std::size_t i = 0; i < n_seg; ++i) {
    base[i + 1] = base[i] + s.heads * s.segments[i].q_len * s.segments[i].kv_len;
  }
  const std::size_t jobs = n_seg * s.heads;
  const bool big = s.prob_count() * hd >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (big)
  for (std::size_t job = 0; job < jobs; ++job) {
    const SegmentPair& seg = s.segments[job / s.heads];
    const std::size_t h = job % s.heads;
    const std::size_t col = h * hd;
    const std::size_t off = base[job / s.heads] + h * seg.q_len * seg.kv_len;
    std::vector<double> dp(seg.kv_len);
    for (std::size_t i = 0; i < seg.q_len; ++i) {
      const double* p = probs + off + i * seg.kv_len;
      const double* go = d_out + (seg.q_offset + i) * w + col;
      for (std::size_t j = 0; j < seg.kv_len; ++j) {
        const double* vj = v + (seg.kv_offset + j) * w + col;
        double acc = 0.0;
        for (std::size_t t = 0; t < hd; ++t) acc += go[t] * vj[t];
        const double drop = drop_scale != nullptr ? drop_scale[off + i * seg.kv_len + j] : 1.0;
        dp[j] = acc * drop;
        if (dv != nullptr) {
          const double pd = p[j] * drop;
          double* dvj = dv + (seg.kv_offset + j) * w + col;
          for (std::size_t t = 0; t < hd; ++t) dvj[t] += pd * go[t];
        }
      }
      double row_dot = 0.0;
      for (std::size_t j = 0; j < seg.kv_len; ++j) row_dot += p[j] * dp[j];
      double* dqi = dq != nullptr ? dq + (seg.q_offset + i) * w + col : nullptr;
      const double* qi = q + (seg.q_offset + i) * w + col;
      for (std::size_t j = 0; j < seg.kv_len; ++j) {
        const double ds = p[j] * (dp[j] - row_dot) * scale;
        if (ds == 0.0) continue;
        const double* kj = k + (seg.kv_offset + j) * w + col;
        if (dqi != nullptr) {
          for (std::size_t t = 0; t < hd; ++t) dqi[t] += ds * kj[t];
        }
        if (dk != nullptr) {
          double* dkj = dk + (seg.kv_offset + j) * w + col;
          for (std::size_t t = 0; t < hd; ++t) dkj[t] += ds * qi[t];
        }
      }
    }
  }
}

void depthwise_conv_forward(const ConvShape& s, const double* x, const double* weights,
                            double* y) {
  const std::size_t c = s.channels;
  const std::size_t kk = s.kernel_size;
  const std::size_t pad = s.pad_left();
  // Kernel taps expanded per channel so the channel loop is contiguous.
  std::vector<double> expanded(kk * c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const std::size_t g = ch * s.groups / c;
    for (std::size_t j = 0; j < kk; ++j) expanded[j * c + ch] = weights[g * kk + j];
  }
  const auto owners = row_owners(s.seg_lengths);
  const std::size_t rows = owners.size();
  const bool big = rows * c * kk >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (big)
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t t = r - owners[r].begin;
    double* yr = y + r * c;
    std::fill(yr, yr + c, 0.0);
    for (std::size_t j = 0; j < kk; ++j) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(pad);
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(owners[r].len)) continue;
      const double* xs = x + (owners[r].begin + static_cast<std::size_t>(src)) * c;
      const double* kj = expanded.data() + j * c;
      for (std::size_t ch = 0; ch < c; ++ch) yr[ch] += kj[ch] * xs[ch];
    }
  }
}

void depthwise_conv_backward(const ConvShape& s, const double* x, const double* weights,
                             const double* dy, double* dx, double* dw) {
  const std::size_t c = s.channels;
  const std::size_t kk = s.kernel_size;
  const std::size_t pad = s.pad_left();
  const std::size_t per_group = c / s.groups;
  const auto owners = row_owners(s.seg_lengths);
  const std::size_t rows = owners.size();
  if (dx != nullptr) {
    std::vector<double> expanded(kk * c);
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t g = ch * s.groups / c;
      for (std::size_t j = 0; j < kk; ++j) expanded[j * c + ch] = weights[g * kk + j];
    }
    const bool big = rows * c * kk >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (big)
    for (std::size_t r = 0; r < rows; ++r) {
      // Output rows t = src + pad - j that read input row r.
      const std::size_t src = r - owners[r].begin;
      double* dxr = dx + r * c;
      for (std::size_t j = 0; j < kk; ++j) {
        const std::ptrdiff_t t = static_cast<std::ptrdiff_t>(src + pad) - static_cast<std::ptrdiff_t>(j);
        if (t < 0 || t >= static_cast<std::ptrdiff_t>(owners[r].len)) continue;
        const double* gy = dy + (owners[r].begin + static_cast<std::size_t>(t)) * c;
        const double* kj = expanded.data() + j * c;
        for (std::size_t ch = 0; ch < c; ++ch) dxr[ch] += kj[ch] * gy[ch];
      }
    }
  }
  if (dw != nullptr) {
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t t = r - owners[r].begin;
      const double* gy = dy + r * c;
      for (std::size_t j = 0; j < kk; ++j) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(pad);
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(owners[r].len)) continue;
        const double* xs = x + (owners[r].begin + static_cast<std::size_t>(src)) * c;
        for (std::size_t g = 0; g < s.groups; ++g) {
          double acc = 0.0;
          for (std::size_t ch = g * per_group; ch < (g + 1) * per_group; ++ch) acc += xs[ch] * gy[ch];
          dw[g * kk + j] += acc;
        }
      }
    }
  }
}

void dynamic_conv_forward(const ConvShape& s, const double* x, const double* weights,
                          double* y) {
  const std::size_t c = s.channels;
  const std::size_t kk = s.kernel_size;
  const std::size_t pad = s.pad_left();
  const std::size_t hk = s.groups * kk;
  const std::size_t per_group = c / s.groups;
  const auto owners = row_owners(s.seg_lengths);
  const std::size_t rows = owners.size();
  const bool big = rows * c * kk >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (big)
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t t = r - owners[r].begin;
    double* yr = y + r * c;
    std::fill(yr, yr + c, 0.0);
    const double* wr = weights + r * hk;
    for (std::size_t j = 0; j < kk; ++j) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(pad);
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(owners[r].len)) continue;
      const double* xs = x + (owners[r].begin + static_cast<std::size_t>(src)) * c;
      for (std::size_t g = 0; g < s.groups; ++g) {
        const double wv = wr[g * kk + j];
        for (std::size_t ch = g * per_group; ch < (g + 1) * per_group; ++ch) yr[ch] += wv * xs[ch];
      }
    }
  }
}

void dynamic_conv_backward(const ConvShape& s, const double* x, const double* weights,
                           const double* dy, double* dx, double* dw) {
  const std::size_t c = s.channels;
  const std::size_t kk = s.kernel_size;
  const std::size_t pad = s.pad_left();
  const std::size_t hk = s.groups * kk;
  const std::size_t per_group = c / s.groups;
  const auto owners = row_owners(s.seg_lengths);
  const std::size_t rows = owners.size();
  const bool big = rows * c * kk >= kParallelThreshold;
  if (dw != nullptr) {
#pragma omp parallel for schedule(static) if (big)
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t t = r - owners[r].begin;
      const double* gy = dy + r * c;
      double* dwr = dw + r * hk;
      for (std::size_t j = 0; j < kk; ++j) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(pad);
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(owners[r].len)) continue;
        const double* xs = x + (owners[r].begin + static_cast<std::size_t>(src)) * c;
        for (std::size_t g = 0; g < s.groups; ++g) {
          double acc = 0.0;
          for (std::size_t ch = g * per_group; ch < (g + 1) * per_group; ++ch) acc += xs[ch] * gy[ch];
          dwr[g * kk + j] += acc;
        }
      }
    }
  }
  if (dx != nullptr) {
#pragma omp parallel for schedule(static) if (big)
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t src = r - owners[r].begin;
      double* dxr = dx + r * c;
      for (std::size_t j = 0; j < kk; ++j) {
        const std::ptrdiff_t t = static_cast<std::ptrdiff_t>(src + pad) - static_cast<std::ptrdiff_t>(j);
        if (t < 0 || t >= static_cast<std::ptrdiff_t>(owners[r].len)) continue;
        const std::size_t tr = owners[r].begin + static_cast<std::size_t>(t);
        const double* gy = dy + tr * c;
        const double* wt = weights + tr * hk;
        for (std::size_t g = 0; g < s.groups; ++g) {
          const double wv = wt[g * kk + j];
          for (std::size_t ch = g * per_group; ch < (g + 1) * per_group; ++ch) dxr[ch] += wv * gy[ch];
        }
      }
    }
  }
}

}  // namespace lite::kernels::parallel
