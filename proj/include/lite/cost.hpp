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

// Closed-form Mult-Adds and parameter accounting. One Mult-Add is one
// multiply plus one accumulate inside a contraction (matmul, attention
// products, convolution taps). Bias adds, activations, softmax and layer
// norm are not counted. Embedding tables are reported apart from the
// parameter total.

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "lite/config.hpp"
#include "lite/lsra.hpp"

namespace lite {

using Count = std::uint64_t;

/// Self-attention with N queries over N keys at width d: 4Nd^2 + 2N^2 d.
Count attention_madds(Count n, Count d);
/// The single-quadratic-term form 4Nd^2 + N^2 d.
Count attention_madds_single_quadratic(Count n, Count d);
/// Attention with n_q queries over n_kv keys/values (cross-attention).
Count attention_madds(Count n_q, Count n_kv, Count d);
Count ffn_madds(Count n, Count d, Count d_ff);
Count conv_branch_madds(Count n, Count c, Count k, KernelSource mode, Count groups, bool glu = false);

Count attention_params(Count d);
Count ffn_params(Count d, Count d_ff);
Count conv_branch_params(Count c, Count k, KernelSource mode, Count groups, bool glu = false);
Count layer_norm_params(Count d);

enum class CostCategory { attention, ffn, conv, other };
const char* to_string(CostCategory category);

struct CostEntry {
  std::string component;  // parameter-name prefix, e.g. "encoder.layers.0.ffn"
  CostCategory category = CostCategory::other;
  Count mult_adds = 0;
  Count mult_adds_single_quadratic = 0;  // attention rows use the single-quadratic-term form
  Count params = 0;
};

struct CostShares {
  double attention = 0.0;
  double ffn = 0.0;
  double conv = 0.0;
  double other = 0.0;
};

struct CostReport {
  Task task = Task::seq2seq;
  std::size_t n_src = 0;  // 0 for language models
  std::size_t n_tgt = 0;
  std::vector<CostEntry> entries;
  Count mult_adds = 0;
  Count mult_adds_single_quadratic = 0;
  Count params = 0;            // embedding tables excluded
  Count embedding_params = 0;
  CostShares shares;           // Mult-Adds fraction per category

  Count category_madds(CostCategory category) const;
};

/// Entries for one block with n query positions and n_memory encoder
/// positions (cross-attention only). Components are prefixed with `prefix`.
std::vector<CostEntry> profile_block(const BlockSpec& spec, Count n, Count n_memory,
                                     const std::string& prefix = "block");

/// Full-model report. For language models n_src is ignored.
CostReport profile(const ModelConfig& config, std::size_t n_src, std::size_t n_tgt);
/// Totals and shares recomputed from `entries`.
CostReport summarize(std::vector<CostEntry> entries, Task task, std::size_t n_src, std::size_t n_tgt,
                     Count embedding_params = 0);

inline constexpr Count kMobileMultAdds = 500'000'000;
inline constexpr Count kMobileParams = 10'000'000;
inline constexpr std::size_t kMobileLength = 30;

struct GateResult {
  bool pass = false;
  std::vector<std::string> reasons;  // one per violated bound
};

/// Pass iff Mult-Adds < 500M and params < 10M. The report must be at 30
/// tokens (both sides for seq2seq).
GateResult mobile_gate(const CostReport& report);
GateResult mobile_gate(Count mult_adds, Count params);

nlohmann::ordered_json to_json(const CostReport& report);

}  // namespace lite
