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

#include "lite/cost.hpp"

#include "lite/errors.hpp"

namespace lite {

Count attention_madds(Count n, Count d) { return attention_madds(n, n, d); }

Count attention_madds_single_quadratic(Count n, Count d) { return 4 * n * d * d + n * n * d; }

Count attention_madds(Count n_q, Count n_kv, Count d) {
  // q and output projections run over the queries, k and v over the memory;
  // then QK^T and PV.
  return 2 * n_q * d * d + 2 * n_kv * d * d + 2 * n_q * n_kv * d;
}

Count ffn_madds(Count n, Count d, Count d_ff) { return 2 * n * d * d_ff; }

Count conv_branch_madds(Count n, Count c, Count k, KernelSource mode, Count groups, bool glu) {
  Count total = n * c * c * (glu ? 2 : 1) + n * c * c + n * c * k;
  if (mode == KernelSource::dynamic) total += n * c * groups * k;
  return total;
}

Count attention_params(Count d) { return 4 * (d * d + d); }

Count ffn_params(Count d, Count d_ff) { return d * d_ff + d_ff + d_ff * d + d; }

Count conv_branch_params(Count c, Count k, KernelSource mode, Count groups, bool glu) {
  const Count in_width = glu ? 2 * c : c;
  Count total = c * in_width + in_width + c * c + c;
  if (mode == KernelSource::dynamic) {
    total += c * groups * k + groups * k;
  } else {
    total += groups * k;
  }
  return total;
}

Count layer_norm_params(Count d) { return 2 * d; }

const char* to_string(CostCategory category) {
  switch (category) {
    case CostCategory::attention: return "attention";
    case CostCategory::ffn: return "ffn";
    case CostCategory::conv: return "conv";
    case CostCategory::other: return "other";
  }
  return "?";
}

Count CostReport::category_madds(CostCategory category) const {
  Count total = 0;
  for (const CostEntry& e : entries) {
    if (e.category == category) total += e.mult_adds;
  }
  return total;
}

std::vector<CostEntry> profile_block(const BlockSpec& spec, Count n, Count n_memory, const std::string& prefix) {
  if (n == 0) throw ContractError("profile: sequence length must be at least 1");
  const Count d = spec.d_model;
  std::vector<CostEntry> out;
  auto attention_entry = [&](const std::string& name, Count n_q, Count n_kv, Count width) {
    const Count exact = attention_madds(n_q, n_kv, width);
    out.push_back({prefix + "." + name, CostCategory::attention, exact, exact - n_q * n_kv * width,
                   attention_params(width)});
  };
  auto norm_entry = [&](const std::string& name) {
    out.push_back({prefix + "." + name, CostCategory::other, 0, 0, layer_norm_params(d)});
  };
  if (spec.style == BlockStyle::lsra) {
    const Count half = d / 2;
    attention_entry("self_attn", n, n, half);
    const Count conv = conv_branch_madds(n, half, spec.kernel_size, spec.conv_source, spec.heads,
                                         spec.glu_on_conv_input);
    out.push_back({prefix + ".conv", CostCategory::conv, conv, conv,
                   conv_branch_params(half, spec.kernel_size, spec.conv_source, spec.heads,
                                      spec.glu_on_conv_input)});
  } else {
    attention_entry("self_attn", n, n, d);
  }
  norm_entry("self_norm");
  if (spec.cross_attention) {
    if (n_memory == 0) throw ContractError("profile: cross-attention needs a source length of at least 1");
    attention_entry("cross_attn", n, n_memory, d);
    norm_entry("cross_norm");
  }
  const Count ffn = ffn_madds(n, d, spec.d_ff);
  out.push_back({prefix + ".ffn", CostCategory::ffn, ffn, ffn, ffn_params(d, spec.d_ff)});
  norm_entry("ffn_norm");
  return out;
}

CostReport summarize(std::vector<CostEntry> entries, Task task, std::size_t n_src, std::size_t n_tgt,
                     Count embedding_params) {
  CostReport r;
  r.task = task;
  r.n_src = n_src;
  r.n_tgt = n_tgt;
  r.entries = std::move(entries);
  r.embedding_params = embedding_params;
  for (const CostEntry& e : r.entries) {
    r.mult_adds += e.mult_adds;
    r.mult_adds_single_quadratic += e.mult_adds_single_quadratic;
    r.params += e.params;
  }
  if (r.mult_adds > 0) {
    const double total = static_cast<double>(r.mult_adds);
    r.shares.attention = static_cast<double>(r.category_madds(CostCategory::attention)) / total;
    r.shares.ffn = static_cast<double>(r.category_madds(CostCategory::ffn)) / total;
    r.shares.conv = static_cast<double>(r.category_madds(CostCategory::conv)) / total;
    r.shares.other = 1.0 - r.shares.attention - r.shares.ffn - r.shares.conv;
  }
  return r;
}

CostReport profile(const ModelConfig& config, std::size_t n_src, std::size_t n_tgt) {
  config.validate();
  const bool seq2seq = config.task == Task::seq2seq;
  if (n_tgt == 0 || (seq2seq && n_src == 0)) {
    throw ContractError("profile: sequence lengths must be at least 1");
  }
  std::vector<CostEntry> entries;
  if (seq2seq) {
    for (std::size_t i = 0; i < config.n_layers_enc; ++i) {
      auto block = profile_block(config.block_spec(i, false), n_src, 0, "encoder.layers." + std::to_string(i));
      entries.insert(entries.end(), block.begin(), block.end());
    }
  }
  for (std::size_t i = 0; i < config.n_layers_dec; ++i) {
    auto block = profile_block(config.block_spec(i, true), n_tgt, seq2seq ? n_src : 0,
                               "decoder.layers." + std::to_string(i));
    entries.insert(entries.end(), block.begin(), block.end());
  }
  // Tied to the target embedding: compute only, no parameters of its own.
  const Count out_proj = static_cast<Count>(n_tgt) * config.d_model * config.vocab_tgt;
  entries.push_back({"decoder.output_projection", CostCategory::other, out_proj, out_proj, 0});

  Count embedding = static_cast<Count>(config.vocab_tgt) * config.d_model;
  if (seq2seq && !config.share_embeddings) embedding += static_cast<Count>(config.vocab_src) * config.d_model;
  return summarize(std::move(entries), config.task, seq2seq ? n_src : 0, n_tgt, embedding);
}

GateResult mobile_gate(Count mult_adds, Count params) {
  GateResult g;
  if (mult_adds >= kMobileMultAdds) {
    g.reasons.push_back("mult_adds " + std::to_string(mult_adds) + " >= " + std::to_string(kMobileMultAdds) +
                        " (over by " + std::to_string(mult_adds - kMobileMultAdds) + ")");
  }
  if (params >= kMobileParams) {
    g.reasons.push_back("params " + std::to_string(params) + " >= " + std::to_string(kMobileParams) +
                        " (over by " + std::to_string(params - kMobileParams) + ")");
  }
  g.pass = g.reasons.empty();
  return g;
}

GateResult mobile_gate(const CostReport& report) {
  const bool at_length = report.n_tgt == kMobileLength &&
                         (report.task == Task::lm || report.n_src == kMobileLength);
  if (!at_length) {
    throw ContractError("mobile_gate: report is at n_src=" + std::to_string(report.n_src) +
                        ", n_tgt=" + std::to_string(report.n_tgt) + "; the gate is defined at 30 tokens");
  }
  return mobile_gate(report.mult_adds, report.params);
}

nlohmann::ordered_json to_json(const CostReport& report) {
  nlohmann::ordered_json j;
  j["task"] = report.task == Task::seq2seq ? "seq2seq" : "lm";
  j["n_src"] = report.n_src;
  j["n_tgt"] = report.n_tgt;
  j["mult_adds"] = report.mult_adds;
  j["mult_adds_single_quadratic"] = report.mult_adds_single_quadratic;
  j["params"] = report.params;
  j["embedding_params"] = report.embedding_params;
  j["shares"] = {{"attention", report.shares.attention},
                 {"ffn", report.shares.ffn},
                 {"conv", report.shares.conv},
                 {"other", report.shares.other}};
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const CostEntry& e : report.entries) {
    rows.push_back({{"component", e.component},
                    {"category", to_string(e.category)},
                    {"mult_adds", e.mult_adds},
                    {"mult_adds_single_quadratic", e.mult_adds_single_quadratic},
                    {"params", e.params}});
  }
  j["entries"] = rows;
  return j;
}

}  // namespace lite
