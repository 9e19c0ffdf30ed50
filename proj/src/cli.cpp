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

#include "lite/cli.hpp"

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include <fstream>
#include <iostream>
#include <sstream>

#include "lite/checkpoint.hpp"
#include "lite/compress.hpp"
#include "lite/config.hpp"
#include "lite/cost.hpp"
#include "lite/errors.hpp"
#include "lite/model.hpp"
#include "lite/train.hpp"

namespace lite {

namespace fs = std::filesystem;

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

nlohmann::ordered_json RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["config"] = config_path;
  j["seed"] = seed;
  j["out_dir"] = out_dir.string();
  nlohmann::ordered_json files = nlohmann::ordered_json::array();
  for (const fs::path& a : artifacts) files.push_back({{"path", a.string()}, {"sha256", sha256_file(out_dir / a)}});
  j["artifacts"] = files;
  return j;
}

void RunManifest::write() const {
  const nlohmann::ordered_json j = to_json();
  std::ofstream out(out_dir / "manifest.json");
  if (!out) throw IoError("cannot write " + (out_dir / "manifest.json").string());
  out << j.dump(2) << '\n';
}

namespace {

struct Common {
  std::string out_dir = ".";
};

fs::path prepare_out_dir(const std::string& dir) {
  fs::path p(dir);
  fs::create_directories(p);
  return p;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

TokenSeq parse_tokens(const std::string& text) {
  std::istringstream in(text);
  TokenSeq out;
  std::string word;
  while (in >> word) {
    try {
      std::size_t used = 0;
      const int id = std::stoi(word, &used);
      if (used != word.size()) throw std::invalid_argument(word);
      out.push_back(id);
    } catch (const std::exception&) {
      throw ConfigError("token list: '" + word + "' is not an integer id");
    }
  }
  return out;
}

std::string join_tokens(const TokenSeq& seq) {
  return fmt::format("{}", fmt::join(seq, " "));
}

void check_ids(const TokenSeq& seq, std::size_t vocab, const char* what) {
  for (int id : seq) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw IndexError(fmt::format("{}: token {} outside vocab {}", what, id, vocab));
    }
  }
}

const TrainConfig& require_train(const RunConfig& rc, const std::string& path) {
  if (!rc.train) throw ConfigError(path + ": missing 'train' section");
  return *rc.train;
}

// ---------------------------------------------------------------------------

int cmd_profile(const std::string& config_path, std::size_t n_src, std::size_t n_tgt, bool gate,
                const Common& common, std::ostream& out) {
  const RunConfig rc = load_run_config(config_path);
  const CostReport report = profile(rc.model, n_src, n_tgt);
  const fs::path dir = prepare_out_dir(common.out_dir);
  nlohmann::ordered_json j = to_json(report);
  int code = kExitOk;
  if (gate) {
    const GateResult g = mobile_gate(report);
    j["gate"] = {{"pass", g.pass}, {"reasons", g.reasons}};
    code = g.pass ? kExitOk : kExitGate;
  }
  write_text(dir / "profile.json", j.dump(2) + "\n");
  RunManifest{"profile", config_path, 0, dir, {"profile.json"}}.write();

  fmt::print(out, "{:<28} {:>10} {:>14} {:>12}\n", "component", "category", "mult_adds", "params");
  for (const CostEntry& e : report.entries) {
    fmt::print(out, "{:<28} {:>10} {:>14} {:>12}\n", e.component, to_string(e.category), e.mult_adds, e.params);
  }
  fmt::print(out, "total mult_adds {} (single-quadratic form {}), params {} (+{} embedding)\n", report.mult_adds,
             report.mult_adds_single_quadratic, report.params, report.embedding_params);
  fmt::print(out, "shares attention {:.4f} ffn {:.4f} conv {:.4f} other {:.4f}\n", report.shares.attention,
             report.shares.ffn, report.shares.conv, report.shares.other);
  if (gate) {
    if (code == kExitOk) {
      fmt::print(out, "mobile gate: pass\n");
    } else {
      fmt::print(out, "mobile gate: FAIL\n");
      for (const auto& r : j["gate"]["reasons"]) fmt::print(out, "  {}\n", r.get<std::string>());
    }
  }
  return code;
}

int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed, const Common& common,
              std::ostream& out) {
  RunConfig rc = load_run_config(config_path);
  TrainConfig tc = require_train(rc, config_path);
  if (seed) tc.seed = *seed;
  tc.validate(rc.model);
  const fs::path dir = prepare_out_dir(common.out_dir);
  Rng init_rng = Rng(tc.seed).fork(0);
  Model model = Model::build(rc.model, init_rng);
  std::ofstream metrics(dir / "metrics.jsonl", std::ios::trunc);
  TrainHooks hooks;
  hooks.metrics = &metrics;
  hooks.on_eval = [&out](std::size_t step, const EvalResult& e) {
    fmt::print(out, "step {:>6}  eval loss {:.4f}  accuracy {:.4f}\n", step, e.loss, e.accuracy);
  };
  const TrainResult r = train(model, tc, hooks);
  metrics.close();
  save_checkpoint(model, dir / "model.ltc");
  nlohmann::ordered_json summary;
  summary["updates"] = r.updates;
  summary["reached_target"] = r.reached_target;
  summary["eval_loss"] = r.final_eval.loss;
  summary["eval_accuracy"] = r.final_eval.accuracy;
  summary["seconds"] = r.seconds;
  write_text(dir / "train.json", summary.dump(2) + "\n");
  RunManifest{"train", config_path, tc.seed, dir, {"model.ltc", "metrics.jsonl", "train.json"}}.write();
  fmt::print(out, "trained {} updates in {:.1f}s\n", r.updates, r.seconds);
  return kExitOk;
}

EvalResult held_out_eval(const Model& model, const TrainConfig& tc) {
  const TaskGenerator gen(tc.task, model.config().vocab_tgt, tc.min_len, tc.max_len);
  return evaluate(model, eval_batch(gen, tc.eval_sequences, tc.seed ^ 0x7e57ULL));
}

double held_out_perplexity(const Model& model, const TrainConfig& tc) {
  const std::size_t length = std::max<std::size_t>(4 * tc.max_len, 8);
  const TaskGenerator gen(tc.task, model.config().vocab_tgt, length, length);
  Rng rng(tc.seed ^ 0x9e7bULL);
  TokenSeq stream{kBosId};
  const Example ex = gen.sample(rng);
  stream.insert(stream.end(), ex.tgt.begin(), ex.tgt.end());
  return perplexity(model, stream, tc.max_len);
}

int cmd_eval(const std::string& checkpoint, const std::string& config_path, const Common& common,
             std::ostream& out) {
  const Model model = load_checkpoint(checkpoint);
  const RunConfig rc = load_run_config(config_path);
  const TrainConfig& tc = require_train(rc, config_path);
  tc.validate(model.config());
  const fs::path dir = prepare_out_dir(common.out_dir);
  const EvalResult e = held_out_eval(model, tc);
  nlohmann::ordered_json j;
  j["checkpoint"] = checkpoint;
  j["loss"] = e.loss;
  j["accuracy"] = e.accuracy;
  if (model.config().task == Task::lm) j["perplexity"] = held_out_perplexity(model, tc);
  write_text(dir / "eval.json", j.dump(2) + "\n");
  RunManifest{"eval", config_path, tc.seed, dir, {"eval.json"}}.write();
  fmt::print(out, "{}\n", j.dump(2));
  return kExitOk;
}

struct DecodeArgs {
  std::string checkpoint;
  std::string input;
  std::string config;
  std::size_t count = 8;
  std::size_t beam = 4;
  double lenpen = 0.6;
  std::size_t max_len = 0;
  bool greedy = false;
};

int cmd_decode(const DecodeArgs& a, const Common& common, std::ostream& out) {
  const Model model = load_checkpoint(a.checkpoint);
  if (model.config().task != Task::seq2seq) throw ConfigError("decode: checkpoint is not a seq2seq model");
  std::vector<TokenSeq> sources;
  std::uint64_t seed = 0;
  if (!a.input.empty()) {
    std::ifstream in(a.input);
    if (!in) throw IoError("cannot read " + a.input);
    std::string line;
    while (std::getline(in, line)) {
      TokenSeq s = parse_tokens(line);
      if (!s.empty()) sources.push_back(std::move(s));
    }
  } else if (!a.config.empty()) {
    const RunConfig rc = load_run_config(a.config);
    const TrainConfig& tc = require_train(rc, a.config);
    tc.validate(model.config());
    const TaskGenerator gen(tc.task, model.config().vocab_tgt, tc.min_len, tc.max_len);
    seed = tc.seed;
    Rng rng(tc.seed ^ 0xdec0deULL);
    for (std::size_t i = 0; i < a.count; ++i) sources.push_back(gen.sample(rng).src);
  } else {
    throw ConfigError("decode: give --input or --config");
  }
  const fs::path dir = prepare_out_dir(common.out_dir);
  std::string text;
  for (TokenSeq src : sources) {
    if (src.empty() || src.back() != kEosId) src.push_back(kEosId);
    check_ids(src, model.config().vocab_src, "decode input");
    const std::size_t max_len = a.max_len > 0 ? a.max_len : 2 * src.size() + 10;
    const DecodeResult r = a.greedy ? greedy_decode(seq2seq_scorer(model, src), max_len)
                                    : beam_search(model, src, a.beam, a.lenpen, max_len);
    text += join_tokens(r.tokens);
    if (r.hit_max_len) text += " [max_len]";
    text += '\n';
  }
  write_text(dir / "decode.txt", text);
  RunManifest{"decode", a.config, seed, dir, {"decode.txt"}}.write();
  out << text;
  return kExitOk;
}

int cmd_attn_export(const std::string& checkpoint, const std::string& src, const std::string& tgt,
                    std::size_t layer, const Common& common, std::ostream& out) {
  const Model model = load_checkpoint(checkpoint);
  TokenSeq src_ids = parse_tokens(src);
  TokenSeq tgt_ids = parse_tokens(tgt);
  if (tgt_ids.empty()) throw ConfigError("attn-export: --tgt is required");
  if (model.config().task == Task::seq2seq) {
    if (src_ids.empty()) throw ConfigError("attn-export: --src is required for seq2seq models");
    check_ids(src_ids, model.config().vocab_src, "attn-export --src");
  }
  check_ids(tgt_ids, model.config().vocab_tgt, "attn-export --tgt");
  const std::vector<AttentionMap> maps = export_attention(model, src_ids, tgt_ids, layer);
  const fs::path dir = prepare_out_dir(common.out_dir);
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const AttentionMap& m : maps) {
    j.push_back(to_json(m));
    if (m.rows == m.cols) {
      fmt::print(out, "layer {} {:<9} diagonal mass b=0 {:.4f} b=1 {:.4f} b=2 {:.4f}\n", m.layer,
                 to_string(m.kind), diagonal_mass(m, 0), diagonal_mass(m, 1), diagonal_mass(m, 2));
    } else {
      fmt::print(out, "layer {} {:<9} {}x{}\n", m.layer, to_string(m.kind), m.rows, m.cols);
    }
  }
  write_text(dir / "attention.json", j.dump(2) + "\n");
  RunManifest{"attn-export", "", 0, dir, {"attention.json"}}.write();
  return kExitOk;
}

struct CompressArgs {
  std::string checkpoint;
  unsigned bits = 8;
  std::string sparsity_file;
  double target_sparsity = -1.0;
  std::string config;
  std::size_t iters = 100;
  std::uint64_t seed = 1;
};

int cmd_compress(const CompressArgs& a, const Common& common, std::ostream& out) {
  Model model = load_checkpoint(a.checkpoint);
  nlohmann::ordered_json report;
  std::map<std::string, double> sparsity;
  if (!a.sparsity_file.empty()) {
    std::ifstream in(a.sparsity_file);
    if (!in) throw IoError("cannot read " + a.sparsity_file);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(a.sparsity_file + ": " + e.what());
    }
    sparsity = sparsity_from_json(j);
  } else if (a.target_sparsity >= 0.0) {
    if (a.config.empty()) throw ConfigError("compress: --target-sparsity needs --config for the eval data");
    const RunConfig rc = load_run_config(a.config);
    const TrainConfig& tc = require_train(rc, a.config);
    tc.validate(model.config());
    const TaskGenerator gen(tc.task, model.config().vocab_tgt, tc.min_len, tc.max_len);
    const Batch data = eval_batch(gen, tc.eval_sequences, tc.seed ^ 0x5e45ULL);
    const SensitivityProfile profile =
        sensitivity_scan(model, [&] { return evaluate(model, data).loss; }, default_sparsity_grid());
    sparsity = allocate_sparsity(profile, a.target_sparsity);
    report["sensitivity"] = to_json(profile);
  }
  Rng rng(a.seed);
  const std::vector<CompressedLayer> layers = compress_model(model, sparsity, a.bits, rng, a.iters);
  const SizeReport size = compressed_size(model, layers);
  const fs::path dir = prepare_out_dir(common.out_dir);
  save_compressed(model, layers, dir / "model.ltq");
  const auto file_bytes = fs::file_size(dir / "model.ltq");

  report["bits"] = a.bits;
  report["sparsity"] = sparsity;
  report["layer_bytes"] = size.layer_bytes;
  report["layer_dense_bytes"] = size.layer_dense_bytes;
  report["raw_bytes"] = size.raw_bytes;
  report["ratio"] = size.ratio;
  report["model_ratio"] = size.model_ratio;
  report["file_bytes"] = file_bytes;
  write_text(dir / "compress.json", report.dump(2) + "\n");
  RunManifest{"compress", a.config, a.seed, dir, {"model.ltq", "compress.json"}}.write();
  fmt::print(out, "compressed layers {} -> {} bytes (ratio {:.3f}); whole model ratio {:.3f}; file {} bytes\n",
             size.layer_dense_bytes, size.layer_bytes, size.ratio, size.model_ratio, file_bytes);
  return kExitOk;
}

int cmd_compare(const std::string& path_a, const std::string& path_b, const std::string& ckpt_a,
                const std::string& ckpt_b, std::size_t n, const Common& common, std::ostream& out) {
  struct Row {
    std::string name;
    RunConfig rc;
    CostReport report;
    GateResult gate;
    std::optional<double> eval_loss;
  };
  std::vector<Row> rows;
  const std::vector<std::pair<std::string, std::string>> inputs{{path_a, ckpt_a}, {path_b, ckpt_b}};
  for (const auto& [path, ckpt] : inputs) {
    Row r;
    r.name = fs::path(path).stem().string();
    r.rc = load_run_config(path);
    r.report = profile(r.rc.model, n, n);
    r.gate = n == kMobileLength ? mobile_gate(r.report) : mobile_gate(r.report.mult_adds, r.report.params);
    if (!ckpt.empty()) {
      const Model model = load_checkpoint(ckpt);
      if (r.rc.train) r.eval_loss = held_out_eval(model, *r.rc.train).loss;
    }
    rows.push_back(std::move(r));
  }
  const fs::path dir = prepare_out_dir(common.out_dir);
  std::string table = fmt::format("{:<20} {:<16} {:>6} {:>12} {:>16} {:>6} {:>10}\n", "model", "block", "d",
                                  "params", fmt::format("mult_adds@{}", n), "gate", "eval_loss");
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const Row& r : rows) {
    const std::string loss = r.eval_loss ? fmt::format("{:.4f}", *r.eval_loss) : "-";
    table += fmt::format("{:<20} {:<16} {:>6} {:>12} {:>16} {:>6} {:>10}\n", r.name,
                         to_string(r.rc.model.block_style), r.rc.model.d_model, r.report.params,
                         r.report.mult_adds, r.gate.pass ? "pass" : "fail", loss);
    nlohmann::ordered_json row{{"model", r.name},
                               {"block", to_string(r.rc.model.block_style)},
                               {"d_model", r.rc.model.d_model},
                               {"params", r.report.params},
                               {"mult_adds", r.report.mult_adds},
                               {"n", n},
                               {"gate_pass", r.gate.pass},
                               {"gate_reasons", r.gate.reasons}};
    row["eval_loss"] = r.eval_loss ? nlohmann::ordered_json(*r.eval_loss) : nlohmann::ordered_json(nullptr);
    j.push_back(row);
  }
  write_text(dir / "compare.txt", table);
  write_text(dir / "compare.json", j.dump(2) + "\n");
  RunManifest{"compare", path_a + "," + path_b, 0, dir, {"compare.txt", "compare.json"}}.write();
  out << table;
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Lite Transformer toolkit"};
  app.require_subcommand(1);
  Common common;
  auto add_out_dir = [&common](CLI::App* sub) {
    sub->add_option("--out-dir", common.out_dir, "Directory for artifacts and manifest.json");
  };

  std::string config_path;
  std::size_t n_src = kMobileLength;
  std::size_t n_tgt = kMobileLength;
  bool gate = false;
  auto* profile_cmd = app.add_subcommand("profile", "Mult-Adds and parameter report");
  profile_cmd->add_option("config", config_path, "Config file")->required();
  profile_cmd->add_option("--n-src", n_src, "Source length")->check(CLI::PositiveNumber);
  profile_cmd->add_option("--n-tgt", n_tgt, "Target length")->check(CLI::PositiveNumber);
  profile_cmd->add_flag("--gate", gate, "Exit 2 unless the mobile constraint holds");
  add_out_dir(profile_cmd);

  std::optional<std::uint64_t> seed;
  auto* train_cmd = app.add_subcommand("train", "Train on the configured synthetic task");
  train_cmd->add_option("config", config_path, "Config file")->required();
  train_cmd->add_option("--seed", seed, "Override train.seed");
  add_out_dir(train_cmd);

  std::string checkpoint;
  auto* eval_cmd = app.add_subcommand("eval", "Held-out loss and accuracy of a checkpoint");
  eval_cmd->add_option("--checkpoint", checkpoint, "LTC1 checkpoint")->required();
  eval_cmd->add_option("--config", config_path, "Config with the task")->required();
  add_out_dir(eval_cmd);

  DecodeArgs decode;
  auto* decode_cmd = app.add_subcommand("decode", "Beam-search or greedy decoding");
  decode_cmd->add_option("--checkpoint", decode.checkpoint, "LTC1 checkpoint")->required();
  decode_cmd->add_option("--input", decode.input, "One source per line, space-separated ids");
  decode_cmd->add_option("--config", decode.config, "Sample sources from this config's task");
  decode_cmd->add_option("--count", decode.count, "Sources to sample with --config");
  decode_cmd->add_option("--beam", decode.beam, "Beam size")->check(CLI::PositiveNumber);
  decode_cmd->add_option("--lenpen", decode.lenpen, "Length penalty exponent")->check(CLI::NonNegativeNumber);
  decode_cmd->add_option("--max-len", decode.max_len, "Maximum output length (0 = 2 * source + 10)");
  decode_cmd->add_flag("--greedy", decode.greedy, "Greedy decoding");
  add_out_dir(decode_cmd);

  std::string src_text;
  std::string tgt_text;
  std::size_t layer = 0;
  auto* attn_cmd = app.add_subcommand("attn-export", "Head-averaged attention maps of one layer");
  attn_cmd->add_option("--checkpoint", checkpoint, "LTC1 checkpoint")->required();
  attn_cmd->add_option("--src", src_text, "Source ids");
  attn_cmd->add_option("--tgt", tgt_text, "Decoder input ids")->required();
  attn_cmd->add_option("--layer", layer, "Layer index");
  add_out_dir(attn_cmd);

  CompressArgs compress;
  auto* compress_cmd = app.add_subcommand("compress", "Prune and k-means quantize a checkpoint");
  compress_cmd->add_option("--checkpoint", compress.checkpoint, "LTC1 checkpoint")->required();
  compress_cmd->add_option("--bits", compress.bits, "Index width")->check(CLI::Range(1, 16));
  auto* sparsity_opt = compress_cmd->add_option("--sparsity-file", compress.sparsity_file,
                                                "JSON object of parameter name -> sparsity");
  compress_cmd->add_option("--target-sparsity", compress.target_sparsity,
                           "Global sparsity allocated from a sensitivity scan")
      ->check(CLI::Range(0.0, 0.99))
      ->excludes(sparsity_opt);
  compress_cmd->add_option("--config", compress.config, "Config with the task used for the scan");
  compress_cmd->add_option("--iters", compress.iters, "Lloyd iterations");
  compress_cmd->add_option("--seed", compress.seed, "Seed for k-means seeding");
  add_out_dir(compress_cmd);

  std::string config_b;
  std::string ckpt_a;
  std::string ckpt_b;
  std::size_t n_compare = kMobileLength;
  auto* compare_cmd = app.add_subcommand("compare", "Side-by-side cost table of two configs");
  compare_cmd->add_option("config_a", config_path, "First config")->required();
  compare_cmd->add_option("config_b", config_b, "Second config")->required();
  compare_cmd->add_option("--checkpoint-a", ckpt_a, "Checkpoint for the first config");
  compare_cmd->add_option("--checkpoint-b", ckpt_b, "Checkpoint for the second config");
  compare_cmd->add_option("--n", n_compare, "Sequence length")->check(CLI::PositiveNumber);
  add_out_dir(compare_cmd);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (profile_cmd->parsed()) return cmd_profile(config_path, n_src, n_tgt, gate, common, out);
    if (train_cmd->parsed()) return cmd_train(config_path, seed, common, out);
    if (eval_cmd->parsed()) return cmd_eval(checkpoint, config_path, common, out);
    if (decode_cmd->parsed()) return cmd_decode(decode, common, out);
    if (attn_cmd->parsed()) return cmd_attn_export(checkpoint, src_text, tgt_text, layer, common, out);
    if (compress_cmd->parsed()) return cmd_compress(compress, common, out);
    if (compare_cmd->parsed()) return cmd_compare(config_path, config_b, ckpt_a, ckpt_b, n_compare, common, out);
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace lite
