#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "lite/cli.hpp"

using namespace lite;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / "lite_test_cli";
    fs::remove_all(root_);
    fs::create_directories(root_);
    json model{{"vocab_src", 11}, {"vocab_tgt", 11}, {"d_model", 32}, {"heads", 2}, {"n_layers_enc", 1},
               {"n_layers_dec", 1}, {"block_style", "lsra"}, {"kernel_schedule", {3}}};
    json train{{"task", "copy"}, {"max_len", 6}, {"batch_tokens", 64}, {"steps", 30}, {"warmup_steps", 10},
               {"eval_every", 10}, {"eval_sequences", 8}, {"seed", 3}};
    std::ofstream(root_ / "lsra.json") << json{{"model", model}, {"train", train}}.dump();
    model["block_style"] = "base_bottleneck";
    model.erase("kernel_schedule");
    std::ofstream(root_ / "base.json") << json{{"model", model}, {"train", train}}.dump();
    const CliRun r = cli({"train", (root_ / "lsra.json").string(), "--out-dir", (root_ / "train").string()});
    ASSERT_EQ(r.code, 0) << r.err;
  }

  static fs::path ckpt() { return root_ / "train" / "model.ltc"; }
  static fs::path dir(const std::string& name) { return root_ / name; }

  static inline fs::path root_;
};

TEST(Sha256, KnownDigest) {
  const fs::path p = fs::temp_directory_path() / "lite_test_abc.txt";
  std::ofstream(p, std::ios::binary) << "abc";
  EXPECT_EQ(sha256_file(p), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(cli({}).code, 1);
  EXPECT_EQ(cli({"bogus"}).code, 1);
  EXPECT_EQ(cli({"profile"}).code, 1);
  EXPECT_EQ(cli({"profile", "/nonexistent.json"}).code, 1);
  EXPECT_EQ(cli({"--help"}).code, 0);
}

TEST_F(CliTest, ProfileGateExitCodes) {
  const fs::path configs = LITE_CONFIG_DIR;
  const CliRun pass = cli({"profile", (configs / "lite-demo.json").string(), "--gate", "--out-dir",
                        dir("profile_demo").string()});
  EXPECT_EQ(pass.code, 0) << pass.err;
  EXPECT_NE(pass.out.find("mobile gate: pass"), std::string::npos);
  const CliRun fail = cli({"profile", (configs / "base-big.json").string(), "--gate", "--out-dir",
                        dir("profile_big").string()});
  EXPECT_EQ(fail.code, 2);
  EXPECT_FALSE(read_json(dir("profile_big") / "profile.json")["gate"]["pass"].get<bool>());
  EXPECT_EQ(cli({"profile", (configs / "lite-demo.json").string(), "--n-src", "0"}).code, 1);
  // The gate is defined at 30 tokens.
  EXPECT_EQ(cli({"profile", (configs / "lite-demo.json").string(), "--gate", "--n-src", "20", "--out-dir",
                 dir("profile_20").string()})
                .code,
            1);
  EXPECT_EQ(cli({"profile", (configs / "lite-demo.json").string(), "--n-src", "20", "--out-dir",
                 dir("profile_20").string()})
                .code,
            0);
}

TEST_F(CliTest, TrainWritesArtifactsAndManifest) {
  const json m = read_json(dir("train") / "manifest.json");
  EXPECT_EQ(m["command"], "train");
  EXPECT_EQ(m["seed"], 3);
  ASSERT_EQ(m["artifacts"].size(), 3u);
  for (const auto& a : m["artifacts"]) {
    EXPECT_EQ(a["sha256"], sha256_file(dir("train") / a["path"].get<std::string>()));
  }
  const std::string metrics = slurp(dir("train") / "metrics.jsonl");
  std::istringstream lines(metrics);
  std::string line;
  std::size_t n = 0;
  while (std::getline(lines, line)) {
    const json j = json::parse(line);
    EXPECT_TRUE(j.contains("loss") && j.contains("lr") && j.contains("grad_norm") && j.contains("tokens_per_s"));
    ++n;
  }
  EXPECT_EQ(n, read_json(dir("train") / "train.json")["updates"].get<std::size_t>());
}

TEST_F(CliTest, TrainIsDeterministic) {
  const CliRun r = cli({"train", (root_ / "lsra.json").string(), "--out-dir", dir("train2").string()});
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(slurp(dir("train2") / "model.ltc"), slurp(ckpt()));
}

TEST_F(CliTest, EvalReportsLossAndAccuracy) {
  const CliRun r = cli({"eval", "--checkpoint", ckpt().string(), "--config", (root_ / "lsra.json").string(),
                     "--out-dir", dir("eval").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = read_json(dir("eval") / "eval.json");
  EXPECT_GT(j["loss"].get<double>(), 0.0);
  EXPECT_GE(j["accuracy"].get<double>(), 0.0);
  EXPECT_EQ(cli({"eval", "--checkpoint", (root_ / "missing.ltc").string(), "--config",
                 (root_ / "lsra.json").string()})
                .code,
            1);
}

TEST_F(CliTest, BeamOneEqualsGreedyByteForByte) {
  const std::string cfg = (root_ / "lsra.json").string();
  ASSERT_EQ(cli({"decode", "--checkpoint", ckpt().string(), "--config", cfg, "--count", "10", "--beam", "1",
                 "--out-dir", dir("beam1").string()})
                .code,
            0);
  ASSERT_EQ(cli({"decode", "--checkpoint", ckpt().string(), "--config", cfg, "--count", "10", "--greedy",
                 "--out-dir", dir("greedy").string()})
                .code,
            0);
  const std::string a = slurp(dir("beam1") / "decode.txt");
  EXPECT_EQ(std::count(a.begin(), a.end(), '\n'), 10);
  EXPECT_EQ(a, slurp(dir("greedy") / "decode.txt"));

  std::ofstream(root_ / "input.txt") << "3 4 5\n6 7\n";
  const CliRun r = cli({"decode", "--checkpoint", ckpt().string(), "--input", (root_ / "input.txt").string(),
                     "--out-dir", dir("beam4").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ofstream(root_ / "bad.txt") << "3 40\n";
  EXPECT_EQ(cli({"decode", "--checkpoint", ckpt().string(), "--input", (root_ / "bad.txt").string(), "--out-dir",
                 dir("bad").string()})
                .code,
            1);
}

TEST_F(CliTest, AttentionExportRowsSumToOne) {
  const CliRun r = cli({"attn-export", "--checkpoint", ckpt().string(), "--src", "3 4 5 2", "--tgt", "1 3 4 5",
                     "--out-dir", dir("attn").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const json maps = read_json(dir("attn") / "attention.json");
  ASSERT_EQ(maps.size(), 3u);
  for (const auto& m : maps) {
    const std::size_t rows = m["rows"], cols = m["cols"];
    const auto w = m["weights"].get<std::vector<double>>();
    ASSERT_EQ(w.size(), rows * cols);
    for (std::size_t i = 0; i < rows; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < cols; ++j) s += w[i * cols + j];
      EXPECT_NEAR(s, 1.0, 1e-9);
    }
  }
  EXPECT_EQ(cli({"attn-export", "--checkpoint", ckpt().string(), "--src", "3 2", "--tgt", "1", "--layer", "5"}).code,
            1);
}

TEST_F(CliTest, CompressWithSparsityFileAndTarget) {
  std::ofstream(root_ / "sparsity.json") << R"({"encoder.layers.0.ffn.fc1.weight": 0.5})";
  CliRun r = cli({"compress", "--checkpoint", ckpt().string(), "--bits", "6", "--sparsity-file",
               (root_ / "sparsity.json").string(), "--out-dir", dir("compress").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = read_json(dir("compress") / "compress.json");
  EXPECT_GT(j["ratio"].get<double>(), 1.0);
  EXPECT_EQ(j["file_bytes"].get<std::uintmax_t>(), fs::file_size(dir("compress") / "model.ltq"));
  r = cli({"compress", "--checkpoint", ckpt().string(), "--bits", "8", "--target-sparsity", "0.3", "--config",
           (root_ / "lsra.json").string(), "--out-dir", dir("compress_t").string()});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(cli({"compress", "--checkpoint", ckpt().string(), "--bits", "17"}).code, 1);
}

TEST_F(CliTest, CompareShowsLsraCheaperAtMatchedWidth) {
  const CliRun r = cli({"compare", (root_ / "base.json").string(), (root_ / "lsra.json").string(), "--checkpoint-b",
                     ckpt().string(), "--out-dir", dir("compare").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const json rows = read_json(dir("compare") / "compare.json");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0]["d_model"], rows[1]["d_model"]);
  EXPECT_LT(rows[1]["mult_adds"].get<std::uint64_t>(), rows[0]["mult_adds"].get<std::uint64_t>());
  EXPECT_TRUE(rows[0]["eval_loss"].is_null());
  EXPECT_FALSE(rows[1]["eval_loss"].is_null());
  EXPECT_EQ(rows[0]["n"], 30);
  EXPECT_FALSE(slurp(dir("compare") / "compare.txt").empty());
}

}  // namespace
