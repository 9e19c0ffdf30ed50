#include <gtest/gtest.h>

#include <filesystem>

#include "lite/cost.hpp"
#include "lite/errors.hpp"
#include "lite/kernels.hpp"
#include "lite/model.hpp"
#include "test_util.hpp"

using namespace lite;

namespace {

BlockSpec block(BlockStyle style, std::size_t d, std::size_t d_ff, std::size_t heads = 8) {
  BlockSpec s;
  s.style = style;
  s.d_model = d;
  s.d_ff = d_ff;
  s.heads = heads;
  s.kernel_size = 3;
  return s;
}

Count total(const std::vector<CostEntry>& entries) {
  Count n = 0;
  for (const auto& e : entries) n += e.mult_adds;
  return n;
}

Count category(const std::vector<CostEntry>& entries, CostCategory c) {
  Count n = 0;
  for (const auto& e : entries) n += e.category == c ? e.mult_adds : 0;
  return n;
}

TEST(CostFormulas, ReferenceValues) {
  EXPECT_EQ(attention_madds(30, 512), 32'378'880u);
  EXPECT_EQ(attention_madds_single_quadratic(30, 512), 31'918'080u);
  EXPECT_EQ(attention_madds(1, 1), 6u);
  EXPECT_EQ(ffn_madds(30, 512, 2048), 62'914'560u);
  EXPECT_EQ(ffn_madds(30, 512, 512), 2u * 30 * 512 * 512);
  EXPECT_EQ(conv_branch_madds(30, 256, 3, KernelSource::static_lightweight, 4), 3'955'200u);
  EXPECT_EQ(conv_branch_madds(30, 256, 1, KernelSource::static_lightweight, 4) + 30u * 256 * 2,
            conv_branch_madds(30, 256, 3, KernelSource::static_lightweight, 4));
  EXPECT_EQ(conv_branch_madds(30, 256, 3, KernelSource::dynamic, 4) -
                conv_branch_madds(30, 256, 3, KernelSource::static_lightweight, 4),
            30u * 256 * 4 * 3);
  EXPECT_EQ(conv_branch_madds(30, 256, 3, KernelSource::static_lightweight, 4, true) -
                conv_branch_madds(30, 256, 3, KernelSource::static_lightweight, 4),
            30u * 256 * 256);
  EXPECT_EQ(attention_madds(5, 5, 8), attention_madds(5, 8));
}

TEST(CostFormulas, ParameterCounts) {
  EXPECT_EQ(attention_params(512), 4u * (512 * 512 + 512));
  EXPECT_EQ(ffn_params(512, 2048), 512u * 2048 + 2048 + 2048 * 512 + 512);
  EXPECT_EQ(layer_norm_params(512), 1024u);
  EXPECT_EQ(conv_branch_params(8, 3, KernelSource::static_lightweight, 2), 8u * 8 + 8 + 64 + 8 + 6);
  EXPECT_EQ(conv_branch_params(8, 3, KernelSource::dynamic, 2, true), 16u * 8 + 16 + 64 + 8 + 8 * 6 + 6);
}

TEST(CostProfile, BaseBlockFfnShare) {
  const auto e = profile_block(block(BlockStyle::base_bottleneck, 512, 2048), 30, 0);
  const Count attn = category(e, CostCategory::attention);
  const Count ffn = category(e, CostCategory::ffn);
  EXPECT_EQ(attn, 32'378'880u);
  EXPECT_EQ(ffn, 62'914'560u);
  EXPECT_NEAR(static_cast<double>(ffn) / static_cast<double>(attn + ffn), 0.660, 0.001);
}

TEST(CostProfile, FlattenedBlockShiftsShareToAttention) {
  const auto e = profile_block(block(BlockStyle::flattened, 512, 512), 30, 0);
  EXPECT_GT(category(e, CostCategory::attention), category(e, CostCategory::ffn));
  EXPECT_EQ(category(e, CostCategory::ffn), 15'728'640u);
}

TEST(CostProfile, LsraCheaperThanFlattened) {
  for (std::size_t n : {1u, 10u, 30u, 100u}) {
    for (std::size_t d : {64u, 256u, 512u}) {
      BlockSpec l = block(BlockStyle::lsra, d, d, 4);
      l.kernel_size = 7;
      EXPECT_LT(total(profile_block(l, n, 0)), total(profile_block(block(BlockStyle::flattened, d, d, 4), n, 0)));
    }
  }
}

TEST(CostProfile, Monotonicity) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t heads = 1 + rng.below(4);
    const std::size_t d = 2 * heads * (1 + rng.below(8));
    BlockSpec s = block(trial % 3 == 0 ? BlockStyle::lsra : BlockStyle::flattened, d, d * (1 + rng.below(4)), heads);
    s.kernel_size = 1 + 2 * rng.below(4);
    s.conv_source = trial % 2 ? KernelSource::dynamic : KernelSource::static_lightweight;
    s.causal = s.cross_attention = trial % 5 == 0;
    const Count n = 1 + rng.below(40);
    const Count base = total(profile_block(s, n, n));
    EXPECT_LE(base, total(profile_block(s, n + 1, n)));
    BlockSpec wider = s;
    wider.d_model += 2 * heads;
    EXPECT_LE(base, total(profile_block(wider, n, n)));
    BlockSpec ff = s;
    ff.d_ff += 1;
    EXPECT_LE(base, total(profile_block(ff, n, n)));
    BlockSpec k = s;
    k.kernel_size += 2;
    EXPECT_LE(base, total(profile_block(k, n, n)));
  }
}

// The profiler must agree with the multiply-accumulate counter of a real
// forward pass, for both the model and individual blocks.
TEST(CostProfile, MatchesInstrumentedForward) {
  Rng rng(11);
  int checked = 0;
  for (int trial = 0; trial < 8; ++trial) {
    ModelConfig c;
    c.task = trial % 3 == 2 ? Task::lm : Task::seq2seq;
    const auto styles = {BlockStyle::lsra, BlockStyle::flattened, BlockStyle::base_bottleneck};
    c.block_style = *(styles.begin() + trial % 3);
    c.heads = 1 + rng.below(3);
    c.d_model = 2 * c.heads * (1 + rng.below(3));
    c.vocab_src = c.vocab_tgt = 5 + rng.below(10);
    c.n_layers_enc = c.task == Task::lm ? 0 : 1 + rng.below(2);
    c.n_layers_dec = 1 + rng.below(2);
    c.d_ff_ratio = c.block_style == BlockStyle::base_bottleneck ? 4.0 : 1.0;
    c.conv_mode = rng.below(2) ? KernelSource::dynamic : KernelSource::static_lightweight;
    c.glu_on_conv_input = rng.below(2) == 1;
    c.share_embeddings = c.task == Task::seq2seq && rng.below(2) == 1;
    if (c.block_style == BlockStyle::lsra) {
      for (std::size_t i = 0; i < std::max(c.n_layers_enc, c.n_layers_dec); ++i) {
        c.kernel_schedule.push_back(1 + 2 * rng.below(4));
      }
      if (c.task == Task::seq2seq && c.n_layers_enc != c.n_layers_dec) c.n_layers_enc = c.n_layers_dec;
      c.kernel_schedule.resize(c.n_layers_dec);
    }
    c.validate();
    const Model m = Model::build(c, rng);
    const std::size_t n_src = 1 + rng.below(12), n_tgt = 1 + rng.below(12);
    TokenSeq src(n_src), tgt(n_tgt);
    for (int& t : src) t = 3 + static_cast<int>(rng.below(c.vocab_src - 3));
    for (int& t : tgt) t = 3 + static_cast<int>(rng.below(c.vocab_tgt - 3));
    kernels::MacCounter counter;
    NoGradGuard guard;
    if (c.task == Task::lm) m.forward_lm({tgt});
    else m.forward_seq2seq({src}, {tgt});
    const CostReport r = profile(c, n_src, n_tgt);
    EXPECT_EQ(counter.count(), r.mult_adds) << to_json(c).dump();
    ++checked;
  }
  EXPECT_GE(checked, 5);
}

TEST(CostProfile, BlockMatchesInstrumentedForward) {
  Rng rng(12);
  for (BlockStyle style : {BlockStyle::lsra, BlockStyle::flattened, BlockStyle::base_bottleneck}) {
    for (bool decoder : {false, true}) {
      BlockSpec s = block(style, 16, style == BlockStyle::base_bottleneck ? 64 : 16, 2);
      s.kernel_size = 5;
      s.causal = s.cross_attention = decoder;
      s.conv_source = decoder ? KernelSource::dynamic : KernelSource::static_lightweight;
      const BlockParams p = BlockParams::init(s, rng);
      const Tensor x = lite::testing::random_tensor({7, 16}, rng, false);
      const Tensor mem = lite::testing::random_tensor({4, 16}, rng, false);
      kernels::MacCounter counter;
      apply_block(x, decoder ? &mem : nullptr, p, {});
      EXPECT_EQ(counter.count(), total(profile_block(s, 7, 4)));
    }
  }
}

TEST(CostProfile, SharesSumToOneAndTotalsAdd) {
  ModelConfig c;
  c.vocab_src = c.vocab_tgt = 1000;
  c.d_model = 128;
  c.heads = 4;
  c.n_layers_enc = c.n_layers_dec = 3;
  c.kernel_schedule = {3, 7, 15};
  c.validate();
  const CostReport r = profile(c, 30, 30);
  Count sum = 0, params = 0;
  for (const auto& e : r.entries) {
    sum += e.mult_adds;
    params += e.params;
  }
  EXPECT_EQ(sum, r.mult_adds);
  EXPECT_EQ(params, r.params);
  EXPECT_NEAR(r.shares.attention + r.shares.ffn + r.shares.conv + r.shares.other, 1.0, 1e-12);
  EXPECT_GT(r.shares.conv, 0.0);
  EXPECT_EQ(r.embedding_params, 1000u * 128 * 2);
  const auto j = to_json(r);
  EXPECT_EQ(j["mult_adds"].get<Count>(), r.mult_adds);
}

TEST(MobileGate, Examples) {
  const GateResult fail = mobile_gate(600'000'000, 8'000'000);
  EXPECT_FALSE(fail.pass);
  ASSERT_EQ(fail.reasons.size(), 1u);
  EXPECT_NE(fail.reasons[0].find("mult_adds"), std::string::npos);
  EXPECT_TRUE(mobile_gate(499'999'999, 9'999'999).pass);
  EXPECT_FALSE(mobile_gate(500'000'000, 9'999'999).pass);
  EXPECT_FALSE(mobile_gate(1, 10'000'000).pass);
  EXPECT_EQ(mobile_gate(600'000'000, 20'000'000).reasons.size(), 2u);
  // 48 GFLOPS at 50 sentences/s is 960M FLOPs, i.e. 480M Mult-Adds, per sentence.
  const Count budget = 48'000'000'000ull / 50 / 2;
  EXPECT_EQ(budget, 480'000'000u);
  EXPECT_TRUE(mobile_gate(budget, 0).pass);
  CostReport r;
  r.n_src = r.n_tgt = 20;
  EXPECT_THROW(mobile_gate(r), ContractError);
  r.n_src = r.n_tgt = 30;
  EXPECT_TRUE(mobile_gate(r).pass);
}

TEST(MobileGate, ShippedConfigs) {
  const std::filesystem::path dir = LITE_CONFIG_DIR;
  const CostReport demo = profile(load_run_config(dir / "lite-demo.json").model, 30, 30);
  EXPECT_TRUE(mobile_gate(demo).pass);
  const CostReport big = profile(load_run_config(dir / "base-big.json").model, 30, 30);
  EXPECT_FALSE(mobile_gate(big).pass);
}

}  // namespace
