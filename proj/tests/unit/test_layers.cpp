#include <gtest/gtest.h>

#include <cmath>

#include "lite/errors.hpp"
#include "lite/layers.hpp"
#include "test_util.hpp"

using namespace lite;
using lite::testing::bit_equal;
using lite::testing::random_tensor;
using lite::testing::weighted_sum;

namespace {

constexpr double kStep = 1e-5;
constexpr double kTol = 1e-5;

TEST(Linear, XavierBoundAndZeroBias) {
  Rng rng(1);
  const Linear l = Linear::init(30, 50, rng);
  const double bound = std::sqrt(6.0 / 80.0);
  for (double w : l.weight.data()) EXPECT_LE(std::abs(w), bound);
  for (double b : l.bias.data()) EXPECT_EQ(b, 0.0);
}

TEST(Embedding, PositionalEncodingValues) {
  const Tensor pe = positional_encoding(3, 4);
  EXPECT_EQ(pe.at(0, 0), 0.0);
  EXPECT_EQ(pe.at(0, 1), 1.0);
  EXPECT_NEAR(pe.at(2, 0), std::sin(2.0), 1e-15);
  EXPECT_NEAR(pe.at(2, 3), std::cos(2.0 / 100.0), 1e-15);
  EXPECT_THROW(positional_encoding(3, 5), ContractError);
  const std::vector<std::size_t> lengths{2, 3};
  const Tensor packed = positional_encoding(lengths, 4);
  for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(packed.at(2, c), pe.at(0, c));
}

TEST(Embedding, LookupScalesRows) {
  const Tensor table({4, 2}, {0, 0, 1, 2, 3, 4, 5, 6});
  const std::vector<int> ids{3, 1};
  const Tensor e = embed(ids, table, 2.0);
  EXPECT_EQ(lite::testing::to_vector(e), (std::vector<double>{10, 12, 2, 4}));
  const std::vector<int> bad{4};
  EXPECT_THROW(embed(bad, table, 1.0), IndexError);
}

TEST(Attention, EqualKeysGiveMeanOfValues) {
  const Tensor q({1, 2}, {0.3, -0.7});
  const Tensor k({3, 2}, {1, 1, 1, 1, 1, 1});
  const Tensor v({3, 2}, {1, 2, 3, 4, 5, 6});
  const Tensor out = scaled_dot_attention(q, k, v, 1, {}, nullptr);
  EXPECT_NEAR(out.at(0, 0), 3.0, 1e-12);
  EXPECT_NEAR(out.at(0, 1), 4.0, 1e-12);
}

TEST(Attention, WeightsAreRowStochastic) {
  Rng rng(2);
  const AttentionParams p = AttentionParams::init(8, 2, rng);
  const Tensor x = random_tensor({7, 8}, rng, false);
  AttentionOptions opt;
  opt.mask = AttentionMask::causal();
  opt.q_lengths = opt.kv_lengths = {3, 4};
  opt.keep_weights = true;
  const AttentionResult r = multi_head_attention(x, x, x, p, opt);
  ASSERT_EQ(r.weights.size(), 2u);
  for (const Tensor& w : r.weights) {
    const std::size_t n = w.dim(1);
    for (std::size_t h = 0; h < w.dim(0); ++h) {
      for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          const double val = w.data()[(h * n + i) * n + j];
          EXPECT_GE(val, 0.0);
          if (j > i) {
            EXPECT_EQ(val, 0.0);
          }
          s += val;
        }
        EXPECT_NEAR(s, 1.0, 1e-12);
      }
    }
  }
}

TEST(Attention, FullyMaskedRowIsRejected) {
  const Tensor x = Tensor::full({2, 2}, 0.5);
  AttentionOptions opt;
  opt.mask = AttentionMask::from_matrix({1, 1, 0, 0});
  EXPECT_THROW(scaled_dot_attention(x, x, x, 1, opt, nullptr), ContractError);
}

TEST(Attention, ShapeErrors) {
  Rng rng(3);
  const AttentionParams p = AttentionParams::init(8, 2, rng);
  EXPECT_THROW(multi_head_attention(Tensor::zeros({3, 6}), Tensor::zeros({3, 6}), Tensor::zeros({3, 6}), p),
               DimensionError);
  EXPECT_THROW(AttentionParams::init(10, 4, rng), ContractError);
}

// Relabeling heads (permuting projection column blocks and the matching
// rows of the output projection) leaves the output unchanged.
TEST(Attention, HeadPermutationInvariance) {
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t heads = 2 + rng.below(3);
    const std::size_t hd = 1 + rng.below(4);
    const std::size_t d = heads * hd;
    const AttentionParams p = AttentionParams::init(d, heads, rng);
    std::vector<std::size_t> perm(heads);
    for (std::size_t i = 0; i < heads; ++i) perm[i] = i;
    for (std::size_t i = heads; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);

    auto permute_cols = [&](const Linear& l) {
      std::vector<double> w(l.weight.numel()), b(l.bias.numel());
      for (std::size_t r = 0; r < d; ++r) {
        for (std::size_t h = 0; h < heads; ++h) {
          for (std::size_t e = 0; e < hd; ++e) w[r * d + h * hd + e] = l.weight.at(r, perm[h] * hd + e);
        }
      }
      for (std::size_t h = 0; h < heads; ++h) {
        for (std::size_t e = 0; e < hd; ++e) b[h * hd + e] = l.bias.data()[perm[h] * hd + e];
      }
      return Linear{Tensor({d, d}, w), Tensor({d}, b)};
    };
    AttentionParams q = p;
    q.q_proj = permute_cols(p.q_proj);
    q.k_proj = permute_cols(p.k_proj);
    q.v_proj = permute_cols(p.v_proj);
    std::vector<double> wo(d * d);
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t e = 0; e < hd; ++e) {
        for (std::size_t c = 0; c < d; ++c) wo[(h * hd + e) * d + c] = p.out_proj.weight.at(perm[h] * hd + e, c);
      }
    }
    q.out_proj = Linear{Tensor({d, d}, wo), p.out_proj.bias};

    const Tensor x = random_tensor({5, d}, rng, false);
    AttentionOptions opt;
    opt.mask = trial % 2 ? AttentionMask::causal() : AttentionMask{};
    const Tensor a = multi_head_attention(x, x, x, p, opt).out;
    const Tensor b = multi_head_attention(x, x, x, q, opt).out;
    for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a.data()[i], b.data()[i], 1e-12);
  }
}

TEST(Attention, PackedSequencesDoNotInteract) {
  Rng rng(5);
  const AttentionParams p = AttentionParams::init(8, 2, rng);
  const Tensor a = random_tensor({3, 8}, rng, false);
  const Tensor b = random_tensor({4, 8}, rng, false);
  AttentionOptions packed;
  packed.q_lengths = packed.kv_lengths = {3, 4};
  const Tensor both = multi_head_attention(concat_rows({a, b}), concat_rows({a, b}), concat_rows({a, b}), p, packed).out;
  const Tensor only_b = multi_head_attention(b, b, b, p).out;
  EXPECT_TRUE(bit_equal(slice_rows(both, 3, 4).data(), only_b.data()));
}

TEST(Attention, GradientCheck) {
  Rng rng(6);
  AttentionParams p = AttentionParams::init(6, 3, rng);
  Tensor x = random_tensor({5, 6}, rng);
  Tensor mem = random_tensor({4, 6}, rng);
  for (bool cross : {false, true}) {
    AttentionOptions opt;
    if (cross) {
      opt.q_lengths = {2, 3};
      opt.kv_lengths = {1, 3};
    } else {
      opt.mask = AttentionMask::causal();
      opt.q_lengths = opt.kv_lengths = {2, 3};
    }
    const auto f = weighted_sum([&] { return multi_head_attention(x, cross ? mem : x, cross ? mem : x, p, opt).out; }, rng);
    EXPECT_LE(finite_diff_check(f, x, kStep), kTol);
    if (cross) {
      EXPECT_LE(finite_diff_check(f, mem, kStep), kTol);
    }
    EXPECT_LE(finite_diff_check(f, p.q_proj.weight, kStep), kTol);
    EXPECT_LE(finite_diff_check(f, p.k_proj.weight, kStep), kTol);
    EXPECT_LE(finite_diff_check(f, p.v_proj.bias, kStep), kTol);
    EXPECT_LE(finite_diff_check(f, p.out_proj.weight, kStep), kTol);
  }
}

TEST(Attention, DropoutGradientCheck) {
  // The dropout pattern is drawn once per forward, so reseed inside f.
  Rng rng(7);
  Tensor q = random_tensor({4, 4}, rng);
  Tensor k = random_tensor({4, 4}, rng);
  Tensor v = random_tensor({4, 4}, rng);
  const auto f = weighted_sum(
      [&] {
        Rng drop(99);
        AttentionOptions opt;
        opt.weight_dropout = {0.3, &drop};
        return scaled_dot_attention(q, k, v, 2, opt, nullptr);
      },
      rng);
  EXPECT_LE(finite_diff_check(f, q, kStep), kTol);
  EXPECT_LE(finite_diff_check(f, v, kStep), kTol);
}

TEST(Conv, HandComputedCases) {
  const Tensor x({3, 1}, {1, 2, 3});
  const Tensor ones({1, 3}, {1, 1, 1});
  EXPECT_EQ(lite::testing::to_vector(depthwise_conv1d(x, ones, false)), (std::vector<double>{3, 6, 5}));
  EXPECT_EQ(lite::testing::to_vector(depthwise_conv1d(x, ones, true)), (std::vector<double>{1, 3, 6}));
  const Tensor taps({1, 3}, {1, 10, 100});
  // Non-causal: y[t] = 1*x[t-1] + 10*x[t] + 100*x[t+1].
  EXPECT_EQ(lite::testing::to_vector(depthwise_conv1d(x, taps, false)), (std::vector<double>{210, 321, 32}));
  // Causal: y[t] = 1*x[t-2] + 10*x[t-1] + 100*x[t].
  EXPECT_EQ(lite::testing::to_vector(depthwise_conv1d(x, taps, true)), (std::vector<double>{100, 210, 321}));
}

TEST(Conv, DeltaKernelIsIdentity) {
  Rng rng(8);
  const Tensor x = random_tensor({6, 4}, rng, false);
  const Tensor delta({2, 1}, {1.0, 1.0});
  EXPECT_TRUE(bit_equal(depthwise_conv1d(x, delta, false).data(), x.data()));
}

TEST(Conv, EvenKernelAndBadGroupsRejected) {
  const Tensor x = Tensor::zeros({4, 4});
  EXPECT_THROW(depthwise_conv1d(x, Tensor::zeros({1, 2}), false), ContractError);
  EXPECT_THROW(depthwise_conv1d(x, Tensor::zeros({3, 3}), false), ContractError);
  Rng rng(9);
  EXPECT_THROW(ConvBranchParams::init(4, 4, 2, KernelSource::dynamic, false, false, rng), ContractError);
}

TEST(Conv, GroupsShareKernelRows) {
  const Tensor x({2, 4}, {1, 1, 1, 1, 2, 2, 2, 2});
  const Tensor k({2, 1}, {3, 5});
  EXPECT_EQ(lite::testing::to_vector(depthwise_conv1d(x, k, false)),
            (std::vector<double>{3, 3, 5, 5, 6, 6, 10, 10}));
}

TEST(Conv, PackedSequencesMatchSeparateCalls) {
  Rng rng(10);
  const Tensor a = random_tensor({3, 4}, rng, false);
  const Tensor b = random_tensor({5, 4}, rng, false);
  const Tensor k = random_tensor({2, 5}, rng, false);
  for (bool causal : {false, true}) {
    const std::vector<std::size_t> lengths{3, 5};
    const Tensor both = depthwise_conv1d(concat_rows({a, b}), k, causal, lengths);
    EXPECT_TRUE(bit_equal(slice_rows(both, 0, 3).data(), depthwise_conv1d(a, k, causal).data()));
    EXPECT_TRUE(bit_equal(slice_rows(both, 3, 5).data(), depthwise_conv1d(b, k, causal).data()));
  }
}

TEST(Conv, CausalOutputIgnoresFuture) {
  Rng rng(11);
  Rng rng_params(12);
  for (KernelSource src : {KernelSource::static_lightweight, KernelSource::dynamic}) {
    const ConvBranchParams p = ConvBranchParams::init(4, 5, 2, src, true, true, rng_params);
    Tensor x = random_tensor({6, 4}, rng, false);
    const Tensor y0 = conv_branch(x, p);
    Tensor x2 = x.clone();
    for (std::size_t c = 0; c < 4; ++c) x2.mutable_data()[4 * 4 + c] += 1.0;
    const Tensor y1 = conv_branch(x2, p);
    EXPECT_TRUE(bit_equal(slice_rows(y0, 0, 4).data(), slice_rows(y1, 0, 4).data()));
    EXPECT_FALSE(bit_equal(slice_rows(y0, 4, 2).data(), slice_rows(y1, 4, 2).data()));
  }
}

TEST(Conv, LightweightKernelsAreSoftmaxNormalized) {
  Rng rng(13);
  ConvBranchParams p = ConvBranchParams::init(4, 3, 2, KernelSource::static_lightweight, false, false, rng);
  // Constant input away from the borders gives sum of taps = 1 per channel.
  const Tensor x = Tensor::full({5, 4}, 2.0);
  const Tensor y = lightweight_conv(x, p);
  for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(y.at(2, c), 2.0, 1e-12);
}

TEST(Conv, GradientChecks) {
  Rng rng(14);
  Tensor x = random_tensor({7, 4}, rng);
  Tensor k = random_tensor({2, 3}, rng);
  Tensor kd = random_tensor({7, 2, 3}, rng);
  const std::vector<std::size_t> lengths{3, 4};
  for (bool causal : {false, true}) {
    const auto f = weighted_sum([&] { return depthwise_conv1d(x, k, causal, lengths); }, rng);
    EXPECT_LE(finite_diff_check(f, x, kStep), kTol);
    EXPECT_LE(finite_diff_check(f, k, kStep), kTol);
    const auto g = weighted_sum([&] { return dynamic_depthwise_conv1d(x, kd, 2, causal, lengths); }, rng);
    EXPECT_LE(finite_diff_check(g, x, kStep), kTol);
    EXPECT_LE(finite_diff_check(g, kd, kStep), kTol);
  }
}

TEST(Conv, BranchGradientChecks) {
  Rng rng(15);
  for (KernelSource src : {KernelSource::static_lightweight, KernelSource::dynamic}) {
    for (bool glu_input : {false, true}) {
      ConvBranchParams p = ConvBranchParams::init(4, 3, 2, src, glu_input, true, rng);
      Tensor x = random_tensor({5, 4}, rng);
      const std::vector<std::size_t> lengths{2, 3};
      const auto f = weighted_sum([&] { return conv_branch(x, p, lengths); }, rng);
      EXPECT_LE(finite_diff_check(f, x, kStep), kTol);
      EXPECT_LE(finite_diff_check(f, p.in_proj.weight, kStep), kTol);
      EXPECT_LE(finite_diff_check(f, p.out_proj.weight, kStep), kTol);
      if (src == KernelSource::dynamic) {
        EXPECT_LE(finite_diff_check(f, p.predictor.weight, kStep), kTol);
        EXPECT_LE(finite_diff_check(f, p.predictor.bias, kStep), kTol);
      } else {
        EXPECT_LE(finite_diff_check(f, p.kernel, kStep), kTol);
      }
    }
  }
}

TEST(Ffn, GradientCheckAndNorm) {
  Rng rng(16);
  FfnParams p = FfnParams::init(4, 8, rng);
  Tensor x = random_tensor({3, 4}, rng);
  const auto f = weighted_sum([&] { return ffn(x, p); }, rng);
  EXPECT_LE(finite_diff_check(f, x, kStep), kTol);
  EXPECT_LE(finite_diff_check(f, p.fc1.weight, kStep), kTol);
  EXPECT_LE(finite_diff_check(f, p.fc2.bias, kStep), kTol);
  LayerNormParams ln = LayerNormParams::init(4);
  const auto g = weighted_sum([&] { return ln(x); }, rng);
  EXPECT_LE(finite_diff_check(g, x, kStep), kTol);
  EXPECT_LE(finite_diff_check(g, ln.gamma, kStep), kTol);
  EXPECT_LE(finite_diff_check(g, ln.beta, kStep), kTol);
}

TEST(Glu, ValuesAndGradient) {
  const Tensor x({1, 2}, {3.0, 0.0});
  EXPECT_NEAR(glu(x).item(), 1.5, 1e-15);
  EXPECT_THROW(glu(Tensor::zeros({2, 3})), DimensionError);
  Rng rng(17);
  Tensor y = random_tensor({3, 6}, rng);
  const auto f = weighted_sum([&] { return glu(y); }, rng);
  EXPECT_LE(finite_diff_check(f, y, kStep), kTol);
}

}  // namespace
