#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "crowdmac/errors.hpp"
#include "crowdmac/model.hpp"
#include "test_support.hpp"

namespace crowdmac {
namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.embed_dim = 16;
  c.encoder_depth = 1;
  c.decoder_dim = 16;
  c.decoder_depth = 1;
  c.heads = 2;
  return c;
}

TokenField random_tokens(std::uint64_t seed, const CubeGrid& g = {}) {
  Rng rng(seed);
  return cubify(testing::random_sequence(rng, g.frames, g.width, g.height), g);
}

MaskPlan random_plan(std::uint64_t seed, MaskTask task = MaskTask::Interpolation) {
  Rng rng(seed);
  const DensityTable t{5, 100, std::vector<double>(500, 1.0)};
  return build_mask_plan(task, t, TDMConfig{}, 5.0, 2, rng);
}

TEST(ModelConfig, Validation) {
  ModelConfig c;
  EXPECT_NO_THROW(c.validate());
  c.embed_dim = 66;  // not divisible by 4 heads
  EXPECT_THROW(c.validate(), ParameterError);
  c = {};
  c.obs_frames = 6;  // not a multiple of cube_t
  EXPECT_THROW(c.validate(), ParameterError);
  c = {};
  c.obs_frames = 20;
  EXPECT_THROW(c.validate(), ParameterError);
  c = {};
  c.heads = 0;
  EXPECT_THROW(c.validate(), ParameterError);
}

TEST(InitModel, DeterministicAndWellFormed) {
  const ModelState a = init_model(ModelConfig{}, 3);
  const ModelState b = init_model(ModelConfig{}, 3);
  EXPECT_EQ(a, b);
  EXPECT_NE(a.params, init_model(ModelConfig{}, 4).params);
  EXPECT_EQ(a.adam_m, a.params.zeros_like());
  const Tensor* head = a.params.find("decoder_pred.weight");
  ASSERT_NE(head, nullptr);
  EXPECT_EQ(head->rows, 32);
  EXPECT_EQ(head->cols, 256);
  const Tensor* mask = a.params.find("mask_token");
  ASSERT_NE(mask, nullptr);
  EXPECT_EQ(mask->rows, 1);
  EXPECT_EQ(mask->cols, 32);
  EXPECT_FALSE(mask->decay);
  EXPECT_TRUE(head->decay);
  EXPECT_FALSE(a.params.find("decoder_pred.bias")->decay);
  for (const auto& t : a.params.tensors) {
    for (const float v : t.data) ASSERT_TRUE(std::isfinite(v));
  }
}

TEST(InitModel, SingleSharedMaskToken) {
  const ModelState s = init_model(ModelConfig{}, 1);
  int count = 0;
  for (const auto& t : s.params.tensors) count += t.name.find("mask_token") != std::string::npos;
  EXPECT_EQ(count, 1);
}

TEST(EmbedTokens, ShapeAndLinearity) {
  const ModelState s = init_model(ModelConfig{}, 1);
  const TokenField x = random_tokens(2);
  const Tensor e = embed_tokens(x, s);
  EXPECT_EQ(e.rows, 500);
  EXPECT_EQ(e.cols, 64);

  TokenField x2 = x;
  for (float& v : x2.values) v *= 2.0f;
  const Tensor e2 = embed_tokens(x2, s);
  const Tensor& bias = *s.params.find("patch_embed.proj.bias");
  for (int r = 0; r < 500; ++r) {
    for (int c = 0; c < 64; ++c) {
      ASSERT_NEAR(e2.at(r, c) - bias.data[c], 2.0 * (e.at(r, c) - bias.data[c]), 1e-4);
    }
  }
}

TEST(EmbedTokens, ZeroInputZeroBiasGivesZero) {
  ModelState s = init_model(ModelConfig{}, 1);
  for (float& v : s.params.find("patch_embed.proj.bias")->data) v = 0.0f;
  TokenField x{CubeGrid{}, std::vector<float>(500 * 256, 0.0f)};
  for (const float v : embed_tokens(x, s).data) EXPECT_EQ(v, 0.0f);
}

TEST(EmbedTokens, ShapeMismatchIsRejected) {
  const ModelState s = init_model(ModelConfig{}, 1);
  const CubeGrid other{20, 40, 40, 4, 8, 8};
  EXPECT_THROW(embed_tokens(random_tokens(1, other), s), ParameterError);
}

TEST(PositionEmbedding, FactorizedAndEqualNorm) {
  const CubeGrid g;
  const auto pe = position_embedding(g, 64);
  EXPECT_EQ(pe.rows, 500);
  EXPECT_EQ(pe.cols, 64);
  // 32 channel pairs: 10 temporal, 11 per spatial axis.
  for (int c = 0; c < 20; ++c) EXPECT_EQ(pe.at(g.token_index(3, 7), c), pe.at(g.token_index(3, 88), c));
  const double norm0 = std::sqrt(std::inner_product(pe.data.begin(), pe.data.begin() + 64, pe.data.begin(), 0.0));
  for (int r = 0; r < pe.rows; ++r) {
    double n = 0;
    for (int c = 0; c < 64; ++c) n += pe.at(r, c) * pe.at(r, c);
    EXPECT_NEAR(std::sqrt(n), norm0, 1e-6);
  }
  EXPECT_NEAR(norm0, std::sqrt(32.0), 1e-12);
  EXPECT_EQ(position_embedding(g, 64), pe);
  EXPECT_THROW(position_embedding(g, 5), ParameterError);
  EXPECT_THROW(position_embedding(g, 4), ParameterError);
}

TEST(Forward, ShapeAndDeterminism) {
  const ModelState s = init_model(ModelConfig{}, 5);
  Rng rng(6);
  const DensitySequence seq = testing::random_sequence(rng, 20, 80, 80);
  const MaskPlan plan = random_plan(7);
  const TokenField a = forward(seq, plan, s);
  EXPECT_EQ(a.grid, CubeGrid{});
  EXPECT_EQ(a.values.size(), 500u * 256u);
  EXPECT_EQ(forward(seq, plan, s), a);
}

TEST(Forward, VisibleFeedOrderDoesNotMatter) {
  const ModelState s = init_model(tiny_config(), 8);
  const TokenField x = random_tokens(9);
  const MaskPlan plan = random_plan(10);
  std::vector<int> order = plan.visible_indices();
  Rng rng(11);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
  const TokenField a = forward_tokens(x, plan, s);
  const TokenField b = forward_tokens(x, plan, s, order);
  for (std::size_t i = 0; i < a.values.size(); ++i) ASSERT_NEAR(a.values[i], b.values[i], 1e-5);
  std::vector<int> wrong = order;
  wrong.pop_back();
  EXPECT_THROW(forward_tokens(x, plan, s, wrong), ParameterError);
}

TEST(Forward, EmptyVisibleSetIsDegenerate) {
  const ModelState s = init_model(tiny_config(), 1);
  MaskPlan all{5, 100, std::vector<std::uint8_t>(500, 1), MaskTask::Interpolation, 0.0};
  EXPECT_THROW(forward_tokens(random_tokens(1), all, s), DegenerateMaskError);
}

TEST(Forward, OnlyVisibleTokenValuesReachTheOutput) {
  const ModelState s = init_model(tiny_config(), 12);
  const TokenField x = random_tokens(13);
  const MaskPlan plan = random_plan(14);
  TokenField y = x;
  for (const int m : plan.masked_indices()) {
    for (float& v : y.token(m)) v = 0.9f;
  }
  EXPECT_EQ(forward_tokens(x, plan, s), forward_tokens(y, plan, s));
}

TEST(MaskedMse, Examples) {
  const TokenField x = random_tokens(15);
  const MaskPlan plan = random_plan(16);
  EXPECT_EQ(masked_mse_loss(x, x, plan), 0.0);

  MaskPlan one{5, 100, std::vector<std::uint8_t>(500, 0), MaskTask::Interpolation, 0.0};
  one.mask[123] = 1;
  TokenField y = x;
  for (float& v : y.token(123)) v += 0.25f;
  EXPECT_NEAR(masked_mse_loss(y, x, one), 0.0625, 1e-7);

  MaskPlan none{5, 100, std::vector<std::uint8_t>(500, 0), MaskTask::Interpolation, 0.0};
  EXPECT_THROW(masked_mse_loss(x, x, none), DegenerateMaskError);
}

TEST(MaskedMse, MatchesScalarLoopAndIgnoresVisible) {
  const TokenField a = random_tokens(17);
  const TokenField b = random_tokens(18);
  const MaskPlan plan = random_plan(19);
  double sum = 0;
  std::size_t count = 0;
  for (int i = 0; i < 500; ++i) {
    if (!plan.mask[static_cast<std::size_t>(i)]) continue;
    for (int k = 0; k < 256; ++k) {
      const double e = static_cast<double>(a.token(i)[k]) - b.token(i)[k];
      sum += e * e;
      ++count;
    }
  }
  const double loss = masked_mse_loss(a, b, plan);
  EXPECT_NEAR(loss, sum / static_cast<double>(count), 1e-12);

  TokenField b2 = b;
  for (const int v : plan.visible_indices()) {
    for (float& x : b2.token(v)) x = 1.0f - x;
  }
  EXPECT_EQ(masked_mse_loss(a, b2, plan), loss);
}

TEST(LossAndGradient, LossMatchesForward) {
  const ModelState s = init_model(tiny_config(), 20);
  const TokenField x = random_tokens(21);
  const MaskPlan plan = random_plan(22);
  const LossAndGradient lg = loss_and_gradient(s, x, plan);
  EXPECT_NEAR(lg.loss, masked_mse_loss(forward_tokens(x, plan, s), x, plan), 1e-6);
  EXPECT_EQ(lg.grads.tensors.size(), s.params.tensors.size());
}

TEST(LossAndGradient, DoubleAndFloatAgree) {
  const ModelState s = init_model(tiny_config(), 23);
  const TokenField x = random_tokens(24);
  const MaskPlan plan = random_plan(25, MaskTask::PastPrediction);
  const LossAndGradient lg = loss_and_gradient(s, x, plan);
  BasicParameterSet<double> grads = s.params.cast<double>().zeros_like();
  const double loss = loss_and_gradient(s.config, s.params.cast<double>(), x, plan, &grads);
  EXPECT_NEAR(loss, lg.loss, 1e-6 * loss);
  for (std::size_t t = 0; t < grads.tensors.size(); ++t) {
    for (std::size_t k = 0; k < grads.tensors[t].data.size(); ++k) {
      ASSERT_NEAR(grads.tensors[t].data[k], lg.grads.tensors[t].data[k], 1e-5) << grads.tensors[t].name;
    }
  }
}

TEST(LossAndGradient, MaskTokenGradientIsSharedAcrossPositions) {
  // The mask token gradient is the sum over masked positions, so it is nonzero even though
  // the parameter is a single row.
  const ModelState s = init_model(tiny_config(), 26);
  const LossAndGradient lg = loss_and_gradient(s, random_tokens(27), random_plan(28));
  const Tensor* g = lg.grads.find("mask_token");
  ASSERT_NE(g, nullptr);
  EXPECT_EQ(g->rows, 1);
  double norm = 0;
  for (const float v : g->data) norm += v * v;
  EXPECT_GT(norm, 0.0);
}

TEST(PredictFuture, ShapeRangeAndDeterminism) {
  const ModelState s = init_model(ModelConfig{}, 29);
  Rng rng(30);
  const DensitySequence obs = testing::random_sequence(rng, 8, 80, 80);
  const DensitySequence f = predict_future(obs, s);
  EXPECT_EQ(f.length(), 12);
  EXPECT_EQ(f.width(), 80);
  EXPECT_EQ(f.height(), 80);
  for (const auto& fr : f.frames) {
    for (const float v : fr.values()) {
      ASSERT_GE(v, 0.0f);
      ASSERT_LE(v, 1.0f);
    }
  }
  EXPECT_EQ(predict_future(obs, s), f);
}

TEST(PredictFuture, GeometryMismatchIsRejected) {
  const ModelState s = init_model(ModelConfig{}, 31);
  EXPECT_THROW(predict_future(DensitySequence(7, 80, 80), s), ParameterError);
  EXPECT_THROW(predict_future(DensitySequence(8, 64, 80), s), ParameterError);
}

}  // namespace
}  // namespace crowdmac
