#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "crowdmac/errors.hpp"
#include "crowdmac/optimizer.hpp"

namespace crowdmac {
namespace {

ParameterSet single(std::vector<float> values, bool decay = true) {
  ParameterSet p;
  const int n = static_cast<int>(values.size());
  p.tensors.push_back(Tensor{"w", 1, n, std::move(values), decay});
  return p;
}

TEST(LearningRate, WarmupThenCosine) {
  const double peak = 1e-3;
  const std::int64_t total = 1000;
  const std::int64_t warmup = 50;
  EXPECT_NEAR(learning_rate(0, total, warmup, peak), peak / warmup, 1e-15);
  EXPECT_LT(learning_rate(0, total, warmup, peak), learning_rate(warmup - 1, total, warmup, peak));
  EXPECT_DOUBLE_EQ(learning_rate(warmup - 1, total, warmup, peak), peak);
  EXPECT_DOUBLE_EQ(learning_rate(warmup, total, warmup, peak), peak);
  EXPECT_LE(learning_rate(total - 1, total, warmup, peak), 1e-8 * peak);
  double prev = peak;
  for (std::int64_t s = warmup; s < total; ++s) {
    const double lr = learning_rate(s, total, warmup, peak);
    ASSERT_LE(lr, prev + 1e-18);
    prev = lr;
  }
  const std::int64_t mid = warmup + (total - 1 - warmup) / 2;
  EXPECT_NEAR(learning_rate(mid, total, warmup, peak), 0.5 * peak, 1e-3 * peak);
}

TEST(LearningRate, NoWarmupAndDegenerateTotals) {
  EXPECT_DOUBLE_EQ(learning_rate(0, 100, 0, 2.0), 2.0);
  EXPECT_EQ(learning_rate(0, 0, 0, 2.0), 0.0);
  EXPECT_EQ(learning_rate(500, 100, 10, 2.0), learning_rate(99, 100, 10, 2.0));
}

TEST(AdamW, ZeroGradientOnlyAppliesDecay) {
  ParameterSet p = single({1.0f, -2.0f, 0.5f});
  ParameterSet m = p.zeros_like();
  ParameterSet v = p.zeros_like();
  const ParameterSet g = p.zeros_like();
  AdamWOptions opt;
  opt.weight_decay = 0.1;
  adamw_update(p, g, m, v, 1, 0.01, opt);
  EXPECT_FLOAT_EQ(p.tensors[0].data[0], 1.0f * (1.0f - 0.001f));
  EXPECT_FLOAT_EQ(p.tensors[0].data[1], -2.0f * (1.0f - 0.001f));

  ParameterSet b = single({1.0f}, false);
  ParameterSet bm = b.zeros_like();
  ParameterSet bv = b.zeros_like();
  adamw_update(b, b.zeros_like(), bm, bv, 1, 0.01, opt);
  EXPECT_EQ(b.tensors[0].data[0], 1.0f);
}

TEST(AdamW, FirstStepMovesByLearningRate) {
  ParameterSet p = single({0.0f, 0.0f}, false);
  ParameterSet m = p.zeros_like();
  ParameterSet v = p.zeros_like();
  adamw_update(p, single({3.0f, -0.01f}), m, v, 1, 0.1, {});
  EXPECT_NEAR(p.tensors[0].data[0], -0.1, 1e-6);
  EXPECT_NEAR(p.tensors[0].data[1], 0.1, 1e-4);
}

TEST(AdamW, QuadraticConverges) {
  const std::vector<float> target{0.3f, -1.2f, 2.0f, 0.0f};
  ParameterSet p = single({0.0f, 0.0f, 0.0f, 0.0f});
  ParameterSet m = p.zeros_like();
  ParameterSet v = p.zeros_like();
  AdamWOptions opt;
  opt.weight_decay = 0.0;
  const std::int64_t total = 5000;
  for (std::int64_t s = 0; s < total; ++s) {
    ParameterSet g = p;
    for (std::size_t k = 0; k < target.size(); ++k) g.tensors[0].data[k] = 2.0f * (p.tensors[0].data[k] - target[k]);
    adamw_update(p, g, m, v, s + 1, learning_rate(s, total, 100, 0.05), opt);
  }
  for (std::size_t k = 0; k < target.size(); ++k) EXPECT_NEAR(p.tensors[0].data[k], target[k], 1e-6);
}

TEST(AdamW, NonFiniteGradientNamesTensorAndLeavesStateUntouched) {
  ParameterSet p = single({1.0f, 2.0f});
  p.tensors.push_back(Tensor{"encoder.blocks.0.attn.qkv.weight", 1, 2, {0.0f, 0.0f}, true});
  ParameterSet g = p.zeros_like();
  g.tensors[1].data[1] = std::numeric_limits<float>::quiet_NaN();
  ParameterSet m = p.zeros_like();
  ParameterSet v = p.zeros_like();
  const ParameterSet before = p;
  try {
    adamw_update(p, g, m, v, 1, 0.1, {});
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("encoder.blocks.0.attn.qkv.weight"), std::string::npos);
  }
  EXPECT_EQ(p, before);
  g.tensors[1].data[1] = std::numeric_limits<float>::infinity();
  EXPECT_THROW(adamw_update(p, g, m, v, 1, 0.1, {}), NumericalError);
}

TEST(AdamW, LayoutAndStepValidation) {
  ParameterSet p = single({1.0f});
  ParameterSet m = p.zeros_like();
  ParameterSet v = p.zeros_like();
  EXPECT_THROW(adamw_update(p, ParameterSet{}, m, v, 1, 0.1, {}), ParameterError);
  EXPECT_THROW(adamw_update(p, p.zeros_like(), m, v, 0, 0.1, {}), ParameterError);
}

}  // namespace
}  // namespace crowdmac
