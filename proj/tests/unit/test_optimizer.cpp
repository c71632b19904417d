#include "motor/optimizer.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

namespace motor {
namespace {

TEST(AdamW, FirstStepMovesByLearningRate) {
  // With bias correction the first update is lr * g / (|g| + eps).
  ParamStore s;
  Parameter& p = s.add("w", Matrix::Constant(1, 2, 1.0), false);
  p.grad = Matrix(1, 2);
  p.grad << 0.5, -2.0;
  AdamW opt(AdamWConfig{0.1, 0.9, 0.999, 1e-8, 0.0});
  opt.step(s);
  EXPECT_NEAR(p.value(0, 0), 1.0 - 0.1 * 0.5 / (0.5 + 1e-8), 1e-12);
  EXPECT_NEAR(p.value(0, 1), 1.0 + 0.1 * 2.0 / (2.0 + 1e-8), 1e-12);
}

TEST(AdamW, MatchesScalarOracleOverSteps) {
  ParamStore s;
  Parameter& p = s.add("w", Matrix::Constant(1, 1, 2.0), true);
  const AdamWConfig cfg{0.05, 0.9, 0.99, 1e-8, 0.1};
  AdamW opt(cfg);
  double x = 2.0, m = 0, v = 0;
  for (int t = 1; t <= 20; ++t) {
    const double g = 2 * x - 1;  // d/dx (x^2 - x)
    p.grad = Matrix::Constant(1, 1, g);
    opt.step(s);
    m = cfg.beta1 * m + (1 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1 - cfg.beta2) * g * g;
    x *= 1 - cfg.lr * cfg.weight_decay;
    x -= cfg.lr * (m / (1 - std::pow(cfg.beta1, t))) / (std::sqrt(v / (1 - std::pow(cfg.beta2, t))) + cfg.eps);
    EXPECT_NEAR(p.value(0, 0), x, 1e-12) << t;
  }
}

TEST(AdamW, DecayOnlyOnDecayParameters) {
  ParamStore s;
  Parameter& a = s.add("a", Matrix::Constant(1, 1, 1.0), true);
  Parameter& b = s.add("b", Matrix::Constant(1, 1, 1.0), false);
  a.grad = b.grad = Matrix::Zero(1, 1);
  AdamW opt(AdamWConfig{0.1, 0.9, 0.999, 1e-8, 0.5});
  opt.step(s);
  EXPECT_NEAR(a.value(0, 0), 0.95, 1e-15);
  EXPECT_EQ(b.value(0, 0), 1.0);
}

TEST(AdamW, FrozenPrefixesAreUntouched) {
  ParamStore s;
  Parameter& a = s.add("image.w", Matrix::Constant(1, 1, 1.0), true);
  Parameter& b = s.add("text.w", Matrix::Constant(1, 1, 1.0), true);
  a.grad = b.grad = Matrix::Constant(1, 1, 1.0);
  AdamW opt(AdamWConfig{});
  opt.set_trainable({"image."});
  opt.step(s);
  EXPECT_LT(a.value(0, 0), 1.0);
  EXPECT_EQ(b.value(0, 0), 1.0);
  EXPECT_TRUE(opt.is_trainable("image.enc.0"));
  EXPECT_FALSE(opt.is_trainable("text.enc.0"));
}

TEST(AdamW, WarmupRampsLearningRate) {
  ParamStore s;
  Parameter& p = s.add("w", Matrix::Zero(1, 1), false);
  AdamWConfig cfg;
  cfg.lr = 1.0;
  cfg.warmup_steps = 4;
  AdamW opt(cfg);
  std::vector<double> lrs;
  for (int i = 0; i < 6; ++i) {
    p.grad = Matrix::Constant(1, 1, 1.0);
    lrs.push_back(opt.step(s));
  }
  EXPECT_EQ(lrs, (std::vector<double>{0.25, 0.5, 0.75, 1.0, 1.0, 1.0}));
}

TEST(AdamW, GradientClippingScalesGlobalNorm) {
  // A clipped run must match an unclipped run fed the pre-scaled gradient.
  ParamStore s1, s2;
  Parameter& a = s1.add("w", Matrix::Zero(1, 2), false);
  Parameter& b = s2.add("w", Matrix::Zero(1, 2), false);
  AdamWConfig clipped;
  clipped.grad_clip = 1.0;
  clipped.lr = 1.0;
  AdamWConfig plain = clipped;
  plain.grad_clip = 0.0;
  AdamW o1(clipped), o2(plain);
  for (int i = 0; i < 3; ++i) {
    a.grad = Matrix(1, 2);
    a.grad << 3.0, 4.0;  // norm 5, clipped to (0.6, 0.8)
    b.grad = Matrix(1, 2);
    b.grad << 0.6, 0.8;
    o1.step(s1);
    o2.step(s2);
  }
  EXPECT_TRUE(a.value.isApprox(b.value, 1e-12));
}

TEST(AdamW, StateRoundTrip) {
  ParamStore s;
  Parameter& p = s.add("w", Matrix::Constant(2, 2, 1.0), true);
  AdamW a(AdamWConfig{});
  a.set_trainable({"w"});
  p.grad = Matrix::Constant(2, 2, 0.3);
  a.step(s);
  std::stringstream ss;
  a.write(ss);
  AdamW b(AdamWConfig{});
  b.read(ss);
  EXPECT_EQ(b.steps(), 1);
  b.set_trainable(a.trainable());  // the session checkpoint stores the list itself
  ParamStore s2;
  Parameter& q = s2.add("w", p.value, true);
  p.grad = q.grad = Matrix::Constant(2, 2, -0.1);
  a.step(s);
  b.step(s2);
  EXPECT_EQ(p.value, q.value);
}

TEST(AdamW, ConfigValidation) {
  AdamWConfig c;
  c.beta1 = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = AdamWConfig{};
  c.lr = -1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

}  // namespace
}  // namespace motor
