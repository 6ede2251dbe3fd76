#include <gtest/gtest.h>

#include <cmath>

#include "smoothdtw/gradients.hpp"
#include "test_support.hpp"

using namespace smoothdtw;
using testing_support::Prng;

namespace {

double central_difference(const std::vector<double>& a, std::size_t k, double gamma,
                          OperatorKind kind, double h) {
  auto up = a, down = a;
  up[k] += h;
  down[k] -= h;
  auto f = [&](const std::vector<double>& v) {
    return kind == OperatorKind::SmoothMin ? smooth_min(v, gamma) : min_gamma(v, gamma);
  };
  return (f(up) - f(down)) / (2 * h);
}

LossConfig min_gamma_config() {
  LossConfig cfg;
  cfg.kind = OperatorKind::MinGamma;
  return cfg;
}

}  // namespace

TEST(SmoothMinGrad, ComponentsSumToOne) {
  Prng prng(61);
  for (int t = 0; t < 100; ++t) {
    const auto a = testing_support::random_vector(prng, 1 + t % 5, -1, 1);
    for (auto kind : {OperatorKind::SmoothMin, OperatorKind::MinGamma}) {
      const auto g = smooth_min_grad(a, 0.1, kind);
      double s = 0;
      for (double v : g) s += v;
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(SmoothMinGrad, MatchesCentralDifferences) {
  const std::vector<double> a{1, 2};
  for (auto kind : {OperatorKind::SmoothMin, OperatorKind::MinGamma}) {
    const auto g = smooth_min_grad(a, 1.0, kind);
    for (std::size_t k = 0; k < a.size(); ++k) {
      const double fd = central_difference(a, k, 1.0, kind, 1e-6);
      EXPECT_LT(std::abs(g[k] - fd) / std::abs(fd), 1e-6);
    }
  }
}

TEST(SmoothMinGrad, RejectsZeroTemperature) {
  EXPECT_THROW(smooth_min_grad(std::vector<double>{1, 2}, 0.0, OperatorKind::SmoothMin),
               InvalidArgument);
}

TEST(LossGradients, LossValueMatchesForwardPass) {
  Prng prng(67);
  const auto x = testing_support::random_sequence(prng, 3, 6);
  const auto y = testing_support::random_sequence(prng, 3, 5);
  const LossConfig cfg;
  EXPECT_NEAR(loss_gradients(x, y, cfg).loss_value, total_loss_unnormalized(x, y, cfg), 1e-12);
}

TEST(LossGradients, FiniteDifferenceAgreement) {
  Prng prng(71);
  std::uniform_int_distribution<int> len(1, 8), dim(1, 4);
  for (int t = 0; t < 10; ++t) {
    const int d = dim(prng);
    const auto x = testing_support::random_sequence(prng, d, len(prng));
    const auto y = testing_support::random_sequence(prng, d, len(prng));
    EXPECT_LT(finite_difference_check(x, y, LossConfig{}, 1e-5), 1e-4);
    EXPECT_LT(finite_difference_check(x, y, min_gamma_config(), 1e-5), 1e-4);
  }
}

TEST(LossGradients, CosineCostVariant) {
  Prng prng(73);
  LossConfig cfg;
  cfg.cost = CostKind::Cosine;
  const auto x = testing_support::random_sequence(prng, 3, 5);
  const auto y = testing_support::random_sequence(prng, 3, 7);
  EXPECT_LT(finite_difference_check(x, y, cfg, 1e-5), 1e-4);
}

TEST(LossGradients, SingleFramesHaveZeroGradient) {
  Prng prng(79);
  const auto x = testing_support::random_sequence(prng, 3, 1);
  const auto y = testing_support::random_sequence(prng, 3, 1);
  const auto g = loss_gradients(x, y, LossConfig{});
  EXPECT_EQ(g.loss_value, 0.0);
  EXPECT_TRUE(g.d_x.isZero(1e-15));
  EXPECT_EQ(finite_difference_check(x, y, LossConfig{}, 1e-5), 0.0);
}

TEST(LossGradients, ColumnScalingInvariance) {
  Prng prng(83);
  const auto x = testing_support::random_sequence(prng, 4, 6);
  const auto y = testing_support::random_sequence(prng, 4, 6);
  Matrix scaled = x.matrix();
  scaled.col(2) *= 2.0;
  const LossConfig cfg;
  const auto g = loss_gradients(x, y, cfg);
  const auto gs = loss_gradients(FeatureSequence(scaled), y, cfg);
  EXPECT_NEAR(g.loss_value, gs.loss_value, 1e-9);
  // Gradient is orthogonal to each input column and scales inversely with it.
  for (Eigen::Index i = 0; i < 6; ++i) EXPECT_NEAR(g.d_x.col(i).dot(x.matrix().col(i)), 0.0, 1e-12);
  EXPECT_TRUE(gs.d_x.col(2).isApprox(g.d_x.col(2) / 2.0, 1e-9));
}

TEST(LossGradients, SwapSymmetryOfAlignmentTerm) {
  Prng prng(89);
  const auto x = testing_support::random_sequence(prng, 3, 5);
  const auto y = testing_support::random_sequence(prng, 3, 7);
  LossConfig cfg;
  cfg.lambda_g = 0.0;
  cfg.lambda_s = 1.0;
  const auto a = loss_gradients(x, y, cfg);
  const auto b = loss_gradients(y, x, cfg);
  EXPECT_TRUE(a.d_x.isApprox(b.d_y, 1e-12));
  EXPECT_TRUE(a.d_y.isApprox(b.d_x, 1e-12));
}

TEST(LossGradients, Errors) {
  Prng prng(97);
  const auto x = testing_support::random_sequence(prng, 3, 4);
  LossConfig cfg;
  cfg.gamma = 0.0;
  EXPECT_THROW(loss_gradients(x, x, cfg), InvalidArgument);
  EXPECT_THROW(loss_gradients(x, testing_support::random_sequence(prng, 2, 4), LossConfig{}),
               InvalidArgument);
  EXPECT_THROW(finite_difference_check(x, x, LossConfig{}, 0.0), InvalidArgument);
}

TEST(FiniteDifferenceCheck, StepSweepShowsTruncationFloor) {
  Prng prng(101);
  const auto x = testing_support::random_sequence(prng, 3, 5);
  const auto y = testing_support::random_sequence(prng, 3, 6);
  const LossConfig cfg;
  const double e4 = finite_difference_check(x, y, cfg, 1e-4);
  const double e5 = finite_difference_check(x, y, cfg, 1e-5);
  const double e6 = finite_difference_check(x, y, cfg, 1e-6);
  // Shrinking the step from 1e-4 to 1e-5 cuts the truncation error roughly 100x;
  // going further is limited by roundoff.
  EXPECT_LT(e5, e4 / 10.0);
  EXPECT_LT(e6, 1e-3);
}
