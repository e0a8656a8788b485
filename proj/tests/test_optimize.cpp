#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cosreg/likelihood.hpp"
#include "cosreg/optimize.hpp"
#include "oracles.hpp"

using namespace cosreg;

TEST(NelderMead, OneDimensionalQuadratic) {
  const auto r = nelder_mead([](std::span<const double> x) { return (x[0] - 3.0) * (x[0] - 3.0); }, {0.0});
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.argmin[0], 3.0, 1e-3);
  EXPECT_LT(r.value, 1e-6);
}

TEST(NelderMead, FourDimensionalQuadratic) {
  const double c[] = {1.0, -2.0, 0.5, 4.0};
  auto f = [&](std::span<const double> x) {
    double s = 0.0;
    for (std::size_t i = 0; i < 4; ++i) s += (i + 1.0) * (x[i] - c[i]) * (x[i] - c[i]);
    return s + 0.3 * (x[0] - c[0]) * (x[1] - c[1]);
  };
  NmConfig cfg;
  cfg.ftol = 1e-14;
  cfg.xtol = 1e-10;
  const auto r = nelder_mead(f, {0.0, 0.0, 0.0, 0.0}, cfg);
  EXPECT_TRUE(r.converged);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(r.argmin[i], c[i], 1e-5);
}

TEST(NelderMead, Rosenbrock) {
  auto f = [](std::span<const double> x) {
    return 100.0 * (x[1] - x[0] * x[0]) * (x[1] - x[0] * x[0]) + (1 - x[0]) * (1 - x[0]);
  };
  NmConfig cfg;
  cfg.ftol = 1e-15;
  cfg.xtol = 1e-10;
  const auto r = nelder_mead(f, {-1.2, 1.0}, cfg);
  EXPECT_NEAR(r.argmin[0], 1.0, 1e-4);
  EXPECT_NEAR(r.argmin[1], 1.0, 1e-4);
}

TEST(NelderMead, NeverWorseThanStart) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0, 3);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> x0 = {n(rng), n(rng), n(rng)};
    auto f = [](std::span<const double> x) {
      return std::sin(3 * x[0]) + std::cos(2 * x[1]) * x[2] * x[2] + 0.1 * (x[0] * x[0] + x[1] * x[1]);
    };
    NmConfig cfg;
    cfg.max_iter = 30;
    const double f0 = f(x0);
    const auto r = nelder_mead(f, x0, cfg);
    EXPECT_LE(r.value, f0);
    EXPECT_EQ(r.value, f(r.argmin));
  }
}

TEST(NelderMead, NonFiniteStartRejected) {
  auto f = [](std::span<const double> x) { return x[0] < 0 ? kInf : x[0]; };
  EXPECT_THROW(nelder_mead(f, {-1.0}), invalid_argument_error);
  auto g = [](std::span<const double>) { return std::nan(""); };
  EXPECT_THROW(nelder_mead(g, {0.0}), invalid_argument_error);
}

TEST(NelderMead, InfiniteRegionsAreAvoided) {
  // a barrier at x < 1 returns +inf; the optimum sits at the barrier edge side
  auto f = [](std::span<const double> x) { return x[0] < 1.0 ? kInf : (x[0] - 0.5) * (x[0] - 0.5); };
  const auto r = nelder_mead(f, {3.0});
  EXPECT_GE(r.argmin[0], 1.0);
  EXPECT_NEAR(r.argmin[0], 1.0, 1e-3);
}

TEST(NelderMead, ReachesMaxIterWithoutConverging) {
  NmConfig cfg;
  cfg.max_iter = 3;
  cfg.restarts = 0;
  const auto r = nelder_mead([](std::span<const double> x) { return (x[0] - 100) * (x[0] - 100); }, {0.0}, cfg);
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.iterations, 3);
}

TEST(NelderMead, InvalidConfigRejected) {
  NmConfig cfg;
  cfg.xtol = 0.0;
  EXPECT_THROW(nelder_mead([](std::span<const double>) { return 0.0; }, {0.0}, cfg), invalid_argument_error);
  EXPECT_THROW(nelder_mead([](std::span<const double>) { return 0.0; }, {}), invalid_argument_error);
}

TEST(NumericHessian, ExactForQuadratic) {
  auto f = [](std::span<const double> x) { return x[0] * x[0] + 3 * x[0] * x[1] + 5 * x[1] * x[1]; };
  const std::vector<double> at = {0.4, -1.3};
  const auto H = numeric_hessian(f, at);
  EXPECT_NEAR(H(0, 0), 2.0, 1e-5);
  EXPECT_NEAR(H(0, 1), 3.0, 1e-5);
  EXPECT_NEAR(H(1, 0), 3.0, 1e-5);
  EXPECT_NEAR(H(1, 1), 10.0, 1e-5);
}

TEST(NumericHessian, ExponentialCurvature) {
  const std::vector<double> at = {0.7};
  const auto H = numeric_hessian([](std::span<const double> x) { return std::exp(x[0]); }, at);
  EXPECT_NEAR(H(0, 0), std::exp(0.7), 1e-6);
}

TEST(NumericHessian, ReportsNonFiniteStencilEntry) {
  auto f = [](std::span<const double> x) { return x[1] > 1.0 ? kInf : x[0] * x[0] + x[1] * x[1]; };
  const std::vector<double> at = {0.0, 1.0};
  try {
    numeric_hessian(f, at);
    FAIL() << "expected numeric_range_error";
  } catch (const numeric_range_error& e) {
    EXPECT_NE(std::string(e.what()).find("(1, 1)"), std::string::npos) << e.what();
  }
}

TEST(NumericHessian, LogisticMatchesAnalyticInformation) {
  // X'WX computed in closed form at the IRLS optimum
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0, 1);
  std::uniform_real_distribution<double> u(0, 1);
  const int N = 400;
  Eigen::MatrixXd X(N, 2);
  Eigen::VectorXd y(N);
  PointTable pts;
  pts.n_x = 1;
  for (int i = 0; i < N; ++i) {
    const double xi = n(rng);
    X(i, 0) = 1.0;
    X(i, 1) = xi;
    y(i) = u(rng) < 1.0 / (1.0 + std::exp(-(-0.5 + 1.2 * xi))) ? 1.0 : 0.0;
    pts.marks.push_back(static_cast<int>(y(i)));
    pts.x.push_back(xi);
  }
  const auto glm = oracle::irls_logistic(X, y);
  const ParamLayout layout(Scenario::S1_logistic, 0, 1);
  auto f = [&](std::span<const double> th) { return nll_s1_logistic(layout.unpack(th), pts); };
  const std::vector<double> at = {glm.coef(0), glm.coef(1)};
  const auto H = numeric_hessian(f, at);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) EXPECT_NEAR(H(i, j) / glm.information(i, j), 1.0, 1e-4);
}

TEST(HessianSummary, PositiveDefiniteInverse) {
  Eigen::MatrixXd H(2, 2);
  H << 4.0, 1.0, 1.0, 3.0;
  const auto s = summarize_hessian(H);
  ASSERT_TRUE(s.positive_definite);
  ASSERT_TRUE(s.vcov.has_value());
  EXPECT_NEAR(((*s.vcov) * H - Eigen::MatrixXd::Identity(2, 2)).norm(), 0.0, 1e-14);
  const double l1 = (7 + std::sqrt(5.0)) / 2, l2 = (7 - std::sqrt(5.0)) / 2;
  EXPECT_NEAR(s.condition, l1 / l2, 1e-12);
}

TEST(HessianSummary, SingularAndIndefiniteGiveNoCovariance) {
  Eigen::MatrixXd S(2, 2);
  S << 1.0, 1.0, 1.0, 1.0;
  auto s = summarize_hessian(S);
  EXPECT_FALSE(s.positive_definite);
  EXPECT_FALSE(s.vcov.has_value());
  Eigen::MatrixXd I(2, 2);
  I << 1.0, 0.0, 0.0, -1.0;
  s = summarize_hessian(I);
  EXPECT_FALSE(s.positive_definite);
  EXPECT_TRUE(std::isinf(s.condition));
  const std::vector<double> est = {1.0, 2.0};
  for (const auto& ci : wald_ci(est, s.vcov)) EXPECT_FALSE(ci.valid());
}

TEST(Wald, KnownInterval) {
  const auto ci = wald_interval(1.0, 0.5, 0.95);
  EXPECT_NEAR(ci.lo, 0.020018007729972975, 1e-12);
  EXPECT_NEAR(ci.hi, 1.979981992270027, 1e-12);
  EXPECT_TRUE(ci.contains(1.0));
  EXPECT_FALSE(ci.contains(2.0));
}

TEST(Wald, LevelZeroIsDegenerate) {
  const auto ci = wald_interval(0.3, 2.0, 0.0);
  EXPECT_EQ(ci.lo, 0.3);
  EXPECT_EQ(ci.hi, 0.3);
}

TEST(Wald, InvalidLevelRejected) {
  EXPECT_THROW(wald_interval(0.0, 1.0, 1.0), invalid_argument_error);
  EXPECT_THROW(wald_interval(0.0, 1.0, -0.1), invalid_argument_error);
  EXPECT_THROW(wald_ci(std::vector<double>{1.0}, std::nullopt, 1.5), invalid_argument_error);
}

TEST(Wald, WidthGrowsWithLevel) {
  double prev = 0.0;
  for (double level : {0.5, 0.8, 0.9, 0.95, 0.99, 0.999}) {
    const auto ci = wald_interval(0.0, 1.0, level);
    EXPECT_GT(ci.hi - ci.lo, prev);
    prev = ci.hi - ci.lo;
  }
  EXPECT_NEAR(normal_quantile(0.975), 1.959963984540054, 1e-12);
}
