#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cosreg/aggregate.hpp"
#include "cosreg/fit.hpp"
#include "oracles.hpp"

using namespace cosreg;

namespace {

const StudyWindow kUnit = StudyWindow::unit_square();

CovariateField random_raster(std::mt19937_64& rng, std::size_t m) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(m * m);
  for (double& a : v) a = n(rng);
  return CovariateField(kUnit, m, m, std::move(v));
}

struct Simulated {
  CovariateField z[1];
  CovariateField x[1];
  Partition part;
  PointPattern pattern;
  AggregatedData c;
};

Simulated simulate(std::uint64_t seed, double total, int cells = 8, double beta0 = -1.0) {
  std::mt19937_64 rng(seed);
  Simulated s{{random_raster(rng, 2 * cells)}, {random_raster(rng, 2 * cells)},
              build_partition(kUnit, cells, cells, 2), {}, {}};
  const ModelParams truth{std::log(total / 1.6), {1.0}, beta0, {1.0}};
  s.pattern = simulate_bippp(truth, s.z, s.x, s.part, seed + 1);
  s.c = aggregate_to_type_c(s.pattern, s.part);
  return s;
}

// S2 negative log-likelihood and analytic gradient over (alpha0, alpha1, beta0, beta1),
// evaluated directly from partition nodes.
double s2_with_gradient(const Simulated& s, const Eigen::VectorXd& th, Eigen::VectorXd* g) {
  double nll = 0.0;
  if (g) g->setZero(4);
  for (std::size_t j = 0; j < s.part.num_regions(); ++j) {
    double L = 0, M = 0, K = 0;
    Eigen::Vector4d dL = Eigen::Vector4d::Zero(), dM = Eigen::Vector4d::Zero(), dK = Eigen::Vector4d::Zero();
    for (const auto& node : s.part.region_nodes(j)) {
      const double z = s.z[0].at(node.location), x = s.x[0].at(node.location);
      const double lam = node.weight * std::exp(th(0) + th(1) * z);
      const double p = 1.0 / (1.0 + std::exp(-(th(2) + th(3) * x)));
      L += lam;
      M += lam * p;
      K += lam * (1 - p);
      const Eigen::Vector4d dl(lam, lam * z, 0, 0);
      dL += dl;
      dM += p * dl + Eigen::Vector4d(0, 0, lam * p * (1 - p), lam * p * (1 - p) * x);
      dK += (1 - p) * dl - Eigen::Vector4d(0, 0, lam * p * (1 - p), lam * p * (1 - p) * x);
    }
    const double n1 = static_cast<double>(s.c.regions[j].n1), n0 = static_cast<double>(s.c.regions[j].n0);
    nll += L - n1 * std::log(M) - n0 * std::log(K);
    if (g) *g += dL - n1 / M * dM - n0 / K * dK;
  }
  return nll;
}

}  // namespace

TEST(FitLogistic, MatchesIrlsOracle) {
  std::mt19937_64 rng(91);
  std::normal_distribution<double> n(0, 1);
  std::uniform_real_distribution<double> u(0, 1);
  for (int dataset = 0; dataset < 5; ++dataset) {
    const int N = 500;
    PointTable pts;
    pts.n_x = 1;
    Eigen::MatrixXd X(N, 2);
    Eigen::VectorXd y(N);
    for (int i = 0; i < N; ++i) {
      const double xi = n(rng);
      const int m = u(rng) < 1.0 / (1.0 + std::exp(-(-1.0 + xi))) ? 1 : 0;
      pts.x.push_back(xi);
      pts.marks.push_back(m);
      X(i, 0) = 1.0;
      X(i, 1) = xi;
      y(i) = m;
    }
    const auto glm = oracle::irls_logistic(X, y);
    ASSERT_TRUE(glm.converged);
    const auto fit = fit_logistic(pts);
    ASSERT_TRUE(fit.usable());
    for (int k = 0; k < 2; ++k) {
      EXPECT_NEAR(fit.theta[k], glm.coef(k), 1e-4);
      EXPECT_NEAR(fit.se[k], glm.se(k), 1e-4);
      const double z = normal_quantile(0.975);
      EXPECT_NEAR(fit.cis[k].lo, glm.coef(k) - z * glm.se(k), 1e-3);
      EXPECT_NEAR(fit.cis[k].hi, glm.coef(k) + z * glm.se(k), 1e-3);
    }
    EXPECT_EQ(fit.names, (std::vector<std::string>{"beta0", "beta1"}));
    EXPECT_EQ(fit.fixed_params, std::vector<std::string>{"alpha0"});
  }
}

TEST(FitLogistic, SeparatedDataIsFlagged) {
  PointTable pts;
  pts.n_x = 1;
  for (int i = 0; i < 20; ++i) {
    pts.x.push_back(i < 10 ? -1.0 - i : 1.0 + i);
    pts.marks.push_back(i < 10 ? 0 : 1);
  }
  const auto fit = fit_logistic(pts);
  EXPECT_TRUE(fit.flagged());
  EXPECT_LE(fit.nll, fit.start_nll);
}

TEST(FitLogistic, EmptyRejected) { EXPECT_THROW(fit_logistic(PointTable{}), validation_error); }

TEST(FitAreal, JointCountsMatchGradientOracle) {
  for (std::uint64_t seed : {5u, 6u, 7u}) {
    const auto s = simulate(seed, 3000.0);
    const auto fit = fit_areal(Scenario::S2_joint_counts, s.c, s.part, s.z, s.x);
    const auto ref = oracle::bfgs([&](const Eigen::VectorXd& th, Eigen::VectorXd* g) { return s2_with_gradient(s, th, g); },
                                  Eigen::Vector4d(0.0, 0.0, 0.0, 0.0));
    EXPECT_TRUE(fit.converged);
    // the library drops no constants from S2, so the values are comparable directly
    EXPECT_NEAR(fit.nll, ref.value, 1e-4);
    for (int k = 0; k < 4; ++k) EXPECT_NEAR(fit.theta[k], ref.x(k), 2e-3) << "param " << k;
  }
}

TEST(FitAreal, AllScenariosRecoverTruthRoughly) {
  // sparse ones so the indicators carry information
  const auto s = simulate(21, 4000.0, 10, -4.0);
  const auto d = degrade(s.c, DataKind::TypeD);
  const auto e = degrade(s.c, DataKind::TypeE);
  const NodeTable table(s.part, s.z, s.x);
  for (auto [sc, data] : {std::pair{Scenario::S2_joint_counts, &s.c}, std::pair{Scenario::S3_joint_indicator, &d},
                          std::pair{Scenario::S4_conditional_indicator, &d}}) {
    const auto fit = fit_areal(sc, *data, table);
    EXPECT_TRUE(fit.usable()) << scenario_name(sc) << ": " << fit.diagnostic;
    const auto b1 = *fit.index_of("beta1");
    EXPECT_NEAR(fit.theta[b1], 1.0, 5 * fit.se[b1]) << scenario_name(sc);
    EXPECT_LE(fit.nll, fit.start_nll);
  }
  const auto f5 = fit_areal(Scenario::S5_bernoulli_indicator, e, table);
  EXPECT_LE(f5.nll, f5.start_nll);
}

TEST(FitAreal, ConditionalIndicatorFixesIntercept) {
  const auto s = simulate(3, 4000.0);
  const auto fit = fit_areal(Scenario::S4_conditional_indicator, degrade(s.c, DataKind::TypeD), s.part, s.z, s.x);
  EXPECT_EQ(fit.fixed_params, std::vector<std::string>{"alpha0"});
  EXPECT_FALSE(fit.index_of("alpha0").has_value());
  EXPECT_EQ(fit.estimates.alpha0, 0.0);
  EXPECT_EQ(fit.names.size(), 3u);
}

TEST(FitAreal, KindMismatchRejected) {
  const auto s = simulate(4, 1000.0);
  const NodeTable table(s.part, s.z, s.x);
  EXPECT_THROW(fit_areal(Scenario::S3_joint_indicator, s.c, table), validation_error);
  EXPECT_THROW(fit_areal(Scenario::S2_joint_counts, degrade(s.c, DataKind::TypeE), table), validation_error);
  EXPECT_THROW(fit_areal(Scenario::S1_logistic, s.c, table), invalid_argument_error);
}

TEST(FitAreal, RegionCountMismatchRejected) {
  const auto s = simulate(4, 1000.0);
  const NodeTable small(build_partition(kUnit, 2, 2, 1), s.z, s.x);
  EXPECT_THROW(fit_areal(Scenario::S2_joint_counts, s.c, small), validation_error);
}

TEST(FitAreal, AllZeroIndicatorsDoNotCrash) {
  const auto s = simulate(8, 1000.0);
  AggregatedData e{DataKind::TypeE, std::vector<RegionRecord>(s.part.num_regions())};
  const auto fit = fit_areal(Scenario::S5_bernoulli_indicator, e, s.part, s.z, s.x);
  EXPECT_LE(fit.nll, fit.start_nll);
  EXPECT_TRUE(fit.flagged());
}

TEST(FitAreal, UserStartRespectedAndValidated) {
  const auto s = simulate(9, 2000.0);
  FitOptions opt;
  opt.start = std::vector<double>{0.0, 0.0};
  EXPECT_THROW(fit_areal(Scenario::S2_joint_counts, s.c, s.part, s.z, s.x, opt), invalid_argument_error);
  opt.start = std::vector<double>{std::log(1250.0), 1.0, -1.0, 1.0};
  const auto fit = fit_areal(Scenario::S2_joint_counts, s.c, s.part, s.z, s.x, opt);
  EXPECT_TRUE(fit.converged);
}

TEST(StartValues, PoissonRegressionRecoversIntercept) {
  const std::vector<double> counts = {10, 10, 10, 10};
  const std::vector<double> area = {0.25, 0.25, 0.25, 0.25};
  const auto a = start::poisson_regression(counts, {{-1.0}, {-0.5}, {0.5}, {1.0}}, area);
  EXPECT_NEAR(a[0], std::log(40.0), 1e-6);
  EXPECT_NEAR(a[1], 0.0, 1e-6);
}

TEST(StartValues, IndicatorRateInvertsSaturationCurve) {
  AggregatedData d{DataKind::TypeD, {}};
  // two regions with n = 3 and 5: choose v so the observed share is 1/2
  d.regions = {{0, 0, 3, 1}, {0, 0, 5, 0}};
  const double r = start::indicator_rate_given_counts(d);
  const double share = 0.5 * ((1 - std::pow(1 - r, 3)) + (1 - std::pow(1 - r, 5)));
  EXPECT_NEAR(share, 0.5, 1e-9);
}
