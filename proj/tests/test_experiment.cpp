#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "cosreg/experiment.hpp"

using namespace cosreg;

namespace {

// A scaled-down setting that runs in well under a second per replicate.
SettingConfig small_setting(int id) {
  auto cfg = setting_config(id);
  cfg.nx = cfg.ny = 8;
  cfg.raster_per_cell = 2;
  cfg.gp.n_knots_x = cfg.gp.n_knots_y = 10;
  cfg.gp.bandwidth = 0.1;
  cfg.pilot_fields = 10;
  cfg.target_vbar = 0.3;
  cfg.replicates = 6;
  return cfg;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(DeriveSeed, DistinctAcrossStreamsAndIndices) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 4; ++s)
    for (std::uint64_t i = 0; i < 500; ++i) seen.insert(derive_seed(7, s, i));
  EXPECT_EQ(seen.size(), 2000u);
  EXPECT_EQ(derive_seed(7, 1, 2), derive_seed(7, 1, 2));
  EXPECT_NE(derive_seed(7, 1, 2), derive_seed(8, 1, 2));
}

TEST(Settings, FourSettingsCrossEquivalenceAndDensity) {
  EXPECT_TRUE(setting_config(1).covariate_equivalence);
  EXPECT_TRUE(setting_config(2).covariate_equivalence);
  EXPECT_FALSE(setting_config(3).covariate_equivalence);
  EXPECT_FALSE(setting_config(4).covariate_equivalence);
  EXPECT_EQ(setting_config(1).target_mean_n_per_cell, 10.0);
  EXPECT_EQ(setting_config(2).target_mean_n_per_cell, 50.0);
  EXPECT_EQ(setting_config(3).target_mean_n_per_cell, 10.0);
  EXPECT_EQ(setting_config(4).target_mean_n_per_cell, 50.0);
  EXPECT_EQ(setting_config(1).partition().num_regions(), 400u);
  EXPECT_THROW(setting_config(0), invalid_argument_error);
  EXPECT_THROW(setting_config(5), invalid_argument_error);
}

TEST(Covariates, EquivalenceSettingSharesTheField) {
  const auto a = draw_covariates(small_setting(1), 3);
  for (std::size_t i = 0; i < a.z.values().size(); ++i) EXPECT_EQ(a.z.values()[i], a.x.values()[i]);
  const auto b = draw_covariates(small_setting(3), 3);
  EXPECT_NE(b.z.values()[0], b.x.values()[0]);
}

TEST(Calibration, ConstantCovariateGivesClosedFormIntercept) {
  // With alpha1 = 0 the expected count per cell is exp(alpha0) * area_j.
  auto cfg = small_setting(1);
  cfg.alpha1 = 0.0;
  cfg.beta1 = 0.0;
  const auto cal = calibrate_intercepts(cfg);
  const double J = 64.0;
  EXPECT_NEAR(cal.alpha0, std::log(cfg.target_mean_n_per_cell * J / cfg.window.area()), 1e-9);
  // v-bar = 1 - exp(-M) with M = 10 * sigmoid(beta0) at every cell
  const double m = -std::log1p(-cfg.target_vbar) / cfg.target_mean_n_per_cell;
  EXPECT_NEAR(cal.beta0, std::log(m / (1 - m)), 1e-8);
  EXPECT_NEAR(cal.expected_vbar, cfg.target_vbar, 1e-9);
}

TEST(Calibration, UnreachableTargetReportsBracket) {
  auto cfg = small_setting(1);
  cfg.target_mean_n_per_cell = 1e40;
  try {
    calibrate_intercepts(cfg);
    FAIL() << "expected calibration_error";
  } catch (const calibration_error& e) {
    EXPECT_NE(std::string(e.what()).find("bracket"), std::string::npos) << e.what();
  }
}

TEST(Experiment, ZeroReplicatesGivesEmptySummary) {
  auto cfg = small_setting(1);
  cfg.replicates = 0;
  const auto res = run_experiment(cfg, {1, 2}, calibrate_intercepts(cfg));
  EXPECT_TRUE(res.summary.empty());
  EXPECT_TRUE(res.records.empty());
}

TEST(Experiment, InvalidScenarioRejected) {
  auto cfg = small_setting(1);
  EXPECT_THROW(run_experiment(cfg, {1, 7}, Calibration{}), invalid_argument_error);
}

TEST(Experiment, DeterministicAndThreadCountIndependent) {
  auto cfg = small_setting(3);
  const auto cal = calibrate_intercepts(cfg);
  const auto a = run_experiment(cfg, {1, 2, 3, 4, 5}, cal);
  cfg.threads = 3;
  const auto b = run_experiment(cfg, {1, 2, 3, 4, 5}, cal);
  std::ostringstream sa, sb;
  write_summary_csv(sa, a.summary, &cal);
  write_summary_csv(sb, b.summary, &cal);
  EXPECT_EQ(sa.str(), sb.str());
  ASSERT_EQ(a.records.size(), 30u);
  for (std::size_t i = 0; i < a.records.size(); ++i) EXPECT_EQ(a.records[i].beta1_hat, b.records[i].beta1_hat);
}

TEST(Experiment, SummaryAccountsForEveryReplicate) {
  auto cfg = small_setting(2);
  const auto cal = calibrate_intercepts(cfg);
  const auto res = run_experiment(cfg, {1, 2, 4}, cal);
  ASSERT_EQ(res.summary.size(), 3u);
  for (const auto& row : res.summary) {
    EXPECT_EQ(row.replicates, 6);
    EXPECT_EQ(row.included + row.failures, 6);
    EXPECT_GE(row.flagged, row.failures);
    if (row.included > 0) {
      EXPECT_GE(row.cp, 0.0);
      EXPECT_LE(row.cp, 1.0);
    }
  }
  EXPECT_DOUBLE_EQ(res.summary[0].efficiency, 1.0);
  // n-bar per cell lands near the calibrated target
  EXPECT_NEAR(res.summary[0].nbar_j, 50.0, 5.0);
  EXPECT_NEAR(res.summary[0].nbar_1j + res.summary[0].nbar_0j, res.summary[0].nbar_j, 1e-9);
}

TEST(Experiment, FixedFieldsOption) {
  auto cfg = small_setting(1);
  cfg.redraw_fields = false;
  cfg.replicates = 3;
  const auto res = run_experiment(cfg, {2}, calibrate_intercepts(cfg));
  EXPECT_EQ(res.records.size(), 3u);
}

TEST(Experiment, WritesCsvFiles) {
  auto cfg = small_setting(1);
  cfg.replicates = 2;
  const auto res = run_experiment(cfg, {1, 5}, calibrate_intercepts(cfg));
  const auto dir = std::filesystem::temp_directory_path() / "cosreg_experiment_test";
  std::filesystem::remove_all(dir);
  write_experiment(dir, {res, res});
  const auto summary = slurp(dir / "summary.csv");
  EXPECT_EQ(summary.rfind("setting,scenario,replicates", 0), 0u);
  // one header plus two rows per result
  EXPECT_EQ(std::count(summary.begin(), summary.end(), '\n'), 5);
  const auto reps = slurp(dir / "replicates.csv");
  EXPECT_EQ(std::count(reps.begin(), reps.end(), '\n'), 9);
  std::filesystem::remove_all(dir);
}
