#ifndef COSREG_EXPERIMENT_HPP
#define COSREG_EXPERIMENT_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <ostream>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "cosreg/aggregate.hpp"
#include "cosreg/errors.hpp"
#include "cosreg/fit.hpp"
#include "cosreg/grid.hpp"
#include "cosreg/integrate.hpp"
#include "cosreg/io.hpp"
#include "cosreg/likelihood.hpp"
#include "cosreg/process.hpp"

namespace cosreg {

/// splitmix64 finalizer over (master, stream, index); gives independent
/// per-replicate seeds from one master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index) {
  std::uint64_t z = master + 0x9E3779B97F4A7C15ull * (stream * 0x100000001B3ull + index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

struct SettingConfig {
  int id = 1;
  bool covariate_equivalence = true;  // x(s) = z(s)
  double target_mean_n_per_cell = 10.0;
  double target_vbar = 0.11;
  double alpha1 = 1.0;
  double beta1 = 1.0;
  int replicates = 200;

  StudyWindow window{};
  int nx = 20;
  int ny = 20;
  // Covariate rasters are raster_per_cell times finer than the partition;
  // quadrature uses the same sub-grid so the integrals are exact.
  int raster_per_cell = 4;

  GpConfig gp{
      .n_knots_x = 53, .n_knots_y = 53, .bandwidth = 0.025, .marginal_sd = 1.0, .seed = 0, .standardize = true};
  bool redraw_fields = true;
  int pilot_fields = 200;
  std::uint64_t master_seed = 20200101;
  double level = 0.95;
  NmConfig nm{};
  int threads = 1;

  void validate() const {
    window.validate();
    gp.validate();
    if (!(target_mean_n_per_cell > 0.0) || !(target_vbar > 0.0 && target_vbar < 1.0))
      throw invalid_argument_error("calibration targets must be positive (vbar in (0,1))");
    if (replicates < 0) throw invalid_argument_error("replicates must be >= 0");
    if (nx < 1 || ny < 1 || raster_per_cell < 1) throw invalid_argument_error("grid sizes must be >= 1");
    if (pilot_fields < 1) throw invalid_argument_error("pilot_fields must be >= 1");
    nm.validate();
  }

  int raster_nx() const { return nx * raster_per_cell; }
  int raster_ny() const { return ny * raster_per_cell; }
  Partition partition() const { return build_partition(window, nx, ny, raster_per_cell); }
};

/// The four simulation settings: covariate equivalence (yes/no) crossed with
/// 10 or 50 expected points per subregion.
inline SettingConfig setting_config(int setting) {
  if (setting < 1 || setting > 4) throw invalid_argument_error("setting must be in 1..4");
  SettingConfig c;
  c.id = setting;
  c.covariate_equivalence = setting <= 2;
  c.target_mean_n_per_cell = (setting % 2 == 1) ? 10.0 : 50.0;
  return c;
}

struct CovariatePair {
  CovariateField z;
  CovariateField x;
};

inline CovariatePair draw_covariates(const SettingConfig& cfg, std::uint64_t seed) {
  GpConfig g = cfg.gp;
  g.seed = derive_seed(seed, 11, 0);
  CovariatePair out;
  out.z = sample_gp_field(cfg.window, cfg.raster_nx(), cfg.raster_ny(), g);
  if (cfg.covariate_equivalence) {
    out.x = out.z;
  } else {
    g.seed = derive_seed(seed, 12, 0);
    out.x = sample_gp_field(cfg.window, cfg.raster_nx(), cfg.raster_ny(), g);
  }
  return out;
}

struct Calibration {
  double alpha0 = 0.0;
  double beta0 = 0.0;
  double expected_n_per_cell = 0.0;
  double expected_vbar = 0.0;
};

namespace detail {

template <class F>
double bisect_increasing(F&& f, double target, double lo, double hi, const std::string& what) {
  const double flo = f(lo), fhi = f(hi);
  if (!(flo <= target && target <= fhi))
    throw calibration_error(what + ": bracket [" + io::format_double(lo, 6) + ", " + io::format_double(hi, 6) +
                            "] maps to [" + io::format_double(flo, 6) + ", " + io::format_double(fhi, 6) +
                            "], which does not contain the target " + io::format_double(target, 6));
  for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

/// Chooses alpha0 so the expected count per subregion hits the target and
/// beta0 so the expected share of subregions holding a one hits target_vbar.
/// Both expectations average quadrature integrals over pilot covariate
/// draws; P(v_j = 1) = 1 - exp(-M_j) exactly, so no pilot point patterns
/// are simulated.
inline Calibration calibrate_intercepts(const SettingConfig& cfg) {
  cfg.validate();
  const Partition partition = cfg.partition();
  const std::size_t J = partition.num_regions();
  std::vector<NodeTable> tables;
  tables.reserve(static_cast<std::size_t>(cfg.pilot_fields));
  for (int k = 0; k < cfg.pilot_fields; ++k) {
    const auto fields = draw_covariates(cfg, derive_seed(cfg.master_seed, 3, static_cast<std::uint64_t>(k)));
    const CovariateField zs[] = {fields.z};
    const CovariateField xs[] = {fields.x};
    tables.emplace_back(partition, zs, xs);
  }

  ModelParams p{0.0, {cfg.alpha1}, 0.0, {cfg.beta1}};
  RegionIntegrals I;
  auto mean_count = [&](double a0) {
    p.alpha0 = a0;
    double s = 0.0;
    for (const auto& t : tables) {
      accumulate_region_integrals(p, t, I);
      for (double L : I.L) s += L;
    }
    return s / static_cast<double>(J * tables.size());
  };
  auto mean_indicator = [&](double b0) {
    p.beta0 = b0;
    double s = 0.0;
    for (const auto& t : tables) {
      accumulate_region_integrals(p, t, I);
      for (double M : I.M) s += -std::expm1(-M);
    }
    return s / static_cast<double>(J * tables.size());
  };

  Calibration c;
  c.alpha0 = detail::bisect_increasing(mean_count, cfg.target_mean_n_per_cell, -50.0, 50.0, "alpha0 calibration");
  p.alpha0 = c.alpha0;
  c.expected_n_per_cell = mean_count(c.alpha0);
  c.beta0 = detail::bisect_increasing(mean_indicator, cfg.target_vbar, -60.0, 30.0, "beta0 calibration");
  c.expected_vbar = mean_indicator(c.beta0);
  if (std::fabs(c.expected_vbar - cfg.target_vbar) > 0.01)
    throw calibration_error("beta0 calibration missed the target share by more than 0.01");
  return c;
}

struct ReplicateRecord {
  int replicate = 0;
  int scenario = 0;
  bool ok = false;  // fit ran without throwing
  double beta1_hat = std::numeric_limits<double>::quiet_NaN();
  double se = std::numeric_limits<double>::quiet_NaN();
  Interval ci{};
  bool covers = false;
  bool converged = false;
  bool hessian_pd = false;
  bool usable = false;
  bool flagged = true;
  double condition = std::numeric_limits<double>::infinity();
  double nll = std::numeric_limits<double>::quiet_NaN();
  int evaluations = 0;
  std::string error;
};

struct ReplicateData {
  std::size_t n = 0;
  double nbar_j = 0.0, nbar_1j = 0.0, nbar_0j = 0.0, vbar_j = 0.0;
};

struct SummaryRow {
  int setting = 0;
  int scenario = 0;
  int replicates = 0;
  int included = 0;  // usable fits: converged with an invertible Hessian
  int failures = 0;  // replicates - included
  int flagged = 0;   // failures plus ill-conditioned usable fits
  double cp = std::numeric_limits<double>::quiet_NaN();
  double mean_beta1 = std::numeric_limits<double>::quiet_NaN();
  double sd_beta1 = std::numeric_limits<double>::quiet_NaN();
  double mc_se_mean = std::numeric_limits<double>::quiet_NaN();
  double efficiency = std::numeric_limits<double>::quiet_NaN();
  double nbar_j = 0.0, nbar_1j = 0.0, nbar_0j = 0.0, vbar_j = 0.0;
};

struct ExperimentResult {
  SettingConfig config;
  Calibration calibration;
  std::vector<int> scenarios;
  std::vector<ReplicateData> data;        // per replicate
  std::vector<ReplicateRecord> records;   // replicate-major, scenario order as requested
  std::vector<SummaryRow> summary;        // one row per scenario
};

/// Simulates one replicate, aggregates it and fits every requested scenario.
inline void run_replicate(const SettingConfig& cfg, const Calibration& cal, const Partition& partition,
                          const std::vector<int>& scenarios, const CovariatePair* fixed_fields, int index,
                          ReplicateData& data, std::span<ReplicateRecord> out) {
  const std::uint64_t seed = derive_seed(cfg.master_seed, 1, static_cast<std::uint64_t>(index));
  const CovariatePair fields = fixed_fields ? *fixed_fields : draw_covariates(cfg, seed);
  const CovariateField zs[] = {fields.z};
  const CovariateField xs[] = {fields.x};
  const ModelParams truth{cal.alpha0, {cfg.alpha1}, cal.beta0, {cfg.beta1}};

  std::mt19937_64 rng(derive_seed(seed, 13, 0));
  const PointPattern pattern = simulate_bippp(truth, zs, xs, partition, rng);
  const AggregatedData typeC = aggregate_to_type_c(pattern, partition);
  const AggregatedData typeD = degrade(typeC, DataKind::TypeD);
  const AggregatedData typeE = degrade(typeC, DataKind::TypeE);

  const double J = static_cast<double>(partition.num_regions());
  data.n = pattern.size();
  for (const auto& r : typeC.regions) {
    data.nbar_1j += static_cast<double>(r.n1);
    data.nbar_0j += static_cast<double>(r.n0);
    data.vbar_j += r.v;
  }
  data.nbar_j = static_cast<double>(pattern.size()) / J;
  data.nbar_1j /= J;
  data.nbar_0j /= J;
  data.vbar_j /= J;

  const NodeTable table(partition, zs, xs);
  FitOptions opt;
  opt.nm = cfg.nm;
  opt.level = cfg.level;

  for (std::size_t k = 0; k < scenarios.size(); ++k) {
    ReplicateRecord& rec = out[k];
    rec.replicate = index;
    rec.scenario = scenarios[k];
    try {
      const Scenario s = scenario_from_number(scenarios[k]);
      FitResult fit;
      switch (s) {
        case Scenario::S1_logistic: fit = fit_logistic(pattern, xs, opt); break;
        case Scenario::S2_joint_counts: fit = fit_areal(s, typeC, table, opt); break;
        case Scenario::S3_joint_indicator:
        case Scenario::S4_conditional_indicator: fit = fit_areal(s, typeD, table, opt); break;
        case Scenario::S5_bernoulli_indicator: fit = fit_areal(s, typeE, table, opt); break;
      }
      const std::size_t b1 = *fit.index_of("beta1");
      rec.ok = true;
      rec.beta1_hat = fit.theta[b1];
      rec.se = fit.se[b1];
      rec.ci = fit.cis[b1];
      rec.covers = rec.ci.contains(cfg.beta1);
      rec.converged = fit.converged;
      rec.hessian_pd = fit.hessian_pd;
      rec.usable = fit.usable() && rec.ci.valid();
      rec.flagged = fit.flagged();
      rec.condition = fit.hessian_condition;
      rec.nll = fit.nll;
      rec.evaluations = fit.evaluations;
      rec.error = fit.diagnostic;
    } catch (const std::exception& e) {
      rec.ok = false;
      rec.error = e.what();
    }
  }
}

inline std::vector<SummaryRow> summarize(int setting, const std::vector<int>& scenarios,
                                         const std::vector<ReplicateData>& data,
                                         const std::vector<ReplicateRecord>& records) {
  std::vector<SummaryRow> rows;
  if (data.empty()) return rows;
  const std::size_t S = scenarios.size();
  ReplicateData avg;
  for (const auto& d : data) {
    avg.nbar_j += d.nbar_j;
    avg.nbar_1j += d.nbar_1j;
    avg.nbar_0j += d.nbar_0j;
    avg.vbar_j += d.vbar_j;
  }
  const double R = static_cast<double>(data.size());
  double sd_s1 = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t k = 0; k < S; ++k) {
    SummaryRow row;
    row.setting = setting;
    row.scenario = scenarios[k];
    row.replicates = static_cast<int>(data.size());
    row.nbar_j = avg.nbar_j / R;
    row.nbar_1j = avg.nbar_1j / R;
    row.nbar_0j = avg.nbar_0j / R;
    row.vbar_j = avg.vbar_j / R;
    double sum = 0.0, covered = 0.0;
    std::vector<double> est;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto& rec = records[i * S + k];
      if (!rec.usable) {
        ++row.flagged;
        continue;
      }
      if (rec.flagged) ++row.flagged;
      est.push_back(rec.beta1_hat);
      sum += rec.beta1_hat;
      covered += rec.covers ? 1.0 : 0.0;
    }
    row.included = static_cast<int>(est.size());
    row.failures = row.replicates - row.included;
    if (!est.empty()) {
      const double m = static_cast<double>(est.size());
      row.cp = covered / m;
      row.mean_beta1 = sum / m;
      if (est.size() > 1) {
        double ss = 0.0;
        for (double e : est) ss += (e - row.mean_beta1) * (e - row.mean_beta1);
        row.sd_beta1 = std::sqrt(ss / (m - 1.0));
        row.mc_se_mean = row.sd_beta1 / std::sqrt(m);
      }
    }
    if (scenarios[k] == 1) sd_s1 = row.sd_beta1;
    rows.push_back(row);
  }
  for (auto& row : rows) row.efficiency = row.sd_beta1 / sd_s1;
  return rows;
}

/// Runs all replicates of one setting. Replicates are distributed over
/// cfg.threads workers; results depend only on the master seed.
inline ExperimentResult run_experiment(const SettingConfig& cfg, const std::vector<int>& scenarios,
                                       const Calibration& cal,
                                       const std::function<void(int)>& progress = nullptr) {
  cfg.validate();
  for (int s : scenarios) scenario_from_number(s);
  ExperimentResult out;
  out.config = cfg;
  out.calibration = cal;
  out.scenarios = scenarios;
  const auto R = static_cast<std::size_t>(cfg.replicates);
  out.data.resize(R);
  out.records.resize(R * scenarios.size());
  const Partition partition = cfg.partition();

  std::optional<CovariatePair> fixed;
  if (!cfg.redraw_fields) fixed = draw_covariates(cfg, derive_seed(cfg.master_seed, 2, 0));

  std::atomic<std::size_t> next{0};
  std::mutex progress_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < R; i = next++) {
      run_replicate(cfg, cal, partition, scenarios, fixed ? &*fixed : nullptr, static_cast<int>(i), out.data[i],
                    std::span<ReplicateRecord>(out.records).subspan(i * scenarios.size(), scenarios.size()));
      if (progress) {
        std::lock_guard lock(progress_mutex);
        progress(static_cast<int>(i));
      }
    }
  };
  const int nthreads = std::max(1, std::min(cfg.threads, cfg.replicates));
  if (nthreads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
  }
  out.summary = summarize(cfg.id, scenarios, out.data, out.records);
  return out;
}

inline void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& rows, const Calibration* cal = nullptr) {
  os << "setting,scenario,replicates,included,failures,flagged,cp,mean_beta1,sd_beta1,mc_se_mean,efficiency,"
        "nbar_j,nbar_1j,nbar_0j,vbar_j,alpha0,beta0\n";
  const auto f = [](double v) { return io::format_double(v, 10); };
  for (const auto& r : rows)
    os << r.setting << ',' << r.scenario << ',' << r.replicates << ',' << r.included << ',' << r.failures << ','
       << r.flagged << ',' << f(r.cp) << ',' << f(r.mean_beta1) << ',' << f(r.sd_beta1) << ',' << f(r.mc_se_mean)
       << ',' << f(r.efficiency) << ',' << f(r.nbar_j) << ',' << f(r.nbar_1j) << ',' << f(r.nbar_0j) << ','
       << f(r.vbar_j) << ',' << f(cal ? cal->alpha0 : std::nan("")) << ',' << f(cal ? cal->beta0 : std::nan(""))
       << '\n';
}

inline void write_replicates_csv(std::ostream& os, int setting, const std::vector<ReplicateData>& data,
                                 const std::vector<ReplicateRecord>& records, std::size_t n_scenarios) {
  os << "setting,replicate,scenario,n,vbar_j,beta1_hat,se,ci_lo,ci_hi,covers,converged,hessian_pd,usable,flagged,"
        "hessian_condition,nll,evaluations,error\n";
  const auto f = [](double v) { return io::format_double(v, 12); };
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const auto& d = data[i / n_scenarios];
    std::string err = r.error;
    std::replace(err.begin(), err.end(), '"', '\'');
    os << setting << ',' << r.replicate << ',' << r.scenario << ',' << d.n << ',' << f(d.vbar_j) << ','
       << f(r.beta1_hat) << ',' << f(r.se) << ',' << f(r.ci.lo) << ',' << f(r.ci.hi) << ',' << r.covers << ','
       << r.converged << ',' << r.hessian_pd << ',' << r.usable << ',' << r.flagged << ',' << f(r.condition) << ','
       << f(r.nll) << ',' << r.evaluations << ",\"" << err << "\"\n";
  }
}

/// Writes summary.csv and replicates.csv into dir (created if missing).
inline void write_experiment(const std::filesystem::path& dir, const std::vector<ExperimentResult>& results) {
  std::filesystem::create_directories(dir);
  std::ofstream summary(dir / "summary.csv", std::ios::binary);
  bool header = false;
  for (const auto& r : results) {
    std::ostringstream tmp;
    write_summary_csv(tmp, r.summary, &r.calibration);
    std::string text = tmp.str();
    if (header) text = text.substr(text.find('\n') + 1);
    header = true;
    summary << text;
  }
  if (!header) write_summary_csv(summary, {});
  std::ofstream reps(dir / "replicates.csv", std::ios::binary);
  bool rheader = false;
  for (const auto& r : results) {
    std::ostringstream tmp;
    write_replicates_csv(tmp, r.config.id, r.data, r.records, r.scenarios.size());
    std::string text = tmp.str();
    if (rheader) text = text.substr(text.find('\n') + 1);
    rheader = true;
    reps << text;
  }
  if (!rheader) write_replicates_csv(reps, 0, {}, {}, 1);
}

}  // namespace cosreg

#endif  // COSREG_EXPERIMENT_HPP
