#ifndef COSREG_FIT_HPP
#define COSREG_FIT_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cosreg/aggregate.hpp"
#include "cosreg/errors.hpp"
#include "cosreg/integrate.hpp"
#include "cosreg/likelihood.hpp"
#include "cosreg/optimize.hpp"
#include "cosreg/process.hpp"

namespace cosreg {

struct FitOptions {
  NmConfig nm{};
  double level = 0.95;
  double hessian_step = 1e-4;
  double condition_threshold = 1e8;
  std::optional<std::vector<double>> start;  // free-parameter vector, layout order
};

struct FitResult {
  Scenario scenario = Scenario::S1_logistic;
  std::vector<std::string> names;  // free parameters
  std::vector<double> theta;       // estimates, layout order
  ModelParams estimates;
  std::vector<double> se;           // NaN when vcov is unavailable
  std::vector<Interval> cis;
  std::optional<Eigen::MatrixXd> vcov;
  std::vector<std::string> fixed_params;
  double nll = kInf;
  double start_nll = kInf;
  bool converged = false;
  bool hessian_pd = false;
  double hessian_condition = kInf;
  bool ill_conditioned = true;
  std::string diagnostic;
  int iterations = 0;
  int evaluations = 0;
  double seconds = 0.0;
  double level = 0.95;

  // Converged with an invertible Hessian: the fit yields a usable interval.
  bool usable() const { return converged && vcov.has_value(); }

  // Any identifiability or convergence warning.
  bool flagged() const { return !usable() || ill_conditioned; }

  std::optional<std::size_t> index_of(const std::string& name) const {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) return std::nullopt;
    return static_cast<std::size_t>(it - names.begin());
  }
};

namespace start {

inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// Log-linear Poisson regression of counts on region covariates with
/// offset log(area), by damped Newton. Returns [alpha0, alpha...].
inline std::vector<double> poisson_regression(const std::vector<double>& counts,
                                              const std::vector<std::vector<double>>& covariates,
                                              const std::vector<double>& areas) {
  const std::size_t J = counts.size();
  const std::size_t r = J ? covariates[0].size() : 0;
  const std::size_t d = r + 1;
  double total = 0.0, area = 0.0;
  for (std::size_t j = 0; j < J; ++j) {
    total += counts[j];
    area += areas[j];
  }
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  beta(0) = std::log(std::max(total, 0.5) / area);
  if (total == 0.0) return std::vector<double>(beta.data(), beta.data() + d);

  auto loglik = [&](const Eigen::VectorXd& b) {
    double ll = 0.0;
    for (std::size_t j = 0; j < J; ++j) {
      double eta = b(0);
      for (std::size_t k = 0; k < r; ++k) eta += b(static_cast<Eigen::Index>(k + 1)) * covariates[j][k];
      eta = std::clamp(eta, -kMaxExponent, kMaxExponent);
      ll += counts[j] * eta - areas[j] * std::exp(eta);
    }
    return ll;
  };
  double current = loglik(beta);
  for (int it = 0; it < 50; ++it) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
    Eigen::MatrixXd H = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d)) * 1e-8;
    for (std::size_t j = 0; j < J; ++j) {
      Eigen::VectorXd row(static_cast<Eigen::Index>(d));
      row(0) = 1.0;
      for (std::size_t k = 0; k < r; ++k) row(static_cast<Eigen::Index>(k + 1)) = covariates[j][k];
      const double mu = areas[j] * std::exp(std::clamp(row.dot(beta), -kMaxExponent, kMaxExponent));
      g += (counts[j] - mu) * row;
      H += mu * row * row.transpose();
    }
    const Eigen::VectorXd step = H.ldlt().solve(g);
    if (!step.allFinite()) break;
    double t = 1.0;
    bool improved = false;
    for (int h = 0; h < 30; ++h, t *= 0.5) {
      const Eigen::VectorXd cand = beta + t * step;
      const double v = loglik(cand);
      if (std::isfinite(v) && v >= current) {
        beta = cand;
        improved = v - current > 1e-12;
        current = v;
        break;
      }
    }
    if (!improved) break;
  }
  return std::vector<double>(beta.data(), beta.data() + d);
}

/// Grouped logistic regression (ones/zeros per row) by damped Newton.
/// Returns [beta0, beta...].
inline std::vector<double> grouped_logistic(const std::vector<double>& ones, const std::vector<double>& zeros,
                                            const std::vector<std::vector<double>>& covariates) {
  const std::size_t J = ones.size();
  const std::size_t q = J ? covariates[0].size() : 0;
  const std::size_t d = q + 1;
  double n1 = 0.0, n = 0.0;
  for (std::size_t j = 0; j < J; ++j) {
    n1 += ones[j];
    n += ones[j] + zeros[j];
  }
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  beta(0) = logit((n1 + 0.5) / (n + 1.0));
  if (n1 == 0.0 || n1 == n) return std::vector<double>(beta.data(), beta.data() + d);

  auto loglik = [&](const Eigen::VectorXd& b) {
    double ll = 0.0;
    for (std::size_t j = 0; j < J; ++j) {
      double eta = b(0);
      for (std::size_t k = 0; k < q; ++k) eta += b(static_cast<Eigen::Index>(k + 1)) * covariates[j][k];
      ll += ones[j] * link::log_sigmoid(eta) + zeros[j] * link::log_one_minus_sigmoid(eta);
    }
    return ll;
  };
  double current = loglik(beta);
  for (int it = 0; it < 50; ++it) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
    Eigen::MatrixXd H = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d)) * 1e-8;
    for (std::size_t j = 0; j < J; ++j) {
      const double m = ones[j] + zeros[j];
      if (m == 0.0) continue;
      Eigen::VectorXd row(static_cast<Eigen::Index>(d));
      row(0) = 1.0;
      for (std::size_t k = 0; k < q; ++k) row(static_cast<Eigen::Index>(k + 1)) = covariates[j][k];
      const double p = link::sigmoid(row.dot(beta));
      g += (ones[j] - m * p) * row;
      H += m * p * (1.0 - p) * row * row.transpose();
    }
    const Eigen::VectorXd step = H.ldlt().solve(g);
    if (!step.allFinite()) break;
    double t = 1.0;
    bool improved = false;
    for (int h = 0; h < 30; ++h, t *= 0.5) {
      const Eigen::VectorXd cand = beta + t * step;
      const double v = loglik(cand);
      if (std::isfinite(v) && v >= current) {
        beta = cand;
        improved = v - current > 1e-12;
        current = v;
        break;
      }
    }
    if (!improved) break;
  }
  // Quasi-separated data can run off; keep starts in a sane box.
  for (Eigen::Index i = 0; i < beta.size(); ++i) beta(i) = std::clamp(beta(i), -30.0, 30.0);
  return std::vector<double>(beta.data(), beta.data() + d);
}

// p0 with mean_{j: n_j > 0} [1 - (1 - p0)^{n_j}] equal to the observed share of v_j = 1.
inline double indicator_rate_given_counts(const AggregatedData& data) {
  double target = 0.0, m = 0.0;
  for (const auto& r : data.regions)
    if (r.n > 0) {
      target += r.v;
      m += 1.0;
    }
  if (m == 0.0) return 0.5;
  target = std::clamp(target / m, 1e-3, 1.0 - 1e-3);
  double lo = 1e-12, hi = 1.0 - 1e-12;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    double s = 0.0;
    for (const auto& r : data.regions)
      if (r.n > 0) s += -std::expm1(static_cast<double>(r.n) * std::log1p(-mid));
    (s / m < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace start

/// Region-level summaries of a NodeTable used for start values.
struct RegionSummaries {
  std::vector<double> area;
  std::vector<std::vector<double>> z_mean;
  std::vector<std::vector<double>> x_mean;

  explicit RegionSummaries(const NodeTable& t) {
    const std::size_t J = t.num_regions();
    area.assign(J, 0.0);
    z_mean.assign(J, std::vector<double>(t.n_z(), 0.0));
    x_mean.assign(J, std::vector<double>(t.n_x(), 0.0));
    for (std::size_t j = 0; j < J; ++j) {
      for (std::size_t i = t.begin(j); i < t.end(j); ++i) {
        const double w = t.weight(i);
        area[j] += w;
        for (std::size_t k = 0; k < t.n_z(); ++k) z_mean[j][k] += w * t.z(i)[k];
        for (std::size_t k = 0; k < t.n_x(); ++k) x_mean[j][k] += w * t.x(i)[k];
      }
      for (double& v : z_mean[j]) v /= area[j];
      for (double& v : x_mean[j]) v /= area[j];
    }
  }
};

/// Default start for an areal scenario:
///   alpha: Poisson regression of n_j on region-mean z (Types C/D);
///          one expected point per region (Type E).
///   beta:  grouped logistic fit at region means (Type C); intercept-only
///          moment match of the indicator rate (Types D/E).
inline std::vector<double> default_start(Scenario s, const AggregatedData& data, const NodeTable& table) {
  const ParamLayout layout(s, table.n_z(), table.n_x());
  const RegionSummaries rs(table);
  const std::size_t J = data.size();
  ModelParams p;
  p.alpha.assign(table.n_z(), 0.0);
  p.beta.assign(table.n_x(), 0.0);

  if (data.kind == DataKind::TypeC || data.kind == DataKind::TypeD) {
    std::vector<double> counts(J);
    for (std::size_t j = 0; j < J; ++j)
      counts[j] = static_cast<double>(data.kind == DataKind::TypeC ? data.regions[j].n1 + data.regions[j].n0
                                                                   : data.regions[j].n);
    const auto a = start::poisson_regression(counts, rs.z_mean, rs.area);
    p.alpha0 = a[0];
    for (std::size_t k = 0; k < table.n_z(); ++k) p.alpha[k] = a[k + 1];
  }

  switch (data.kind) {
    case DataKind::TypeC: {
      std::vector<double> ones(J), zeros(J);
      for (std::size_t j = 0; j < J; ++j) {
        ones[j] = static_cast<double>(data.regions[j].n1);
        zeros[j] = static_cast<double>(data.regions[j].n0);
      }
      const auto b = start::grouped_logistic(ones, zeros, rs.x_mean);
      p.beta0 = b[0];
      for (std::size_t k = 0; k < table.n_x(); ++k) p.beta[k] = b[k + 1];
      break;
    }
    case DataKind::TypeD:
      p.beta0 = start::logit(start::indicator_rate_given_counts(data));
      break;
    case DataKind::TypeE: {
      double vbar = 0.0, area = 0.0;
      for (std::size_t j = 0; j < J; ++j) {
        vbar += data.regions[j].v;
        area += rs.area[j];
      }
      vbar = J ? vbar / static_cast<double>(J) : 0.0;
      p.alpha0 = std::log(static_cast<double>(J) / area);
      const double m = std::clamp(-std::log1p(-std::min(vbar, 0.99)), 1e-3, 0.99);
      p.beta0 = start::logit(m);
      break;
    }
  }
  return layout.pack(p);
}

namespace detail {

inline FitResult finish_fit(Scenario s, const ParamLayout& layout, const Objective& objective,
                            std::vector<double> theta0, const FitOptions& opt,
                            std::chrono::steady_clock::time_point t0) {
  FitResult out;
  out.scenario = s;
  out.level = opt.level;
  out.names = layout.names();
  out.fixed_params = layout.fixed_names();
  out.start_nll = objective(theta0);
  if (!std::isfinite(out.start_nll))
    throw numeric_range_error(std::string(scenario_name(s)) + ": likelihood is not finite at the start values");

  const NmResult nm = nelder_mead(objective, std::move(theta0), opt.nm);
  out.theta = nm.argmin;
  out.nll = nm.value;
  out.converged = nm.converged;
  out.iterations = nm.iterations;
  out.evaluations = nm.evaluations;
  out.estimates = layout.unpack(out.theta);

  try {
    const Eigen::MatrixXd H = numeric_hessian(objective, out.theta, opt.hessian_step);
    const HessianSummary hs = summarize_hessian(H);
    out.hessian_pd = hs.positive_definite;
    out.hessian_condition = hs.condition;
    out.vcov = hs.vcov;
    if (!hs.positive_definite) out.diagnostic = "Hessian is not positive definite; intervals unavailable";
  } catch (const numeric_range_error& e) {
    out.diagnostic = e.what();
  }
  out.ill_conditioned = !(out.hessian_condition <= opt.condition_threshold);
  if (out.ill_conditioned && out.diagnostic.empty()) out.diagnostic = "Hessian condition number exceeds threshold";
  if (!out.converged && out.diagnostic.empty()) out.diagnostic = "Nelder-Mead reached max_iter";

  out.se.assign(out.theta.size(), std::nan(""));
  if (out.vcov)
    for (std::size_t i = 0; i < out.theta.size(); ++i) {
      const double v = (*out.vcov)(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i));
      out.se[i] = v >= 0.0 ? std::sqrt(v) : std::nan("");
    }
  out.cis = wald_ci(out.theta, out.vcov, opt.level);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace detail

/// Logistic regression on exact marked points (scenario 1).
inline FitResult fit_logistic(const PointTable& points, const FitOptions& opt = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  if (points.size() == 0) throw validation_error("logistic fit needs at least one point");
  const ParamLayout layout(Scenario::S1_logistic, 0, points.n_x);
  std::vector<double> theta0;
  if (opt.start) {
    theta0 = *opt.start;
  } else {
    double n1 = 0.0;
    for (int m : points.marks) n1 += m;
    theta0.assign(layout.size(), 0.0);
    theta0[0] = start::logit((n1 + 0.5) / (static_cast<double>(points.size()) + 1.0));
  }
  if (theta0.size() != layout.size()) throw invalid_argument_error("start vector has the wrong length");
  Objective f = [layout, &points, p = ModelParams{}](std::span<const double> th) mutable {
    layout.unpack(th, p);
    return nll_s1_logistic(p, points);
  };
  return detail::finish_fit(Scenario::S1_logistic, layout, f, std::move(theta0), opt, t0);
}

inline FitResult fit_logistic(const PointPattern& pattern, FieldSet x_fields, const FitOptions& opt = {}) {
  pattern.validate();
  return fit_logistic(PointTable(pattern, x_fields), opt);
}

/// Fits one of the areal scenarios (2-5) given precomputed node covariates.
inline FitResult fit_areal(Scenario s, const AggregatedData& data, const NodeTable& table,
                           const FitOptions& opt = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  if (s == Scenario::S1_logistic) throw invalid_argument_error("fit_areal: scenario 1 needs point data");
  detail::require_kind(data, required_kind(s), s);
  data.validate();
  if (data.size() != table.num_regions())
    throw validation_error("data has " + std::to_string(data.size()) + " regions but the partition has " +
                           std::to_string(table.num_regions()));
  const ParamLayout layout(s, table.n_z(), table.n_x());
  std::vector<double> theta0 = opt.start ? *opt.start : default_start(s, data, table);
  if (theta0.size() != layout.size()) throw invalid_argument_error("start vector has the wrong length");

  double (*from)(const AggregatedData&, const RegionIntegrals&) = nullptr;
  switch (s) {
    case Scenario::S2_joint_counts: from = nll_s2_from_integrals; break;
    case Scenario::S3_joint_indicator: from = nll_s3_from_integrals; break;
    case Scenario::S4_conditional_indicator: from = nll_s4_from_integrals; break;
    case Scenario::S5_bernoulli_indicator: from = nll_s5_from_integrals; break;
    case Scenario::S1_logistic: break;
  }
  Objective f = [layout, &data, &table, from, p = ModelParams{}, I = RegionIntegrals{}](
                    std::span<const double> th) mutable {
    layout.unpack(th, p);
    if (accumulate_region_integrals(p, table, I) != IntegralStatus::ok) return kInf;
    return from(data, I);
  };
  return detail::finish_fit(s, layout, f, std::move(theta0), opt, t0);
}

inline FitResult fit_areal(Scenario s, const AggregatedData& data, const Partition& partition, FieldSet z_fields,
                           FieldSet x_fields, const FitOptions& opt = {}) {
  return fit_areal(s, data, NodeTable(partition, z_fields, x_fields), opt);
}

}  // namespace cosreg

#endif  // COSREG_FIT_HPP
