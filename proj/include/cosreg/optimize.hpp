#ifndef COSREG_OPTIMIZE_HPP
#define COSREG_OPTIMIZE_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>

#include "cosreg/errors.hpp"

namespace cosreg {

using Objective = std::function<double(std::span<const double>)>;

struct NmConfig {
  int max_iter = 5000;  // per run
  double xtol = 1e-8;
  double ftol = 1e-8;
  double initial_scale = 0.1;
  int restarts = 2;

  void validate() const {
    if (max_iter < 1) throw invalid_argument_error("max_iter must be >= 1");
    if (!(xtol > 0.0) || !(ftol > 0.0)) throw invalid_argument_error("tolerances must be positive");
    if (!(initial_scale > 0.0)) throw invalid_argument_error("initial simplex scale must be positive");
    if (restarts < 0) throw invalid_argument_error("restarts must be >= 0");
  }
};

struct NmResult {
  std::vector<double> argmin;
  double value = std::numeric_limits<double>::infinity();
  bool converged = false;
  int iterations = 0;
  int evaluations = 0;
};

namespace detail {

struct SimplexRun {
  bool converged = false;
  int iterations = 0;
};

// One Nelder-Mead descent from x0 (coefficients 1, 2, 0.5, 0.5). On return,
// x0/f0 hold the best vertex.
inline SimplexRun nelder_mead_run(const Objective& f, std::vector<double>& x0, double& f0,
                                  const NmConfig& cfg, int& evals) {
  const std::size_t n = x0.size();
  std::vector<std::vector<double>> pts(n + 1, x0);
  std::vector<double> fv(n + 1, f0);
  auto eval = [&](const std::vector<double>& x) {
    ++evals;
    const double v = f(x);
    return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
  };
  for (std::size_t i = 0; i < n; ++i) {
    pts[i + 1][i] += cfg.initial_scale * std::max(1.0, std::fabs(x0[i]));
    fv[i + 1] = eval(pts[i + 1]);
  }

  std::vector<std::size_t> order(n + 1);
  std::vector<double> centroid(n), xr(n), xe(n), xc(n);
  SimplexRun run;
  for (; run.iterations < cfg.max_iter; ++run.iterations) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
    const std::size_t best = order.front(), worst = order.back(), second = order[n - 1];

    double diameter = 0.0;
    for (std::size_t v = 0; v <= n; ++v)
      for (std::size_t i = 0; i < n; ++i) diameter = std::max(diameter, std::fabs(pts[v][i] - pts[best][i]));
    const double spread = fv[worst] - fv[best];
    if (std::isfinite(fv[worst]) && (diameter < cfg.xtol || spread < cfg.ftol)) {
      run.converged = true;
      break;
    }

    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (std::size_t v = 0; v <= n; ++v)
      if (v != worst)
        for (std::size_t i = 0; i < n; ++i) centroid[i] += pts[v][i];
    for (double& c : centroid) c /= static_cast<double>(n);

    for (std::size_t i = 0; i < n; ++i) xr[i] = centroid[i] + (centroid[i] - pts[worst][i]);
    const double fr = eval(xr);
    if (fr < fv[best]) {
      for (std::size_t i = 0; i < n; ++i) xe[i] = centroid[i] + 2.0 * (xr[i] - centroid[i]);
      const double fe = eval(xe);
      if (fe < fr) {
        pts[worst] = xe;
        fv[worst] = fe;
      } else {
        pts[worst] = xr;
        fv[worst] = fr;
      }
      continue;
    }
    if (fr < fv[second]) {
      pts[worst] = xr;
      fv[worst] = fr;
      continue;
    }
    const bool outside = fr < fv[worst];
    const auto& toward = outside ? xr : pts[worst];
    for (std::size_t i = 0; i < n; ++i) xc[i] = centroid[i] + 0.5 * (toward[i] - centroid[i]);
    const double fc = eval(xc);
    if (fc < (outside ? fr : fv[worst])) {
      pts[worst] = xc;
      fv[worst] = fc;
      continue;
    }
    for (std::size_t v = 0; v <= n; ++v) {
      if (v == best) continue;
      for (std::size_t i = 0; i < n; ++i) pts[v][i] = pts[best][i] + 0.5 * (pts[v][i] - pts[best][i]);
      fv[v] = eval(pts[v]);
    }
  }
  const auto it = std::min_element(fv.begin(), fv.end());
  const auto b = static_cast<std::size_t>(it - fv.begin());
  if (fv[b] < f0) {
    x0 = pts[b];
    f0 = fv[b];
  }
  return run;
}

}  // namespace detail

/// Derivative-free minimization. After each run stops, a fresh simplex is
/// built around the best point, `restarts` times. `converged` reports whether
/// the final run met a tolerance before max_iter.
inline NmResult nelder_mead(const Objective& f, std::vector<double> start, const NmConfig& cfg = {}) {
  cfg.validate();
  if (start.empty()) throw invalid_argument_error("nelder_mead: empty start vector");
  NmResult out;
  double f0 = f(start);
  out.evaluations = 1;
  if (!std::isfinite(f0)) throw invalid_argument_error("nelder_mead: objective is not finite at the start point");
  for (int r = 0; r <= cfg.restarts; ++r) {
    const auto run = detail::nelder_mead_run(f, start, f0, cfg, out.evaluations);
    out.iterations += run.iterations;
    out.converged = run.converged;
  }
  out.argmin = std::move(start);
  out.value = f0;
  return out;
}

/// Central-difference Hessian with step rel_step * max(1, |theta_i|),
/// symmetrized.
inline Eigen::MatrixXd numeric_hessian(const Objective& f, std::span<const double> at,
                                       double rel_step = 1e-4) {
  const std::size_t n = at.size();
  std::vector<double> x(at.begin(), at.end());
  std::vector<double> h(n);
  for (std::size_t i = 0; i < n; ++i) h[i] = rel_step * std::max(1.0, std::fabs(at[i]));

  auto value = [&](std::size_t i, std::size_t j) {
    const double v = f(x);
    if (!std::isfinite(v))
      throw numeric_range_error("numeric_hessian: objective not finite in the stencil of entry (" +
                                std::to_string(i) + ", " + std::to_string(j) + ")");
    return v;
  };

  Eigen::MatrixXd H(n, n);
  const double f0 = value(0, 0);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = at[i] + h[i];
    const double fp = value(i, i);
    x[i] = at[i] - h[i];
    const double fm = value(i, i);
    x[i] = at[i];
    H(i, i) = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
    for (std::size_t j = 0; j < i; ++j) {
      double s = 0.0;
      for (int a : {1, -1})
        for (int b : {1, -1}) {
          x[i] = at[i] + a * h[i];
          x[j] = at[j] + b * h[j];
          s += a * b * value(i, j);
        }
      x[i] = at[i];
      x[j] = at[j];
      H(i, j) = H(j, i) = s / (4.0 * h[i] * h[j]);
    }
  }
  return 0.5 * (H + H.transpose());
}

/// Curvature diagnostics at an optimum.
struct HessianSummary {
  bool positive_definite = false;
  double condition = std::numeric_limits<double>::infinity();
  std::optional<Eigen::MatrixXd> vcov;  // inverse Hessian when positive definite
};

inline HessianSummary summarize_hessian(const Eigen::MatrixXd& H) {
  HessianSummary out;
  if (H.size() == 0 || !H.allFinite()) return out;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(H, Eigen::EigenvaluesOnly);
  const auto& ev = eig.eigenvalues();
  const double lo = ev.minCoeff(), hi = ev.maxCoeff();
  if (lo > 0.0) out.condition = hi / lo;
  Eigen::LLT<Eigen::MatrixXd> llt(H);
  if (lo > 0.0 && llt.info() == Eigen::Success) {
    out.positive_definite = true;
    Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(H.rows(), H.cols()));
    out.vcov = 0.5 * (inv + inv.transpose());
  }
  return out;
}

inline double normal_quantile(double prob) {
  return boost::math::quantile(boost::math::normal_distribution<double>(0.0, 1.0), prob);
}

struct Interval {
  double lo = std::numeric_limits<double>::quiet_NaN();
  double hi = std::numeric_limits<double>::quiet_NaN();
  bool valid() const { return !std::isnan(lo) && !std::isnan(hi); }
  bool contains(double v) const { return valid() && lo <= v && v <= hi; }
};

inline double wald_z(double level) {
  if (!(level >= 0.0 && level < 1.0)) throw invalid_argument_error("confidence level must be in [0, 1)");
  return level == 0.0 ? 0.0 : normal_quantile(0.5 * (1.0 + level));
}

inline Interval wald_interval(double estimate, double se, double level = 0.95) {
  if (!std::isfinite(se) || se < 0.0) return {};
  const double half = wald_z(level) * se;
  return {estimate - half, estimate + half};
}

/// estimate +- z * sqrt(diag(vcov)). Without a covariance every interval is NA.
inline std::vector<Interval> wald_ci(std::span<const double> estimates,
                                     const std::optional<Eigen::MatrixXd>& vcov, double level = 0.95) {
  std::vector<Interval> out(estimates.size());
  if (!vcov) {
    wald_z(level);
    return out;
  }
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    const double var = (*vcov)(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i));
    out[i] = wald_interval(estimates[i], var >= 0.0 ? std::sqrt(var) : std::nan(""), level);
  }
  return out;
}

}  // namespace cosreg

#endif  // COSREG_OPTIMIZE_HPP
