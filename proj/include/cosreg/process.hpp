#ifndef COSREG_PROCESS_HPP
#define COSREG_PROCESS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cosreg/errors.hpp"
#include "cosreg/grid.hpp"

namespace cosreg {

inline constexpr double kMaxExponent = 700.0;

// Numerically stable pieces of the logit link.
namespace link {

inline double sigmoid(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

// log(1 + exp(t))
inline double softplus(double t) {
  return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

inline double log_sigmoid(double eta) { return -softplus(-eta); }

// log(1 - sigmoid(eta))
inline double log_one_minus_sigmoid(double eta) { return -softplus(eta); }

// Writes sigmoid(eta) and 1 - sigmoid(eta) using a single exp.
inline void sigmoid_pair(double eta, double& p, double& q) {
  const double e = std::exp(-std::fabs(eta));
  const double d = 1.0 / (1.0 + e);
  if (eta >= 0.0) {
    p = d;
    q = e * d;
  } else {
    p = e * d;
    q = d;
  }
}

inline double clamp_exponent(double eta, bool* clamped = nullptr) {
  const double c = std::clamp(eta, -kMaxExponent, kMaxExponent);
  if (clamped && c != eta) *clamped = true;
  return c;
}

}  // namespace link

/// Coefficients of the log-linear intensity (alpha) and the logit
/// classification function (beta).
struct ModelParams {
  double alpha0 = 0.0;
  std::vector<double> alpha;
  double beta0 = 0.0;
  std::vector<double> beta;

  void check_dimensions(std::size_t n_z, std::size_t n_x) const {
    if (alpha.size() != n_z)
      throw invalid_argument_error("alpha has " + std::to_string(alpha.size()) + " entries but " +
                                   std::to_string(n_z) + " intensity covariates were given");
    if (beta.size() != n_x)
      throw invalid_argument_error("beta has " + std::to_string(beta.size()) + " entries but " +
                                   std::to_string(n_x) + " classification covariates were given");
  }
};

using FieldSet = std::span<const CovariateField>;

inline double linear_predictor(double intercept, std::span<const double> coef, FieldSet fields,
                               Point s) {
  double eta = intercept;
  for (std::size_t k = 0; k < coef.size(); ++k) eta += coef[k] * fields[k].at(s);
  return eta;
}

/// lambda(s) = exp(alpha0 + z(s)'alpha). The exponent is clamped to
/// +-700; *clamped is set when that happens.
inline double intensity_at(const ModelParams& params, FieldSet z_fields, Point s,
                           bool* clamped = nullptr) {
  params.check_dimensions(z_fields.size(), params.beta.size());
  const double eta = linear_predictor(params.alpha0, params.alpha, z_fields, s);
  if (std::isnan(eta)) throw numeric_range_error("intensity exponent is NaN");
  const double v = std::exp(link::clamp_exponent(eta, clamped));
  if (!std::isfinite(v) || v <= 0.0) throw numeric_range_error("intensity is not a positive finite value");
  return v;
}

/// p(s) = inverse-logit(beta0 + x(s)'beta).
inline double prob_at(const ModelParams& params, FieldSet x_fields, Point s) {
  params.check_dimensions(params.alpha.size(), x_fields.size());
  return link::sigmoid(linear_predictor(params.beta0, params.beta, x_fields, s));
}

struct MarkedPoint {
  Point location;
  int mark = 0;
};

// Type A data: exact locations with binary marks.
struct PointPattern {
  StudyWindow window;
  std::vector<MarkedPoint> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }

  void validate() const {
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (!window.contains(points[i].location))
        throw out_of_domain_error("point " + std::to_string(i) + " lies outside the study window");
      if (points[i].mark != 0 && points[i].mark != 1)
        throw validation_error("point " + std::to_string(i) + " has a mark other than 0/1");
    }
  }
};

/// Simulates a marked inhomogeneous Poisson pattern. Locations are drawn by
/// picking a quadrature sub-cell of the partition with probability
/// proportional to weight * lambda(node), then uniformly inside it; this is
/// exact whenever the intensity is constant on the sub-cells (rasters aligned
/// with or coarser than the quadrature grid). Marks are Bernoulli(p(u_i)).
template <class Rng>
PointPattern simulate_bippp(const ModelParams& params, FieldSet z_fields, FieldSet x_fields,
                            const Partition& partition, Rng& rng) {
  params.check_dimensions(z_fields.size(), x_fields.size());
  const auto nodes = partition.nodes();
  std::vector<double> cumulative(nodes.size());
  double total = 0.0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    total += nodes[i].weight * intensity_at(params, z_fields, nodes[i].location);
    cumulative[i] = total;
  }
  if (!std::isfinite(total)) throw numeric_range_error("integrated intensity is not finite");

  PointPattern out{partition.window(), {}};
  std::poisson_distribution<long long> count_dist(total);
  const long long n = total > 0.0 ? count_dist(rng) : 0;
  out.points.reserve(static_cast<std::size_t>(n));

  const double sub_w = partition.geometry().cell_width() / static_cast<double>(partition.quad_per_cell());
  const double sub_h = partition.geometry().cell_height() / static_cast<double>(partition.quad_per_cell());
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (long long i = 0; i < n; ++i) {
    const double target = unif(rng) * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
    if (it == cumulative.end()) --it;
    const QuadNode& node = nodes[static_cast<std::size_t>(it - cumulative.begin())];
    Point u{node.location.x + (unif(rng) - 0.5) * sub_w, node.location.y + (unif(rng) - 0.5) * sub_h};
    u.x = std::clamp(u.x, out.window.xmin, out.window.xmax);
    u.y = std::clamp(u.y, out.window.ymin, out.window.ymax);
    const double p = prob_at(params, x_fields, u);
    out.points.push_back({u, unif(rng) < p ? 1 : 0});
  }
  return out;
}

inline PointPattern simulate_bippp(const ModelParams& params, FieldSet z_fields, FieldSet x_fields,
                                   const Partition& partition, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return simulate_bippp(params, z_fields, x_fields, partition, rng);
}

}  // namespace cosreg

#endif  // COSREG_PROCESS_HPP
