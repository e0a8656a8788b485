#ifndef COSREG_LIKELIHOOD_HPP
#define COSREG_LIKELIHOOD_HPP

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cosreg/aggregate.hpp"
#include "cosreg/errors.hpp"
#include "cosreg/integrate.hpp"
#include "cosreg/process.hpp"

// All negative log-likelihoods below drop additive terms that depend only on
// the data (log n! and friends). Compare values across implementations by
// differences, not absolute levels.

namespace cosreg {

enum class Scenario {
  S1_logistic = 1,
  S2_joint_counts = 2,
  S3_joint_indicator = 3,
  S4_conditional_indicator = 4,
  S5_bernoulli_indicator = 5,
};

inline int scenario_number(Scenario s) { return static_cast<int>(s); }

inline Scenario scenario_from_number(int k) {
  if (k < 1 || k > 5) throw invalid_argument_error("scenario must be in 1..5, got " + std::to_string(k));
  return static_cast<Scenario>(k);
}

inline std::string_view scenario_name(Scenario s) {
  switch (s) {
    case Scenario::S1_logistic: return "S1_logistic";
    case Scenario::S2_joint_counts: return "S2_joint_counts";
    case Scenario::S3_joint_indicator: return "S3_joint_indicator";
    case Scenario::S4_conditional_indicator: return "S4_conditional_indicator";
    case Scenario::S5_bernoulli_indicator: return "S5_bernoulli_indicator";
  }
  return "?";
}

// Aggregated kind each areal scenario consumes. S1 uses Type A points.
inline DataKind required_kind(Scenario s) {
  switch (s) {
    case Scenario::S2_joint_counts: return DataKind::TypeC;
    case Scenario::S3_joint_indicator:
    case Scenario::S4_conditional_indicator: return DataKind::TypeD;
    case Scenario::S5_bernoulli_indicator: return DataKind::TypeE;
    case Scenario::S1_logistic: break;
  }
  throw invalid_argument_error("scenario 1 uses exact point data, not an aggregated kind");
}

inline constexpr double kInf = std::numeric_limits<double>::infinity();

namespace detail {

inline double finite_or_inf(double v) { return std::isnan(v) ? kInf : v; }

// log P(v | 1 - (1 - p~)^n) with log(1 - p~) = log K - log L.
inline double log_indicator_given_count(int v, std::int64_t n, double L, double K) {
  if (n == 0) return v == 0 ? 0.0 : -kInf;
  if (!(L > 0.0)) return -kInf;
  const double log_none = static_cast<double>(n) * (std::log(K) - std::log(L));
  if (v == 0) return log_none;
  return std::log(-std::expm1(log_none));
}

}  // namespace detail

/// Per-point classification covariates, precomputed for repeated evaluation.
struct PointTable {
  std::size_t n_x = 0;
  std::vector<int> marks;
  std::vector<double> x;  // x[i * n_x + k]

  PointTable() = default;
  PointTable(const PointPattern& pattern, FieldSet x_fields) : n_x(x_fields.size()) {
    marks.reserve(pattern.size());
    x.reserve(pattern.size() * n_x);
    for (const auto& p : pattern.points) {
      marks.push_back(p.mark);
      for (const auto& f : x_fields) x.push_back(f.at(p.location));
    }
  }
  std::size_t size() const { return marks.size(); }
};

inline double nll_s1_logistic(const ModelParams& params, const PointTable& points) {
  double nll = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    double eta = params.beta0;
    for (std::size_t k = 0; k < points.n_x; ++k) eta += params.beta[k] * points.x[i * points.n_x + k];
    nll += points.marks[i] == 1 ? link::softplus(-eta) : link::softplus(eta);
  }
  return detail::finite_or_inf(nll);
}

inline double nll_s1_logistic(const ModelParams& params, const PointPattern& pattern, FieldSet x_fields) {
  if (pattern.empty()) throw invalid_argument_error("logistic likelihood needs at least one point");
  if (params.beta.size() != x_fields.size())
    throw invalid_argument_error("beta length does not match the classification covariates");
  return nll_s1_logistic(params, PointTable(pattern, x_fields));
}

inline double nll_s2_from_integrals(const AggregatedData& data, const RegionIntegrals& I) {
  double ll = 0.0;
  for (std::size_t j = 0; j < data.size(); ++j) {
    const auto& r = data.regions[j];
    if (r.n1 > 0) ll += static_cast<double>(r.n1) * std::log(I.M[j]);
    if (r.n0 > 0) ll += static_cast<double>(r.n0) * std::log(I.K[j]);
    ll -= I.L[j];
  }
  return detail::finite_or_inf(-ll);
}

inline double nll_s3_from_integrals(const AggregatedData& data, const RegionIntegrals& I) {
  double ll = 0.0;
  for (std::size_t j = 0; j < data.size(); ++j) {
    const auto& r = data.regions[j];
    if (r.n > 0) ll += static_cast<double>(r.n) * std::log(I.L[j]);
    ll -= I.L[j];
    ll += detail::log_indicator_given_count(r.v, r.n, I.L[j], I.K[j]);
  }
  return detail::finite_or_inf(-ll);
}

inline double nll_s4_from_integrals(const AggregatedData& data, const RegionIntegrals& I) {
  double ll = 0.0;
  for (std::size_t j = 0; j < data.size(); ++j) {
    const auto& r = data.regions[j];
    if (r.n > 0) ll += detail::log_indicator_given_count(r.v, r.n, I.L[j], I.K[j]);
  }
  return detail::finite_or_inf(-ll);
}

inline double nll_s5_from_integrals(const AggregatedData& data, const RegionIntegrals& I) {
  double nll = 0.0;
  for (std::size_t j = 0; j < data.size(); ++j) {
    const double M = I.M[j];
    nll += data.regions[j].v == 1 ? -std::log(-std::expm1(-M)) : M;
  }
  return detail::finite_or_inf(nll);
}

namespace detail {

inline void require_kind(const AggregatedData& data, DataKind kind, Scenario s) {
  if (data.kind != kind)
    throw validation_error(std::string(scenario_name(s)) + " needs Type " + std::string(to_string(kind)) +
                           " data, got Type " + std::string(to_string(data.kind)));
}

template <class FromIntegrals>
double areal_nll(const ModelParams& params, const AggregatedData& data, const NodeTable& table,
                 FromIntegrals&& from) {
  if (data.size() != table.num_regions())
    throw validation_error("data has " + std::to_string(data.size()) + " regions but the partition has " +
                           std::to_string(table.num_regions()));
  RegionIntegrals I;
  if (accumulate_region_integrals(params, table, I) != IntegralStatus::ok) return kInf;
  return from(data, I);
}

}  // namespace detail

inline double nll_s2_joint_counts(const ModelParams& params, const AggregatedData& data,
                                  const NodeTable& table) {
  detail::require_kind(data, DataKind::TypeC, Scenario::S2_joint_counts);
  return detail::areal_nll(params, data, table, nll_s2_from_integrals);
}

inline double nll_s3_joint_indicator(const ModelParams& params, const AggregatedData& data,
                                     const NodeTable& table) {
  detail::require_kind(data, DataKind::TypeD, Scenario::S3_joint_indicator);
  return detail::areal_nll(params, data, table, nll_s3_from_integrals);
}

inline double nll_s4_conditional_indicator(const ModelParams& params, const AggregatedData& data,
                                           const NodeTable& table) {
  detail::require_kind(data, DataKind::TypeD, Scenario::S4_conditional_indicator);
  return detail::areal_nll(params, data, table, nll_s4_from_integrals);
}

inline double nll_s5_bernoulli_indicator(const ModelParams& params, const AggregatedData& data,
                                         const NodeTable& table) {
  detail::require_kind(data, DataKind::TypeE, Scenario::S5_bernoulli_indicator);
  return detail::areal_nll(params, data, table, nll_s5_from_integrals);
}

/// Maps a scenario's free parameter vector to ModelParams.
///   S1:          [beta0, beta...]
///   S4:          [alpha..., beta0, beta...]   (alpha0 fixed at 0: p~ is invariant to it)
///   S2, S3, S5:  [alpha0, alpha..., beta0, beta...]
class ParamLayout {
 public:
  ParamLayout(Scenario s, std::size_t n_z, std::size_t n_x) : scenario_(s), n_z_(n_z), n_x_(n_x) {}

  Scenario scenario() const { return scenario_; }
  std::size_t n_z() const { return n_z_; }
  std::size_t n_x() const { return n_x_; }
  bool has_alpha0() const { return uses_alpha() && scenario_ != Scenario::S4_conditional_indicator; }
  bool uses_alpha() const { return scenario_ != Scenario::S1_logistic; }

  std::size_t size() const {
    return (has_alpha0() ? 1 : 0) + (uses_alpha() ? n_z_ : 0) + 1 + n_x_;
  }

  // Position of beta_k (k = 0 is the intercept) in the free vector.
  std::size_t beta_index(std::size_t k) const { return size() - 1 - n_x_ + k; }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    if (has_alpha0()) out.push_back("alpha0");
    if (uses_alpha())
      for (std::size_t k = 0; k < n_z_; ++k) out.push_back("alpha" + std::to_string(k + 1));
    out.push_back("beta0");
    for (std::size_t k = 0; k < n_x_; ++k) out.push_back("beta" + std::to_string(k + 1));
    return out;
  }

  std::vector<std::string> fixed_names() const {
    std::vector<std::string> out;
    if (!uses_alpha()) {
      out.push_back("alpha0");
      for (std::size_t k = 0; k < n_z_; ++k) out.push_back("alpha" + std::to_string(k + 1));
    } else if (!has_alpha0()) {
      out.push_back("alpha0");
    }
    return out;
  }

  void unpack(std::span<const double> theta, ModelParams& p) const {
    std::size_t i = 0;
    p.alpha0 = has_alpha0() ? theta[i++] : 0.0;
    p.alpha.assign(n_z_, 0.0);
    if (uses_alpha())
      for (std::size_t k = 0; k < n_z_; ++k) p.alpha[k] = theta[i++];
    p.beta0 = theta[i++];
    p.beta.resize(n_x_);
    for (std::size_t k = 0; k < n_x_; ++k) p.beta[k] = theta[i++];
  }

  ModelParams unpack(std::span<const double> theta) const {
    ModelParams p;
    unpack(theta, p);
    return p;
  }

  std::vector<double> pack(const ModelParams& p) const {
    std::vector<double> theta;
    theta.reserve(size());
    if (has_alpha0()) theta.push_back(p.alpha0);
    if (uses_alpha())
      for (std::size_t k = 0; k < n_z_; ++k) theta.push_back(p.alpha[k]);
    theta.push_back(p.beta0);
    for (std::size_t k = 0; k < n_x_; ++k) theta.push_back(p.beta[k]);
    return theta;
  }

 private:
  Scenario scenario_;
  std::size_t n_z_;
  std::size_t n_x_;
};

}  // namespace cosreg

#endif  // COSREG_LIKELIHOOD_HPP
