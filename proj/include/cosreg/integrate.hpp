#ifndef COSREG_INTEGRATE_HPP
#define COSREG_INTEGRATE_HPP

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "cosreg/errors.hpp"
#include "cosreg/grid.hpp"
#include "cosreg/process.hpp"

namespace cosreg {

/// Covariate values at every quadrature node, looked up once per fit.
/// z and x are node-major: z[node * n_z + k].
class NodeTable {
 public:
  NodeTable() = default;

  NodeTable(const Partition& partition, FieldSet z_fields, FieldSet x_fields)
      : n_z_(z_fields.size()), n_x_(x_fields.size()) {
    const auto nodes = partition.nodes();
    weights_.reserve(nodes.size());
    z_.reserve(nodes.size() * n_z_);
    x_.reserve(nodes.size() * n_x_);
    for (const auto& node : nodes) {
      weights_.push_back(node.weight);
      for (const auto& f : z_fields) z_.push_back(f.at(node.location));
      for (const auto& f : x_fields) x_.push_back(f.at(node.location));
    }
    offsets_.reserve(partition.num_regions() + 1);
    for (std::size_t j = 0; j <= partition.num_regions(); ++j)
      offsets_.push_back(j < partition.num_regions() ? partition.offset(j) : nodes.size());
  }

  std::size_t num_regions() const { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  std::size_t num_nodes() const { return weights_.size(); }
  std::size_t n_z() const { return n_z_; }
  std::size_t n_x() const { return n_x_; }
  std::size_t begin(std::size_t j) const { return offsets_[j]; }
  std::size_t end(std::size_t j) const { return offsets_[j + 1]; }
  double weight(std::size_t i) const { return weights_[i]; }
  std::span<const double> z(std::size_t i) const { return {z_.data() + i * n_z_, n_z_}; }
  std::span<const double> x(std::size_t i) const { return {x_.data() + i * n_x_, n_x_}; }

 private:
  std::size_t n_z_ = 0;
  std::size_t n_x_ = 0;
  std::vector<double> weights_;
  std::vector<double> z_;
  std::vector<double> x_;
  std::vector<std::size_t> offsets_;
};

/// Per-subregion change-of-support integrals:
///   L_j = int_{A_j} lambda,  M_j = int_{A_j} lambda p,  K_j = int_{A_j} lambda (1 - p).
/// K is accumulated directly rather than as L - M so it stays accurate when p -> 1.
struct RegionIntegrals {
  std::vector<double> L;
  std::vector<double> M;
  std::vector<double> K;
  bool clamped = false;

  std::size_t size() const { return L.size(); }
  double p_tilde(std::size_t j) const { return M[j] / L[j]; }
};

enum class IntegralStatus { ok, non_finite };

/// Midpoint-rule integrals in node index order. Returns non_finite and
/// sets *bad_node instead of throwing so likelihoods can map it to +inf.
inline IntegralStatus accumulate_region_integrals(const ModelParams& params, const NodeTable& table,
                                                  RegionIntegrals& out,
                                                  std::size_t* bad_node = nullptr) {
  const std::size_t J = table.num_regions();
  out.L.assign(J, 0.0);
  out.M.assign(J, 0.0);
  out.K.assign(J, 0.0);
  out.clamped = false;
  const std::size_t nz = table.n_z();
  const std::size_t nx = table.n_x();
  for (std::size_t j = 0; j < J; ++j) {
    double L = 0.0, M = 0.0, K = 0.0;
    for (std::size_t i = table.begin(j); i < table.end(j); ++i) {
      double ez = params.alpha0;
      const auto z = table.z(i);
      for (std::size_t k = 0; k < nz; ++k) ez += params.alpha[k] * z[k];
      double ex = params.beta0;
      const auto x = table.x(i);
      for (std::size_t k = 0; k < nx; ++k) ex += params.beta[k] * x[k];
      if (std::isnan(ez) || std::isnan(ex)) {
        if (bad_node) *bad_node = i;
        return IntegralStatus::non_finite;
      }
      const double wl = table.weight(i) * std::exp(link::clamp_exponent(ez, &out.clamped));
      double p, q;
      link::sigmoid_pair(ex, p, q);
      L += wl;
      M += wl * p;
      K += wl * q;
    }
    if (!std::isfinite(L)) {
      if (bad_node) *bad_node = table.begin(j);
      return IntegralStatus::non_finite;
    }
    out.L[j] = L;
    out.M[j] = M;
    out.K[j] = K;
  }
  return IntegralStatus::ok;
}

inline RegionIntegrals region_integrals(const ModelParams& params, const NodeTable& table) {
  params.check_dimensions(table.n_z(), table.n_x());
  RegionIntegrals out;
  std::size_t bad = 0;
  if (accumulate_region_integrals(params, table, out, &bad) != IntegralStatus::ok)
    throw numeric_range_error("intensity is not finite at quadrature node " + std::to_string(bad));
  return out;
}

inline RegionIntegrals region_integrals(const ModelParams& params, FieldSet z_fields,
                                        FieldSet x_fields, const Partition& partition) {
  params.check_dimensions(z_fields.size(), x_fields.size());
  return region_integrals(params, NodeTable(partition, z_fields, x_fields));
}

}  // namespace cosreg

#endif  // COSREG_INTEGRATE_HPP
