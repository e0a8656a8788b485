#ifndef COSREG_GRID_HPP
#define COSREG_GRID_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cosreg/errors.hpp"

namespace cosreg {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

// Axis-aligned rectangular study region.
struct StudyWindow {
  double xmin = 0.0;
  double xmax = 1.0;
  double ymin = 0.0;
  double ymax = 1.0;

  static StudyWindow unit_square() { return {}; }

  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
  double area() const { return width() * height(); }

  bool contains(Point s) const {
    return s.x >= xmin && s.x <= xmax && s.y >= ymin && s.y <= ymax;
  }

  void validate() const {
    if (!(std::isfinite(xmin) && std::isfinite(xmax) && std::isfinite(ymin) && std::isfinite(ymax)))
      throw invalid_argument_error("study window bounds must be finite");
    if (!(xmax > xmin) || !(ymax > ymin))
      throw invalid_argument_error("study window requires xmax > xmin and ymax > ymin");
  }
};

namespace detail {

// Closed-left/open-right binning; the upper window edge falls into the last bin.
inline std::size_t bin_index(double v, double lo, double hi, std::size_t n) {
  const double t = (v - lo) / (hi - lo) * static_cast<double>(n);
  if (t <= 0.0) return 0;
  const auto k = static_cast<std::size_t>(std::floor(t));
  return std::min(k, n - 1);
}

}  // namespace detail

/// Regular grid of cells over a window. Shared by partitions and rasters so
/// both use the same point-to-cell rule.
struct GridGeometry {
  StudyWindow window;
  std::size_t nx = 1;
  std::size_t ny = 1;

  std::size_t size() const { return nx * ny; }
  double cell_width() const { return window.width() / static_cast<double>(nx); }
  double cell_height() const { return window.height() / static_cast<double>(ny); }
  double cell_area() const { return cell_width() * cell_height(); }

  // Row-major, x fastest: index = iy * nx + ix.
  std::size_t cell_of(Point s) const {
    if (!window.contains(s))
      throw out_of_domain_error("point (" + std::to_string(s.x) + ", " + std::to_string(s.y) +
                                ") lies outside the study window");
    const std::size_t ix = detail::bin_index(s.x, window.xmin, window.xmax, nx);
    const std::size_t iy = detail::bin_index(s.y, window.ymin, window.ymax, ny);
    return iy * nx + ix;
  }

  Point cell_center(std::size_t index) const {
    const std::size_t ix = index % nx;
    const std::size_t iy = index / nx;
    return {window.xmin + (static_cast<double>(ix) + 0.5) * cell_width(),
            window.ymin + (static_cast<double>(iy) + 0.5) * cell_height()};
  }

  Point cell_origin(std::size_t index) const {
    const std::size_t ix = index % nx;
    const std::size_t iy = index / nx;
    return {window.xmin + static_cast<double>(ix) * cell_width(),
            window.ymin + static_cast<double>(iy) * cell_height()};
  }
};

struct QuadNode {
  Point location;
  double weight = 0.0;
};

/// The window split into nx*ny equal subregions, each carrying a midpoint
/// rule on a quad_per_cell x quad_per_cell sub-grid. Nodes of region j occupy
/// nodes()[offset(j), offset(j+1)).
class Partition {
 public:
  Partition() = default;

  Partition(StudyWindow window, std::size_t nx, std::size_t ny, std::size_t quad_per_cell)
      : geometry_{window, nx, ny}, quad_per_cell_(quad_per_cell) {
    window.validate();
    if (nx == 0 || ny == 0 || quad_per_cell == 0)
      throw invalid_argument_error("partition dimensions and quad_per_cell must be >= 1");
    const std::size_t per_region = quad_per_cell * quad_per_cell;
    nodes_.reserve(geometry_.size() * per_region);
    offsets_.reserve(geometry_.size() + 1);
    const double sub_w = geometry_.cell_width() / static_cast<double>(quad_per_cell);
    const double sub_h = geometry_.cell_height() / static_cast<double>(quad_per_cell);
    const double w = sub_w * sub_h;
    for (std::size_t j = 0; j < geometry_.size(); ++j) {
      offsets_.push_back(nodes_.size());
      const Point o = geometry_.cell_origin(j);
      for (std::size_t b = 0; b < quad_per_cell; ++b)
        for (std::size_t a = 0; a < quad_per_cell; ++a)
          nodes_.push_back({{o.x + (static_cast<double>(a) + 0.5) * sub_w,
                             o.y + (static_cast<double>(b) + 0.5) * sub_h},
                            w});
    }
    offsets_.push_back(nodes_.size());
  }

  const StudyWindow& window() const { return geometry_.window; }
  const GridGeometry& geometry() const { return geometry_; }
  std::size_t nx() const { return geometry_.nx; }
  std::size_t ny() const { return geometry_.ny; }
  std::size_t quad_per_cell() const { return quad_per_cell_; }
  std::size_t num_regions() const { return geometry_.size(); }
  double region_area(std::size_t /*j*/) const { return geometry_.cell_area(); }
  Point region_centroid(std::size_t j) const { return geometry_.cell_center(j); }
  std::size_t region_of(Point s) const { return geometry_.cell_of(s); }

  std::span<const QuadNode> nodes() const { return nodes_; }
  std::span<const QuadNode> region_nodes(std::size_t j) const {
    return std::span<const QuadNode>(nodes_).subspan(offsets_[j], offsets_[j + 1] - offsets_[j]);
  }
  std::size_t offset(std::size_t j) const { return offsets_[j]; }

 private:
  GridGeometry geometry_{};
  std::size_t quad_per_cell_ = 1;
  std::vector<QuadNode> nodes_;
  std::vector<std::size_t> offsets_;
};

inline Partition build_partition(StudyWindow window, int nx, int ny, int quad_per_cell) {
  if (nx < 1 || ny < 1 || quad_per_cell < 1)
    throw invalid_argument_error("build_partition: nx, ny and quad_per_cell must be >= 1");
  return Partition(window, static_cast<std::size_t>(nx), static_cast<std::size_t>(ny),
                   static_cast<std::size_t>(quad_per_cell));
}

/// Piecewise-constant raster surface. values are row-major with x fastest.
class CovariateField {
 public:
  CovariateField() = default;

  CovariateField(StudyWindow window, std::size_t mx, std::size_t my, std::vector<double> values)
      : geometry_{window, mx, my}, values_(std::move(values)) {
    window.validate();
    if (mx == 0 || my == 0) throw invalid_argument_error("raster needs at least one cell per axis");
    if (values_.size() != mx * my)
      throw invalid_argument_error("raster has " + std::to_string(values_.size()) +
                                   " values, expected " + std::to_string(mx * my));
    for (std::size_t i = 0; i < values_.size(); ++i)
      if (!std::isfinite(values_[i]))
        throw invalid_argument_error("raster value " + std::to_string(i) + " is not finite");
  }

  static CovariateField constant(StudyWindow window, double value) {
    return CovariateField(window, 1, 1, {value});
  }

  const StudyWindow& window() const { return geometry_.window; }
  const GridGeometry& geometry() const { return geometry_; }
  std::size_t mx() const { return geometry_.nx; }
  std::size_t my() const { return geometry_.ny; }
  std::span<const double> values() const { return values_; }

  double at(Point s) const { return values_[geometry_.cell_of(s)]; }
  double cell_value(std::size_t index) const { return values_[index]; }

 private:
  GridGeometry geometry_{};
  std::vector<double> values_;
};

inline double field_value(const CovariateField& field, Point s) { return field.at(s); }

/// Process-convolution (low-rank) Gaussian process settings.
struct GpConfig {
  int n_knots_x = 5;
  int n_knots_y = 5;
  double bandwidth = 0.25;
  double marginal_sd = 1.0;
  std::uint64_t seed = 0;
  // Center and rescale each realization to exactly mean 0, sd marginal_sd.
  // When false the weights are normalized so the theoretical sd at the
  // window center equals marginal_sd.
  bool standardize = true;

  void validate() const {
    if (n_knots_x < 1 || n_knots_y < 1) throw invalid_argument_error("GP knot counts must be >= 1");
    if (!(bandwidth > 0.0) || !std::isfinite(bandwidth))
      throw invalid_argument_error("GP bandwidth must be positive");
    if (!(marginal_sd > 0.0) || !std::isfinite(marginal_sd))
      throw invalid_argument_error("GP marginal_sd must be positive");
  }
};

namespace detail {

// Evenly spaced knots over [lo - pad, hi + pad]; a single knot sits at the center.
inline std::vector<double> knot_axis(double lo, double hi, double pad, int n) {
  std::vector<double> k(static_cast<std::size_t>(n));
  if (n == 1) {
    k[0] = 0.5 * (lo + hi);
    return k;
  }
  const double a = lo - pad;
  const double step = (hi - lo + 2.0 * pad) / static_cast<double>(n - 1);
  for (int i = 0; i < n; ++i) k[static_cast<std::size_t>(i)] = a + step * i;
  return k;
}

// kernel[c * nk + k] = exp(-(c - knot)^2 / (2 h^2))
inline std::vector<double> kernel_axis(std::span<const double> centers, std::span<const double> knots,
                                       double h) {
  std::vector<double> out(centers.size() * knots.size());
  const double inv = 1.0 / (2.0 * h * h);
  for (std::size_t c = 0; c < centers.size(); ++c)
    for (std::size_t k = 0; k < knots.size(); ++k) {
      const double d = centers[c] - knots[k];
      out[c * knots.size() + k] = std::exp(-d * d * inv);
    }
  return out;
}

}  // namespace detail

/// Draws a smooth random surface on an mx x my raster by convolving i.i.d.
/// standard normal knot weights with an isotropic Gaussian kernel. The kernel
/// is separable, so the field is Kx * W * Ky^T.
inline CovariateField sample_gp_field(StudyWindow window, int mx, int my, const GpConfig& cfg) {
  window.validate();
  cfg.validate();
  if (mx < 1 || my < 1) throw invalid_argument_error("raster dimensions must be >= 1");
  const auto nmx = static_cast<std::size_t>(mx);
  const auto nmy = static_cast<std::size_t>(my);
  const auto nkx = static_cast<std::size_t>(cfg.n_knots_x);
  const auto nky = static_cast<std::size_t>(cfg.n_knots_y);

  const GridGeometry g{window, nmx, nmy};
  std::vector<double> cx(nmx), cy(nmy);
  for (std::size_t i = 0; i < nmx; ++i) cx[i] = g.cell_center(i).x;
  for (std::size_t i = 0; i < nmy; ++i) cy[i] = g.cell_center(i * nmx).y;
  const auto kx = detail::knot_axis(window.xmin, window.xmax, cfg.bandwidth, cfg.n_knots_x);
  const auto ky = detail::knot_axis(window.ymin, window.ymax, cfg.bandwidth, cfg.n_knots_y);
  const auto Kx = detail::kernel_axis(cx, kx, cfg.bandwidth);
  const auto Ky = detail::kernel_axis(cy, ky, cfg.bandwidth);

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> w(nkx * nky);  // w[b * nkx + a] for knot (kx[a], ky[b])
  for (double& v : w) v = normal(rng);

  // tmp[iy * nkx + a] = sum_b Ky[iy, b] * w[b, a]
  std::vector<double> tmp(nmy * nkx, 0.0);
  for (std::size_t iy = 0; iy < nmy; ++iy)
    for (std::size_t b = 0; b < nky; ++b) {
      const double kyb = Ky[iy * nky + b];
      for (std::size_t a = 0; a < nkx; ++a) tmp[iy * nkx + a] += kyb * w[b * nkx + a];
    }
  std::vector<double> values(nmx * nmy, 0.0);
  for (std::size_t iy = 0; iy < nmy; ++iy)
    for (std::size_t ix = 0; ix < nmx; ++ix) {
      double s = 0.0;
      for (std::size_t a = 0; a < nkx; ++a) s += Kx[ix * nkx + a] * tmp[iy * nkx + a];
      values[iy * nmx + ix] = s;
    }

  if (cfg.standardize) {
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(values.size()));
    const double scale = sd > 0.0 ? cfg.marginal_sd / sd : 0.0;
    for (double& v : values) v = (v - mean) * scale;
  } else {
    const Point c{0.5 * (window.xmin + window.xmax), 0.5 * (window.ymin + window.ymax)};
    double ss = 0.0;
    for (double a : kx)
      for (double b : ky) {
        const double d2 = (c.x - a) * (c.x - a) + (c.y - b) * (c.y - b);
        const double k = std::exp(-d2 / (2.0 * cfg.bandwidth * cfg.bandwidth));
        ss += k * k;
      }
    const double scale = cfg.marginal_sd / std::sqrt(ss);
    for (double& v : values) v *= scale;
  }
  return CovariateField(window, nmx, nmy, std::move(values));
}

}  // namespace cosreg

#endif  // COSREG_GRID_HPP
