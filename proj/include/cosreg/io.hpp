#ifndef COSREG_IO_HPP
#define COSREG_IO_HPP

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "cosreg/aggregate.hpp"
#include "cosreg/errors.hpp"
#include "cosreg/fit.hpp"
#include "cosreg/grid.hpp"
#include "cosreg/process.hpp"

namespace cosreg::io {

inline std::string format_double(double v, int precision = 17) {
  if (std::isnan(v)) return "NA";
  if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", precision, v);
  return buf;
}

namespace detail {

inline std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
      cur += c;
    } else if (c == ',' && !quoted) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

inline double parse_real(const std::string& s, std::size_t line) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty())
    throw parse_error("'" + s + "' is not a number", line);
  return v;
}

inline std::int64_t parse_int(const std::string& s, std::size_t line) {
  std::int64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty())
    throw parse_error("'" + s + "' is not an integer", line);
  return v;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> lines;  // 1-based source line of each row
};

inline CsvTable read_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size())
      throw parse_error("expected " + std::to_string(t.header.size()) + " fields, found " +
                            std::to_string(fields.size()),
                        lineno);
    t.rows.push_back(std::move(fields));
    t.lines.push_back(lineno);
  }
  if (t.header.empty()) throw parse_error("empty file, expected a header", 1);
  return t;
}

inline CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_csv(in);
}

inline std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
  return s;
}

// Sorted distinct coordinates, merging values closer than tol.
inline std::vector<double> distinct_sorted(std::vector<double> v, double tol) {
  std::sort(v.begin(), v.end());
  std::vector<double> out;
  for (double x : v)
    if (out.empty() || x - out.back() > tol) out.push_back(x);
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Covariate rasters: header x,y,value; one row per cell center, y outer, x inner.

inline void write_raster(std::ostream& out, const CovariateField& field) {
  out << "x,y,value\n";
  for (std::size_t i = 0; i < field.values().size(); ++i) {
    const Point c = field.geometry().cell_center(i);
    out << format_double(c.x) << ',' << format_double(c.y) << ',' << format_double(field.values()[i]) << '\n';
  }
}

/// Reads a raster and checks that the centers form a complete regular grid.
/// The window is inferred from the spacing; an axis with a single cell needs
/// `window` to be supplied.
inline CovariateField read_raster(std::istream& in, std::optional<StudyWindow> window = std::nullopt) {
  const auto t = detail::read_csv(in);
  if (t.header != std::vector<std::string>{"x", "y", "value"})
    throw parse_error("raster header must be 'x,y,value', found '" + detail::join(t.header) + "'", 1);
  if (t.rows.empty()) throw parse_error("raster has no cells", 1);
  std::vector<double> xs, ys, vs;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    xs.push_back(detail::parse_real(t.rows[r][0], t.lines[r]));
    ys.push_back(detail::parse_real(t.rows[r][1], t.lines[r]));
    vs.push_back(detail::parse_real(t.rows[r][2], t.lines[r]));
    if (!std::isfinite(vs.back())) throw parse_error("raster value is not finite", t.lines[r]);
  }
  const auto span_of = [](const std::vector<double>& v) {
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return std::max(1.0, *hi - *lo);
  };
  const auto ux = detail::distinct_sorted(xs, 1e-9 * span_of(xs));
  const auto uy = detail::distinct_sorted(ys, 1e-9 * span_of(ys));
  const std::size_t mx = ux.size(), my = uy.size();
  if (mx * my != t.rows.size())
    throw parse_error("raster is not a complete grid: " + std::to_string(t.rows.size()) + " rows for " +
                          std::to_string(mx) + " x " + std::to_string(my) + " distinct centers",
                      t.lines.back());

  auto axis_window = [&](const std::vector<double>& u, std::optional<std::pair<double, double>> given,
                         const char* name) -> std::pair<double, double> {
    if (u.size() == 1) {
      if (!given) throw parse_error(std::string("raster has a single cell along ") + name +
                                        "; the window must be given explicitly",
                                    1);
      return *given;
    }
    const double d = (u.back() - u.front()) / static_cast<double>(u.size() - 1);
    for (std::size_t i = 1; i < u.size(); ++i)
      if (std::fabs((u[i] - u[i - 1]) - d) > 1e-6 * d)
        throw parse_error(std::string("irregular raster spacing along ") + name, 1);
    return {u.front() - 0.5 * d, u.back() + 0.5 * d};
  };
  std::optional<std::pair<double, double>> gx, gy;
  if (window) {
    gx = std::pair{window->xmin, window->xmax};
    gy = std::pair{window->ymin, window->ymax};
  }
  const auto [x0, x1] = axis_window(ux, gx, "x");
  const auto [y0, y1] = axis_window(uy, gy, "y");
  const StudyWindow w{x0, x1, y0, y1};
  const GridGeometry g{w, mx, my};

  std::vector<double> values(mx * my, 0.0);
  std::vector<char> seen(mx * my, 0);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto ix = static_cast<std::size_t>(std::lround((xs[r] - g.cell_center(0).x) / g.cell_width()));
    const auto iy = static_cast<std::size_t>(std::lround((ys[r] - g.cell_center(0).y) / g.cell_height()));
    if (ix >= mx || iy >= my) throw parse_error("cell center outside the raster grid", t.lines[r]);
    const std::size_t k = iy * mx + ix;
    if (seen[k]) throw parse_error("duplicate raster cell", t.lines[r]);
    seen[k] = 1;
    values[k] = vs[r];
  }
  return CovariateField(w, mx, my, std::move(values));
}

inline CovariateField read_raster_file(const std::string& path, std::optional<StudyWindow> window = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_raster(in, window);
}

// ---------------------------------------------------------------------------
// Point patterns: header x,y,mark.

inline void write_points(std::ostream& out, const PointPattern& pattern) {
  out << "x,y,mark\n";
  for (const auto& p : pattern.points)
    out << format_double(p.location.x) << ',' << format_double(p.location.y) << ',' << p.mark << '\n';
}

inline PointPattern points_from_table(const detail::CsvTable& t, const StudyWindow& window) {
  PointPattern out{window, {}};
  out.points.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const Point s{detail::parse_real(t.rows[r][0], t.lines[r]), detail::parse_real(t.rows[r][1], t.lines[r])};
    const auto m = detail::parse_int(t.rows[r][2], t.lines[r]);
    if (m != 0 && m != 1) throw parse_error("mark must be 0 or 1", t.lines[r]);
    if (!window.contains(s)) throw parse_error("point lies outside the study window", t.lines[r]);
    out.points.push_back({s, static_cast<int>(m)});
  }
  return out;
}

inline PointPattern read_points(std::istream& in, const StudyWindow& window) {
  const auto t = detail::read_csv(in);
  if (t.header != std::vector<std::string>{"x", "y", "mark"})
    throw parse_error("point file header must be 'x,y,mark', found '" + detail::join(t.header) + "'", 1);
  return points_from_table(t, window);
}

// ---------------------------------------------------------------------------
// Aggregated data: C region_id,n1,n0 | D region_id,n,v | E region_id,v.

inline std::vector<std::string> header_for(DataKind k) {
  switch (k) {
    case DataKind::TypeC: return {"region_id", "n1", "n0"};
    case DataKind::TypeD: return {"region_id", "n", "v"};
    case DataKind::TypeE: return {"region_id", "v"};
  }
  return {};
}

inline void write_aggregated(std::ostream& out, const AggregatedData& data) {
  out << detail::join(header_for(data.kind)) << '\n';
  for (std::size_t j = 0; j < data.size(); ++j) {
    const auto& r = data.regions[j];
    out << j;
    switch (data.kind) {
      case DataKind::TypeC: out << ',' << r.n1 << ',' << r.n0; break;
      case DataKind::TypeD: out << ',' << r.n << ',' << r.v; break;
      case DataKind::TypeE: out << ',' << r.v; break;
    }
    out << '\n';
  }
}

inline std::optional<DataKind> kind_from_header(const std::vector<std::string>& header) {
  for (DataKind k : {DataKind::TypeC, DataKind::TypeD, DataKind::TypeE})
    if (header == header_for(k)) return k;
  return std::nullopt;
}

/// Parses aggregated records. The kind comes from the header unless
/// `forced` is given, in which case the header must still have the right
/// number of columns. Region ids must be 0..J-1 (any order).
inline AggregatedData aggregated_from_table(const detail::CsvTable& t, std::optional<DataKind> forced = std::nullopt) {
  std::optional<DataKind> kind = forced ? forced : kind_from_header(t.header);
  if (!kind)
    throw parse_error("unrecognized header '" + detail::join(t.header) +
                          "' (expected region_id,n1,n0 or region_id,n,v or region_id,v)",
                      1);
  if (t.header.size() != header_for(*kind).size())
    throw validation_error("Type " + std::string(to_string(*kind)) + " data needs header '" +
                           detail::join(header_for(*kind)) + "', found '" + detail::join(t.header) + "'");
  AggregatedData out{*kind, std::vector<RegionRecord>(t.rows.size())};
  std::vector<char> seen(t.rows.size(), 0);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::size_t ln = t.lines[r];
    const auto id = detail::parse_int(row[0], ln);
    if (id < 0 || static_cast<std::size_t>(id) >= t.rows.size())
      throw parse_error("region_id out of range 0.." + std::to_string(t.rows.size() - 1), ln);
    if (seen[static_cast<std::size_t>(id)]) throw parse_error("duplicate region_id", ln);
    seen[static_cast<std::size_t>(id)] = 1;
    RegionRecord rec;
    switch (*kind) {
      case DataKind::TypeC:
        rec.n1 = detail::parse_int(row[1], ln);
        rec.n0 = detail::parse_int(row[2], ln);
        if (rec.n1 < 0 || rec.n0 < 0) throw parse_error("negative count", ln);
        rec.n = rec.n1 + rec.n0;
        rec.v = rec.n1 > 0 ? 1 : 0;
        break;
      case DataKind::TypeD:
        rec.n = detail::parse_int(row[1], ln);
        rec.v = static_cast<int>(detail::parse_int(row[2], ln));
        if (rec.n < 0) throw parse_error("negative count", ln);
        if (rec.v != 0 && rec.v != 1) throw parse_error("v must be 0 or 1", ln);
        if (rec.v == 1 && rec.n == 0) throw parse_error("v=1 with n=0 is inconsistent", ln);
        break;
      case DataKind::TypeE:
        rec.v = static_cast<int>(detail::parse_int(row[1], ln));
        if (rec.v != 0 && rec.v != 1) throw parse_error("v must be 0 or 1", ln);
        break;
    }
    out.regions[static_cast<std::size_t>(id)] = rec;
  }
  return out;
}

inline AggregatedData read_aggregated(std::istream& in, std::optional<DataKind> forced = std::nullopt) {
  return aggregated_from_table(detail::read_csv(in), forced);
}

/// Either exact points (Type A) or an aggregated table, decided by header.
using DataFile = std::variant<PointPattern, AggregatedData>;

inline DataFile read_data_file(const std::string& path, const StudyWindow& window,
                               std::optional<DataKind> forced = std::nullopt) {
  const auto t = detail::read_csv_file(path);
  if (!forced && t.header == std::vector<std::string>{"x", "y", "mark"}) return points_from_table(t, window);
  return aggregated_from_table(t, forced);
}

// ---------------------------------------------------------------------------
// JSON documents.

inline constexpr int kFitSchemaVersion = 1;

inline nlohmann::json to_json(const ModelParams& p) {
  return {{"alpha0", p.alpha0}, {"alpha", p.alpha}, {"beta0", p.beta0}, {"beta", p.beta}};
}

inline ModelParams params_from_json(const nlohmann::json& j) {
  ModelParams p;
  p.alpha0 = j.at("alpha0").get<double>();
  p.alpha = j.at("alpha").get<std::vector<double>>();
  p.beta0 = j.at("beta0").get<double>();
  p.beta = j.at("beta").get<std::vector<double>>();
  return p;
}

namespace detail {
inline nlohmann::json number_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}
}  // namespace detail

inline nlohmann::json to_json(const FitResult& r) {
  nlohmann::json est = nlohmann::json::object(), ses = nlohmann::json::object(), cis = nlohmann::json::object();
  for (std::size_t i = 0; i < r.names.size(); ++i) {
    est[r.names[i]] = r.theta[i];
    ses[r.names[i]] = detail::number_or_null(r.se[i]);
    cis[r.names[i]] = r.cis[i].valid() ? nlohmann::json::array({r.cis[i].lo, r.cis[i].hi})
                                       : nlohmann::json(nullptr);
  }
  return {
      {"schema_version", kFitSchemaVersion},
      {"scenario", scenario_number(r.scenario)},
      {"scenario_name", std::string(scenario_name(r.scenario))},
      {"estimates", est},
      {"ses", ses},
      {"cis", cis},
      {"level", r.level},
      {"nll", detail::number_or_null(r.nll)},
      {"nll_convention", "negative log-likelihood without data-only constants (log n! terms dropped)"},
      {"converged", r.converged},
      {"hessian_positive_definite", r.hessian_pd},
      {"hessian_condition", detail::number_or_null(r.hessian_condition)},
      {"ill_conditioned", r.ill_conditioned},
      {"fixed_params", r.fixed_params},
      {"diagnostic", r.diagnostic},
      {"iterations", r.iterations},
      {"evaluations", r.evaluations},
      {"timing", {{"seconds", r.seconds}}},
  };
}

}  // namespace cosreg::io

#endif  // COSREG_IO_HPP
