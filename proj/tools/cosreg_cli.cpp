#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cosreg/cosreg.hpp"

namespace fs = std::filesystem;
using namespace cosreg;

namespace {

enum Exit { kOk = 0, kUsage = 1, kNoConvergence = 2, kNumeric = 3 };

struct GridOpts {
  int nx = 20;
  int ny = 20;
  int quad = 0;  // 0: match the raster resolution
  std::vector<double> window;
};

void add_grid_options(CLI::App* app, GridOpts& g) {
  app->add_option("--nx", g.nx, "Subregions along x")->capture_default_str();
  app->add_option("--ny", g.ny, "Subregions along y")->capture_default_str();
  app->add_option("--quad", g.quad, "Quadrature nodes per subregion side (0 = raster resolution)")
      ->capture_default_str();
  app->add_option("--window", g.window, "Study window xmin,xmax,ymin,ymax")->delimiter(',')->expected(4);
}

std::optional<StudyWindow> window_of(const GridOpts& g) {
  if (g.window.empty()) return std::nullopt;
  StudyWindow w{g.window[0], g.window[1], g.window[2], g.window[3]};
  w.validate();
  return w;
}

// Sub-cells per subregion so that each quadrature node sits in one raster cell.
int resolve_quad(const GridOpts& g, const std::vector<CovariateField>& fields) {
  if (g.quad > 0) return g.quad;
  std::size_t q = 1;
  for (const auto& f : fields) {
    if (f.mx() % static_cast<std::size_t>(g.nx) == 0 && f.my() % static_cast<std::size_t>(g.ny) == 0 &&
        f.mx() / static_cast<std::size_t>(g.nx) == f.my() / static_cast<std::size_t>(g.ny))
      q = std::max(q, f.mx() / static_cast<std::size_t>(g.nx));
  }
  return static_cast<int>(q);
}

std::vector<CovariateField> read_rasters(const std::vector<std::string>& paths, std::optional<StudyWindow> w) {
  std::vector<CovariateField> out;
  for (const auto& p : paths) {
    try {
      out.push_back(io::read_raster_file(p, w));
    } catch (const parse_error& e) {
      throw parse_error(p + ": " + e.what(), e.line());
    }
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

template <class F>
void write_file(const fs::path& path, F&& fill) {
  std::ostringstream ss;
  fill(ss);
  write_text(path, ss.str());
}

// ---------------------------------------------------------------------------

struct SimulateOpts {
  GridOpts grid;
  std::vector<std::string> z_paths, x_paths;
  std::optional<double> z_const, x_const;
  int raster_per_cell = 4;
  double bandwidth = 0.1;
  int knots = 0;
  double alpha0 = std::log(10.0 * 400.0);
  std::vector<double> alpha = {1.0};
  double beta0 = -3.0;
  std::vector<double> beta = {1.0};
  std::uint64_t seed = 1;
  std::string out = "sim";
};

int cmd_simulate(const SimulateOpts& o) {
  fs::create_directories(o.out);
  const auto given = window_of(o.grid);
  std::vector<CovariateField> z = read_rasters(o.z_paths, given), x = read_rasters(o.x_paths, given);
  const StudyWindow w = given ? *given : !z.empty() ? z[0].window() : !x.empty() ? x[0].window() : StudyWindow{};
  const int mx = o.grid.nx * o.raster_per_cell, my = o.grid.ny * o.raster_per_cell;

  GpConfig gp;
  gp.bandwidth = o.bandwidth;
  gp.n_knots_x = gp.n_knots_y =
      o.knots > 0 ? o.knots : std::max(5, static_cast<int>(std::ceil(1.0 / o.bandwidth)) + 3);
  auto fill = [&](std::vector<CovariateField>& fields, std::optional<double> c, std::size_t want,
                  std::uint64_t stream, const char* name) {
    if (!fields.empty()) return;
    for (std::size_t k = 0; k < want; ++k) {
      if (c) {
        fields.push_back(CovariateField::constant(w, *c));
      } else {
        gp.seed = derive_seed(o.seed, stream, k);
        fields.push_back(sample_gp_field(w, static_cast<std::size_t>(mx), static_cast<std::size_t>(my), gp));
      }
      write_file(fs::path(o.out) / (std::string(name) + (want > 1 ? std::to_string(k + 1) : "") + ".csv"),
                 [&](std::ostream& os) { io::write_raster(os, fields.back()); });
    }
  };
  fill(z, o.z_const, o.alpha.size(), 21, "z");
  fill(x, o.x_const, o.beta.size(), 22, "x");

  const ModelParams params{o.alpha0, o.alpha, o.beta0, o.beta};
  params.check_dimensions(z.size(), x.size());
  std::vector<CovariateField> all = z;
  all.insert(all.end(), x.begin(), x.end());
  const GridOpts& g = o.grid;
  const int quad = resolve_quad(g, all);
  const Partition part = build_partition(w, g.nx, g.ny, quad);

  const PointPattern pattern = simulate_bippp(params, z, x, part, derive_seed(o.seed, 23, 0));
  const AggregatedData c = aggregate_to_type_c(pattern, part);
  const fs::path dir(o.out);
  write_file(dir / "points.csv", [&](std::ostream& os) { io::write_points(os, pattern); });
  write_file(dir / "type_c.csv", [&](std::ostream& os) { io::write_aggregated(os, c); });
  write_file(dir / "type_d.csv", [&](std::ostream& os) { io::write_aggregated(os, degrade(c, DataKind::TypeD)); });
  write_file(dir / "type_e.csv", [&](std::ostream& os) { io::write_aggregated(os, degrade(c, DataKind::TypeE)); });

  nlohmann::json truth = {{"schema_version", io::kFitSchemaVersion},
                          {"params", io::to_json(params)},
                          {"window", {w.xmin, w.xmax, w.ymin, w.ymax}},
                          {"partition", {{"nx", g.nx}, {"ny", g.ny}, {"quad_per_cell", quad}}},
                          {"seed", o.seed},
                          {"n_points", pattern.size()}};
  write_text(dir / "truth.json", truth.dump(2) + "\n");

  std::size_t ones = 0;
  for (const auto& p : pattern.points) ones += static_cast<std::size_t>(p.mark);
  std::cout << "simulated " << pattern.size() << " points (" << ones << " with mark 1) on " << part.num_regions()
            << " subregions; files written to " << dir.string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct AggregateOpts {
  GridOpts grid;
  std::string input;
  std::string kind = "C";
  std::string out;
};

int cmd_aggregate(const AggregateOpts& o) {
  const StudyWindow w = window_of(o.grid).value_or(StudyWindow{});
  const DataKind target = parse_data_kind(o.kind);
  const auto file = io::read_data_file(o.input, w);
  AggregatedData result;
  if (const auto* pts = std::get_if<PointPattern>(&file)) {
    const Partition part = build_partition(w, o.grid.nx, o.grid.ny, 1);
    result = degrade(aggregate_to_type_c(*pts, part), target);
  } else {
    result = degrade(std::get<AggregatedData>(file), target);
  }
  std::ostringstream ss;
  io::write_aggregated(ss, result);
  if (o.out.empty())
    std::cout << ss.str();
  else
    write_text(o.out, ss.str());
  return kOk;
}

// ---------------------------------------------------------------------------

struct FitOpts {
  GridOpts grid;
  std::string data;
  std::vector<std::string> z_paths, x_paths;
  int scenario = 2;
  std::string kind;
  double level = 0.95;
  std::vector<double> start;
  std::string truth;
  std::string out = ".";
  int max_iter = 5000;
};

std::string fmt(double v, int prec = 6) { return io::format_double(v, prec); }

void print_table(std::ostream& os, const FitResult& r) {
  char line[160];
  std::snprintf(line, sizeof line, "%-10s %14s %12s %14s %14s\n", "param", "estimate", "se", "ci_lo", "ci_hi");
  os << line;
  for (std::size_t i = 0; i < r.names.size(); ++i) {
    std::snprintf(line, sizeof line, "%-10s %14s %12s %14s %14s\n", r.names[i].c_str(), fmt(r.theta[i]).c_str(),
                  fmt(r.se[i]).c_str(), fmt(r.cis[i].lo).c_str(), fmt(r.cis[i].hi).c_str());
    os << line;
  }
  for (const auto& f : r.fixed_params) os << f << ": fixed (not estimated)\n";
  os << "nll " << fmt(r.nll, 10) << "  converged " << (r.converged ? "yes" : "no") << "  hessian_condition "
     << fmt(r.hessian_condition, 4) << (r.ill_conditioned ? " (ill-conditioned)" : "") << "\n";
  if (!r.diagnostic.empty()) os << "diagnostic: " << r.diagnostic << "\n";
}

std::optional<double> truth_value(const ModelParams& p, const std::string& name) {
  if (name == "alpha0") return p.alpha0;
  if (name == "beta0") return p.beta0;
  const bool is_alpha = name.rfind("alpha", 0) == 0;
  const std::size_t k = std::stoul(name.substr(is_alpha ? 5 : 4)) - 1;
  const auto& v = is_alpha ? p.alpha : p.beta;
  if (k >= v.size()) return std::nullopt;
  return v[k];
}

int cmd_fit(const FitOpts& o) {
  const Scenario s = scenario_from_number(o.scenario);
  const auto given = window_of(o.grid);
  const auto z = read_rasters(o.z_paths, given);
  const auto x = read_rasters(o.x_paths, given);
  if (x.empty()) throw validation_error("at least one classification covariate raster (--x) is required");
  const StudyWindow w = given ? *given : x[0].window();

  std::optional<DataKind> forced;
  if (!o.kind.empty()) forced = parse_data_kind(o.kind);
  const auto file = io::read_data_file(o.data, w, forced);

  FitOptions opt;
  opt.level = o.level;
  opt.nm.max_iter = o.max_iter;
  if (!o.start.empty()) opt.start = o.start;

  FitResult r;
  if (s == Scenario::S1_logistic) {
    const auto* pts = std::get_if<PointPattern>(&file);
    if (!pts) throw validation_error("scenario 1 needs exact points with header 'x,y,mark'");
    r = fit_logistic(*pts, x, opt);
  } else {
    const auto* agg = std::get_if<AggregatedData>(&file);
    if (!agg)
      throw validation_error("scenario " + std::to_string(o.scenario) + " needs Type " +
                             std::string(to_string(required_kind(s))) + " data with header '" +
                             io::detail::join(io::header_for(required_kind(s))) + "'");
    if (agg->kind != required_kind(s))
      throw validation_error("scenario " + std::to_string(o.scenario) + " needs Type " +
                             std::string(to_string(required_kind(s))) + " data with header '" +
                             io::detail::join(io::header_for(required_kind(s))) + "', got Type " +
                             std::string(to_string(agg->kind)));
    if (z.empty()) throw validation_error("at least one intensity covariate raster (--z) is required");
    std::vector<CovariateField> all = z;
    all.insert(all.end(), x.begin(), x.end());
    const Partition part = build_partition(w, o.grid.nx, o.grid.ny, resolve_quad(o.grid, all));
    r = fit_areal(s, *agg, part, z, x, opt);
  }

  fs::create_directories(o.out);
  write_text(fs::path(o.out) / "fit.json", io::to_json(r).dump(2) + "\n");
  std::cout << "scenario " << o.scenario << " (" << scenario_name(s) << ")\n";
  print_table(std::cout, r);

  if (!o.truth.empty()) {
    std::ifstream in(o.truth);
    if (!in) throw std::runtime_error("cannot open " + o.truth);
    const auto truth = io::params_from_json(nlohmann::json::parse(in).at("params"));
    for (std::size_t i = 0; i < r.names.size(); ++i) {
      const auto t = truth_value(truth, r.names[i]);
      if (!t) continue;
      std::cout << "CI contains truth for " << r.names[i] << " (" << fmt(*t) << "): "
                << (r.cis[i].contains(*t) ? "yes" : "no") << "\n";
    }
  }
  return r.converged ? kOk : kNoConvergence;
}

// ---------------------------------------------------------------------------

struct ExperimentOpts {
  std::vector<int> settings = {1};
  std::vector<int> scenarios = {1, 2, 3, 4, 5};
  std::optional<int> replicates;
  std::optional<std::uint64_t> seed;
  std::optional<int> pilot;
  std::string out = "experiment";
  int threads = 1;
  bool quiet = false;
};

int cmd_experiment(const ExperimentOpts& o) {
  std::vector<ExperimentResult> results;
  for (int id : o.settings) {
    SettingConfig cfg = setting_config(id);
    if (o.replicates) cfg.replicates = *o.replicates;
    if (o.seed) cfg.master_seed = *o.seed;
    if (o.pilot) cfg.pilot_fields = *o.pilot;
    cfg.threads = o.threads;
    const Calibration cal = calibrate_intercepts(cfg);
    if (!o.quiet)
      std::cerr << "setting " << id << ": alpha0 " << fmt(cal.alpha0) << ", beta0 " << fmt(cal.beta0)
                << ", expected n/cell " << fmt(cal.expected_n_per_cell, 4) << ", expected vbar "
                << fmt(cal.expected_vbar, 4) << "\n";
    int done = 0;
    auto progress = [&](int) {
      ++done;
      if (!o.quiet && (done % 20 == 0 || done == cfg.replicates))
        std::cerr << "  " << done << "/" << cfg.replicates << " replicates\n";
    };
    results.push_back(run_experiment(cfg, o.scenarios, cal, progress));
  }
  write_experiment(o.out, results);
  for (const auto& r : results) write_summary_csv(std::cout, r.summary, &r.calibration);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Regression on spatially aggregated binary marks"};
  app.require_subcommand(1);

  SimulateOpts sim;
  auto* s = app.add_subcommand("simulate", "Simulate a marked point pattern and its aggregated forms");
  add_grid_options(s, sim.grid);
  s->add_option("--z", sim.z_paths, "Intensity covariate raster(s); GP fields are drawn when absent");
  s->add_option("--x", sim.x_paths, "Classification covariate raster(s)");
  s->add_option("--z-const", sim.z_const, "Use a constant intensity covariate");
  s->add_option("--x-const", sim.x_const, "Use a constant classification covariate");
  s->add_option("--raster-per-cell", sim.raster_per_cell, "Raster cells per subregion side for drawn fields")
      ->capture_default_str();
  s->add_option("--bandwidth", sim.bandwidth, "GP kernel bandwidth for drawn fields")->capture_default_str();
  s->add_option("--knots", sim.knots, "GP knots per side (default from bandwidth)");
  s->add_option("--alpha0", sim.alpha0, "Intensity intercept")->capture_default_str();
  s->add_option("--alpha", sim.alpha, "Intensity slopes")->delimiter(',')->capture_default_str();
  s->add_option("--beta0", sim.beta0, "Classification intercept")->capture_default_str();
  s->add_option("--beta", sim.beta, "Classification slopes")->delimiter(',')->capture_default_str();
  s->add_option("--seed", sim.seed, "Random seed")->capture_default_str();
  s->add_option("--out", sim.out, "Output directory")->capture_default_str();

  AggregateOpts agg;
  auto* a = app.add_subcommand("aggregate", "Aggregate points or degrade an aggregated table");
  add_grid_options(a, agg.grid);
  a->add_option("input", agg.input, "points.csv or an aggregated CSV")->required();
  a->add_option("--kind", agg.kind, "Target kind: C, D or E")->capture_default_str();
  a->add_option("--out", agg.out, "Output CSV (stdout when omitted)");

  FitOpts fit;
  auto* f = app.add_subcommand("fit", "Fit one scenario to a data file");
  add_grid_options(f, fit.grid);
  f->add_option("data", fit.data, "points.csv or aggregated CSV")->required();
  f->add_option("--z", fit.z_paths, "Intensity covariate raster(s)");
  f->add_option("--x", fit.x_paths, "Classification covariate raster(s)");
  f->add_option("--scenario", fit.scenario, "Scenario 1-5")->capture_default_str();
  f->add_option("--kind", fit.kind, "Override the data kind inferred from the header (C, D or E)");
  f->add_option("--level", fit.level, "Confidence level")->capture_default_str();
  f->add_option("--start", fit.start, "Start vector in parameter order")->delimiter(',');
  f->add_option("--truth", fit.truth, "truth.json from simulate; prints a coverage check");
  f->add_option("--out", fit.out, "Output directory for fit.json")->capture_default_str();
  f->add_option("--max-iter", fit.max_iter, "Nelder-Mead iterations per run")->capture_default_str();

  ExperimentOpts exp;
  auto* e = app.add_subcommand("experiment", "Run the Monte-Carlo coverage experiment");
  e->add_option("--setting", exp.settings, "Setting(s) 1-4")->delimiter(',')->capture_default_str();
  e->add_option("--scenarios", exp.scenarios, "Scenarios to fit")->delimiter(',')->capture_default_str();
  e->add_option("--replicates", exp.replicates, "Replicates per setting (default 200)");
  e->add_option("--seed", exp.seed, "Master seed");
  e->add_option("--pilot", exp.pilot, "Pilot covariate draws for calibration");
  e->add_option("--out", exp.out, "Output directory")->capture_default_str();
  e->add_option("--threads", exp.threads, "Worker threads")->capture_default_str();
  e->add_flag("--quiet", exp.quiet, "No progress output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    return app.exit(err) == 0 ? kOk : kUsage;
  }

  try {
    if (s->parsed()) return cmd_simulate(sim);
    if (a->parsed()) return cmd_aggregate(agg);
    if (f->parsed()) return cmd_fit(fit);
    if (e->parsed()) return cmd_experiment(exp);
  } catch (const numeric_range_error& err) {
    std::cerr << "numeric failure: " << err.what() << "\n";
    return kNumeric;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
