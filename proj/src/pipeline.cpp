#include "nonlocal/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>

#include <json.hpp>

#include "nonlocal/errors.hpp"

namespace nonlocal {

namespace {

using ojson = nlohmann::ordered_json;
namespace fs = std::filesystem;

constexpr Var kY[2] = {Var::y1, Var::y2};
constexpr Var kA[2] = {Var::a1, Var::a2};

std::vector<ExprFn> parse_all(const std::vector<std::string>& texts) {
  std::vector<ExprFn> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(ExprFn::parse(t));
  return out;
}

VarValues control_values(double t, double s, const Point& y, const Control& a) {
  VarValues v{};
  v[static_cast<int>(Var::t)] = t;
  v[static_cast<int>(Var::s)] = s;
  for (int i = 0; i < 2; ++i) {
    v[static_cast<int>(kY[i])] = y[static_cast<std::size_t>(i)];
    v[static_cast<int>(kA[i])] = a[static_cast<std::size_t>(i)];
  }
  return v;
}

double eval_at(const ExprFn& e, double t, double s, std::span<const double> y) {
  return e(control_values(t, s, {y[0], y.size() > 1 ? y[1] : 0.0}, {}));
}

// JSON cannot hold inf or NaN; nlohmann writes them as null.
ojson norm_json(const NormReport& r) {
  return {{"sup", r.sup},           {"semi_s", r.semi_s},   {"semi_y", r.semi_y},
          {"c_alpha", r.c_alpha},   {"c_2alpha", r.c_2alpha}, {"bracket", r.bracket},
          {"double_bracket", r.double_bracket}, {"sampled", r.sampled}};
}

ojson solver_json(const SolverReport& r, bool timing) {
  ojson out;
  out["converged"] = r.converged;
  out["iterations"] = r.iterations;
  out["final_increment"] = r.final_increment;
  out["contraction_factors"] = r.contraction_factors;
  ojson sub = ojson::array();
  for (const auto& [a, b] : r.subintervals) sub.push_back({a, b});
  out["subintervals"] = sub;
  ojson windows = ojson::array();
  for (const WindowReport& w : r.windows) {
    windows.push_back({{"start", w.start},
                       {"end", w.end},
                       {"accepted", w.accepted},
                       {"iterations", w.iterations},
                       {"final_increment", w.final_increment},
                       {"increments", w.increments},
                       {"contraction_factors", w.contraction_factors}});
  }
  out["windows"] = windows;
  out["norm_snapshot"] = norm_json(r.norm_snapshot);
  if (timing) out["wall_time"] = r.wall_time;
  return out;
}

ojson grid_json(const TriangleGrid& g) {
  return {{"n_time", g.n_time()}, {"dim", g.dim()},       {"n_space", g.n_space()},
          {"horizon", g.horizon()}, {"period", g.period()}, {"dtau", g.dtau()},
          {"dy", g.dy()}};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

void write_json(const fs::path& path, const ojson& doc) { write_text(path, doc.dump(2) + "\n"); }

void append_number(std::string& line, double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  line += buf;
}

void csv_header(std::string& out, int dim) {
  out += dim == 2 ? "t,s,y1,y2,u,v\n" : "t,s,y1,u,v\n";
}

void csv_row(std::string& out, double t, double s, const std::array<double, 2>& y, int dim,
             double u, double v) {
  append_number(out, t);
  out += ',';
  append_number(out, s);
  for (int a = 0; a < dim; ++a) {
    out += ',';
    append_number(out, y[static_cast<std::size_t>(a)]);
  }
  out += ',';
  append_number(out, u);
  out += ',';
  append_number(out, v);
  out += '\n';
}

// Natural orientation: rows t_a <= s_b.
void write_policy_csv(std::ostream& out, const EquilibriumPolicy& pol) {
  const TriangleGrid& g = pol.grid;
  std::string buf;
  csv_header(buf, g.dim());
  for (int a = 0; a < g.n_time(); ++a) {
    for (int b = a; b < g.n_time(); ++b) {
      for (std::size_t k = 0; k < g.points(); ++k) {
        csv_row(buf, g.tau(a), g.tau(b), g.position(k), g.dim(), pol.u(a, b, k), pol.u_t(a, b, k));
      }
    }
    out << buf;
    buf.clear();
  }
}

void write_equilibrium_csv(std::ostream& out, const EquilibriumPolicy& pol, int control_dim) {
  const TriangleGrid& g = pol.grid;
  std::string buf = g.dim() == 2 ? "s,y1,y2,value" : "s,y1,value";
  for (int c = 0; c < control_dim; ++c) buf += ",a" + std::to_string(c + 1);
  buf += '\n';
  for (int m = 0; m < g.n_time(); ++m) {
    for (std::size_t k = 0; k < g.points(); ++k) {
      const auto y = g.position(k);
      append_number(buf, g.tau(m));
      for (int a = 0; a < g.dim(); ++a) {
        buf += ',';
        append_number(buf, y[static_cast<std::size_t>(a)]);
      }
      buf += ',';
      append_number(buf, pol.value.at(m, k));
      for (int c = 0; c < control_dim; ++c) {
        buf += ',';
        append_number(buf, pol.control[static_cast<std::size_t>(c)].at(m, k));
      }
      buf += '\n';
    }
  }
  out << buf;
}

/// max |u - u*| and |v - u*_t| over the stored forward nodes.
std::pair<double, double> exact_errors(const TriField& u, const TriField& v, const ExprFn& exact) {
  const ExprFn exact_t = exact.derivative(Var::t);
  const TriangleGrid& g = u.grid();
  double eu = 0.0, ev = 0.0;
  for (int i = 0; i < g.n_time(); ++i) {
    for (int j = 0; j <= i; ++j) {
      for (std::size_t k = 0; k < g.points(); ++k) {
        const auto y = g.position(k);
        eu = std::max(eu, std::abs(u.at(i, j, k) - eval_at(exact, g.tau(i), g.tau(j), y)));
        ev = std::max(ev, std::abs(v.at(i, j, k) - eval_at(exact_t, g.tau(i), g.tau(j), y)));
      }
    }
  }
  return {eu, ev};
}

/// max over coarse nodes of |coarse - fine| with fine sampled at (2i, 2j, 2k).
double level_difference(const TriField& coarse, const TriField& fine) {
  const TriangleGrid& g = coarse.grid();
  const TriangleGrid& h = fine.grid();
  double worst = 0.0;
  for (int i = 0; i < g.n_time(); ++i) {
    for (int j = 0; j <= i; ++j) {
      for (std::size_t k = 0; k < g.points(); ++k) {
        const auto m = g.multi_index(k);
        const std::size_t kf = h.flat(2 * m[0], 2 * m[1]);
        worst = std::max(worst, std::abs(coarse.at(i, j, k) - fine.at(2 * i, 2 * j, kf)));
      }
    }
  }
  return worst;
}

struct Solved {
  TriField u, v;
  SolverReport report;
  ojson extras = ojson::object();
  std::optional<EquilibriumPolicy> policy;
};

Solved solve_level(const RunConfig& cfg, int level) {
  const TriangleGrid grid = grid_of(cfg, level);
  SolverOptions opts = solver_options(cfg);
  opts.initial_window = cfg.initial_window << level;
  Solved out;
  switch (cfg.mode) {
    case Mode::solve_linear: {
      LinearSolution sol = solve_linear(to_linear_coefficients(linear_exprs(cfg)), grid, opts);
      out.extras["equivalence_residual"] = check_equivalence(sol);
      out.u = std::move(sol.u);
      out.v = std::move(sol.v);
      out.report = std::move(sol.report);
      break;
    }
    case Mode::solve_nonlinear:
    case Mode::verify_fbsde: {
      const NonlinearProblem prob = nonlinear_problem(cfg);
      // verify-fbsde keeps a linear payload on the linear solver.
      LinearSolution sol = cfg.mode == Mode::verify_fbsde && !cfg.problem.nonlinear
                               ? solve_linear(to_linear_coefficients(linear_exprs(cfg)), grid, opts)
                               : solve_nonlinear(prob, grid, opts);
      out.extras["pde_residual"] = residual_nonlinear(sol.u, prob);
      out.u = std::move(sol.u);
      out.v = std::move(sol.v);
      out.report = std::move(sol.report);
      break;
    }
    case Mode::solve_hjb: {
      const ControlProblem cp = control_problem(cfg);
      EquilibriumPolicy pol = solve_equilibrium_hjb(cp, grid, opts);
      const HjbResiduals res = verify_hjb_system(pol, cp);
      out.extras["hjb_residuals"] = {{"res1", res.res1}, {"res1_literal", res.res1_literal}, {"res2", res.res2}};
      out.extras["boundary_hits"] = pol.boundary_hits;
      if (pol.boundary_hits > 0) {
        std::cerr << "warning: " << pol.boundary_hits
                  << " minimizers hit the boundary of the control box\n";
      }
      out.u = pol.u_forward;
      out.v = pol.v_forward;
      out.report = pol.report;
      out.policy = std::move(pol);
      break;
    }
    default: throw ConfigError("solve_level: not a solve mode");
  }
  if (!cfg.problem.exact.empty() && cfg.mode != Mode::solve_hjb) {
    const auto [eu, ev] = exact_errors(out.u, out.v, ExprFn::parse(cfg.problem.exact));
    out.extras["max_error"] = eu;
    out.extras["max_error_t"] = ev;
  }
  return out;
}

ojson fbsde_json(const FkReport& rep, const PathBundle& paths) {
  ojson per_t = ojson::array();
  for (const ResidualStats& s : rep.per_t) {
    ojson z_mean = ojson::array(), z_se = ojson::array(), z_max = ojson::array();
    for (int c = 0; c < paths.noise_dim; ++c) {
      z_mean.push_back(s.z_mean[static_cast<std::size_t>(c)]);
      z_se.push_back(s.z_standard_error[static_cast<std::size_t>(c)]);
      z_max.push_back(s.z_max_abs[static_cast<std::size_t>(c)]);
    }
    per_t.push_back({{"t_node", s.t_node}, {"t", s.t}, {"mean", s.mean},
                     {"standard_error", s.standard_error}, {"max_abs", s.max_abs},
                     {"z_mean", z_mean}, {"z_standard_error", z_se}, {"z_max_abs", z_max}});
  }
  return {{"n_paths", rep.n_paths},
          {"n_steps", rep.n_steps},
          {"seed", paths.seed},
          {"lipschitz_estimate", paths.lipschitz_estimate},
          {"max_ratio_y", rep.max_ratio_y},
          {"max_ratio_z", rep.max_ratio_z},
          {"max_abs_y", rep.max_abs_y},
          {"max_abs_z", rep.max_abs_z},
          {"per_t", per_t}};
}

void run_manufacture(const RunConfig& cfg, const fs::path& dir) {
  const ExprFn exact = ExprFn::parse(cfg.problem.exact);
  const int dim = cfg.grid.dim;
  ExprFn rhs;
  if (cfg.problem.nonlinear) {
    rhs = ExprFn::parse(cfg.problem.nonlinear->F);
  } else {
    LinearExprs lin = linear_exprs(cfg);
    lin.f = ExprFn();
    rhs = linear_rhs(lin);
  }
  const ExprFn source = manufacture_source(exact, rhs, dim);
  constexpr int kSamples = 100;
  const double deviation = source_spot_check(exact, rhs, source, dim, cfg.grid.horizon,
                                             cfg.grid.period, kSamples, cfg.seed);
  ojson doc;
  doc["mode"] = mode_name(cfg.mode);
  doc["exact"] = exact.str();
  doc["rhs"] = rhs.str();
  doc["source"] = source.str();
  doc["initial"] = initial_row(exact).str();
  doc["spot_check"] = {{"samples", kSamples}, {"seed", cfg.seed}, {"max_deviation", deviation}};
  write_json(dir / "manufactured.json", doc);
}

void run_norms(const RunConfig& cfg, const fs::path& dir) {
  const TriangleGrid grid = grid_of(cfg);
  const ExprFn exact = ExprFn::parse(cfg.problem.exact);
  const ExprFn exact_t = exact.derivative(Var::t);
  TriField u(grid), v(grid);
  for (int i = 0; i < grid.n_time(); ++i) {
    for (int j = 0; j <= i; ++j) {
      for (std::size_t k = 0; k < grid.points(); ++k) {
        const auto y = grid.position(k);
        u.at(i, j, k) = eval_at(exact, grid.tau(i), grid.tau(j), y);
        v.at(i, j, k) = eval_at(exact_t, grid.tau(i), grid.tau(j), y);
      }
    }
  }
  const HolderConfig holder = solver_options(cfg).holder;
  ojson doc;
  doc["mode"] = mode_name(cfg.mode);
  doc["grid"] = grid_json(grid);
  doc["alpha"] = cfg.alpha;
  doc["order_alpha"] = norm_json(tri_norms(u, &v, holder, SliceOrder::alpha));
  doc["order_two_plus_alpha"] = norm_json(tri_norms(u, &v, holder, SliceOrder::two_plus_alpha));
  write_json(dir / "norms.json", doc);
}

void run_solve(const RunConfig& cfg, const RunOptions& options, const fs::path& dir) {
  const auto started = std::chrono::steady_clock::now();
  std::vector<Solved> levels;
  levels.reserve(static_cast<std::size_t>(options.refine));  // keeps `base` valid
  levels.push_back(solve_level(cfg, 0));
  Solved& base = levels.front();

  {
    std::ofstream csv(dir / "solution.csv", std::ios::binary);
    if (!csv) throw Error("cannot write " + (dir / "solution.csv").string());
    if (base.policy) {
      write_policy_csv(csv, *base.policy);
      std::ofstream eq(dir / "equilibrium.csv", std::ios::binary);
      write_equilibrium_csv(eq, *base.policy, cfg.problem.control->control_dim);
    } else {
      write_solution_csv(csv, base.u, base.v);
    }
  }

  const HolderConfig holder = solver_options(cfg).holder;
  ojson norms;
  norms["alpha"] = cfg.alpha;
  norms["order_alpha"] = norm_json(tri_norms(base.u, &base.v, holder, SliceOrder::alpha));
  write_json(dir / "norms.json", norms);

  if (cfg.mode == Mode::verify_fbsde) {
    const TriangleGrid grid = grid_of(cfg);
    const FbsdeModel model = fbsde_model(cfg);
    std::array<double, 2> y0{};
    for (std::size_t a = 0; a < cfg.fbsde.y0.size(); ++a) y0[a] = cfg.fbsde.y0[a];
    const int steps = cfg.fbsde.steps > 0 ? cfg.fbsde.steps : 4 * (grid.n_time() - 1);
    const PathBundle paths = simulate_forward(model, y0, grid.horizon(), cfg.fbsde.paths, steps, cfg.seed);
    const FkReport rep = verify_feynman_kac({nonlinear_problem(cfg), base.u}, model, paths);
    write_json(dir / "fbsde.json", fbsde_json(rep, paths));
    base.extras["fbsde"] = {{"max_ratio_y", rep.max_ratio_y}, {"max_ratio_z", rep.max_ratio_z}};
  }

  for (int level = 1; level < options.refine; ++level) levels.push_back(solve_level(cfg, level));
  if (options.refine > 1) {
    std::string table = "level,n_time,n_space,dtau,dy,error,ratio\n";
    std::vector<double> errors;
    for (std::size_t l = 0; l < levels.size(); ++l) {
      double e = std::numeric_limits<double>::quiet_NaN();
      if (levels[l].extras.contains("max_error")) {
        e = levels[l].extras["max_error"].get<double>();
      } else if (l + 1 < levels.size()) {
        e = level_difference(levels[l].u, levels[l + 1].u);
      }
      errors.push_back(e);
    }
    for (std::size_t l = 0; l < levels.size(); ++l) {
      const TriangleGrid g = grid_of(cfg, static_cast<int>(l));
      table += std::to_string(l) + ',' + std::to_string(g.n_time()) + ',' + std::to_string(g.n_space()) + ',';
      append_number(table, g.dtau());
      table += ',';
      append_number(table, g.dy());
      table += ',';
      if (std::isfinite(errors[l])) append_number(table, errors[l]);
      table += ',';
      if (l > 0 && std::isfinite(errors[l]) && std::isfinite(errors[l - 1]) && errors[l] > 0.0)
        append_number(table, errors[l - 1] / errors[l]);
      table += '\n';
    }
    write_text(dir / "convergence.csv", table);
  }

  ojson doc;
  doc["mode"] = mode_name(cfg.mode);
  doc["grid"] = grid_json(grid_of(cfg));
  doc["solver"] = solver_json(base.report, options.timing);
  for (auto& [key, value] : base.extras.items()) doc[key] = value;
  if (options.timing) {
    doc["run_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  }
  write_json(dir / "report.json", doc);

  if (cfg.mode == Mode::verify_fbsde) {
    const auto& f = base.extras["fbsde"];
    const double ry = f["max_ratio_y"].get<double>(), rz = f["max_ratio_z"].get<double>();
    if (!(ry <= 3.0 && rz <= 3.0)) {
      throw ConsistencyError("Feynman-Kac residual mean exceeds 3 standard errors (Y ratio " +
                             std::to_string(ry) + ", Z ratio " + std::to_string(rz) + ")");
    }
  }
}

}  // namespace

TriangleGrid grid_of(const RunConfig& cfg, int level) {
  const int scale = 1 << level;
  return build_grid((cfg.grid.n_time - 1) * scale + 1, cfg.grid.dim, cfg.grid.n_space * scale,
                    cfg.grid.horizon, cfg.grid.period);
}

SolverOptions solver_options(const RunConfig& cfg) {
  SolverOptions o;
  o.tolerance = cfg.tolerance;
  o.max_iter = cfg.max_iter;
  o.contraction_cap = cfg.contraction_cap;
  o.initial_window = cfg.initial_window;
  o.holder.alpha = cfg.alpha;
  o.holder.pair_budget = cfg.pair_budget;
  o.holder.seed = cfg.seed;
  o.step.theta = cfg.theta;
  return o;
}

LinearExprs linear_exprs(const RunConfig& cfg) {
  if (!cfg.problem.linear) throw ConfigError("problem.linear: missing");
  const LinearConfig& l = *cfg.problem.linear;
  LinearExprs e;
  e.dim = cfg.grid.dim;
  e.a = parse_all(l.a);
  e.abar = parse_all(l.abar);
  e.b = parse_all(l.b);
  e.bbar = parse_all(l.bbar);
  e.c = ExprFn::parse(l.c);
  e.cbar = ExprFn::parse(l.cbar);
  e.f = ExprFn::parse(l.f);
  e.g = ExprFn::parse(l.g);
  if (!cfg.problem.exact.empty()) {
    const ExprFn exact = ExprFn::parse(cfg.problem.exact);
    e.f = manufacture_source(exact, e);
    e.g = initial_row(exact);
  }
  return e;
}

ExprFn nonlinear_rhs(const RunConfig& cfg) {
  if (!cfg.problem.nonlinear) return linear_rhs(linear_exprs(cfg));
  const ExprFn F = ExprFn::parse(cfg.problem.nonlinear->F);
  if (cfg.problem.exact.empty()) return F;
  return F + manufacture_source(ExprFn::parse(cfg.problem.exact), F, cfg.grid.dim);
}

ExprFn initial_expr(const RunConfig& cfg) {
  if (!cfg.problem.exact.empty()) return initial_row(ExprFn::parse(cfg.problem.exact));
  if (cfg.problem.nonlinear) return ExprFn::parse(cfg.problem.nonlinear->g);
  return linear_exprs(cfg).g;
}

NonlinearProblem nonlinear_problem(const RunConfig& cfg) {
  return to_nonlinear_problem(nonlinear_rhs(cfg), initial_expr(cfg), cfg.grid.dim);
}

ControlProblem control_problem(const RunConfig& cfg) {
  if (!cfg.problem.control) throw ConfigError("problem.control: missing");
  const ControlConfig& c = *cfg.problem.control;
  ControlProblem cp;
  cp.dim = cfg.grid.dim;
  cp.noise_dim = c.noise_dim;
  cp.control_dim = c.control_dim;
  cp.horizon = cfg.grid.horizon;
  const int d = cp.dim, k = cp.noise_dim;
  const std::vector<ExprFn> drift = parse_all(c.drift);
  const std::vector<ExprFn> vol = parse_all(c.volatility);
  cp.drift = [drift, d](double s, const Point& y, const Control& a) {
    Point out{};
    for (std::size_t i = 0; i < drift.size() && static_cast<int>(i) < d; ++i)
      out[i] = drift[i](control_values(0.0, s, y, a));
    return out;
  };
  cp.volatility = [vol, d, k](double s, const Point& y, const Control& a) {
    std::array<double, 4> out{};
    for (int i = 0; i < d * k; ++i) out[static_cast<std::size_t>(i)] = vol[static_cast<std::size_t>(i)](control_values(0.0, s, y, a));
    return out;
  };
  const ExprFn running = ExprFn::parse(c.running);
  const ExprFn terminal = ExprFn::parse(c.terminal);
  cp.running = [running](double t, double tau, const Point& y, const Control& a) {
    return running(control_values(t, tau, y, a));
  };
  cp.terminal = [terminal](double t, const Point& y) { return terminal(control_values(t, 0.0, y, {})); };
  cp.lower = c.lower;
  cp.upper = c.upper;
  cp.resolution = c.resolution;
  return cp;
}

FbsdeModel fbsde_model(const RunConfig& cfg) {
  const FbsdeConfig& f = cfg.fbsde;
  FbsdeModel m;
  m.dim = cfg.grid.dim;
  m.noise_dim = f.noise_dim;
  const int d = m.dim, k = m.noise_dim;
  const std::vector<ExprFn> drift = parse_all(f.drift);
  const std::vector<ExprFn> vol = parse_all(f.volatility);
  m.drift = [drift](double s, const std::array<double, 2>& y) {
    Point out{};
    for (std::size_t i = 0; i < drift.size(); ++i) out[i] = drift[i](control_values(0.0, s, y, {}));
    return out;
  };
  m.volatility = [vol, d, k](double s, const std::array<double, 2>& y) {
    std::array<double, 4> out{};
    if (vol.empty()) {
      for (int i = 0; i < std::min(d, k); ++i) out[static_cast<std::size_t>(i * k + i)] = 1.0;
      return out;
    }
    for (int i = 0; i < d * k; ++i) out[static_cast<std::size_t>(i)] = vol[static_cast<std::size_t>(i)](control_values(0.0, s, y, {}));
    return out;
  };
  return m;
}

void write_solution_csv(std::ostream& out, const TriField& u, const TriField& v) {
  const TriangleGrid& g = u.grid();
  std::string buf;
  csv_header(buf, g.dim());
  for (int i = 0; i < g.n_time(); ++i) {
    for (int j = 0; j <= i; ++j) {
      for (std::size_t k = 0; k < g.points(); ++k) {
        csv_row(buf, g.tau(i), g.tau(j), g.position(k), g.dim(), u.at(i, j, k), v.at(i, j, k));
      }
    }
    out << buf;
    buf.clear();
  }
}

int run_solver_pipeline(const RunConfig& cfg, const RunOptions& options) {
  const fs::path dir = cfg.output;
  try {
    validate_config(cfg);
    if (options.refine < 1) throw ConfigError("refine: must be at least 1");
    const bool solve_mode = cfg.mode == Mode::solve_linear || cfg.mode == Mode::solve_nonlinear ||
                            cfg.mode == Mode::solve_hjb || cfg.mode == Mode::verify_fbsde;
    if (options.refine > 1 && !solve_mode) throw ConfigError("refine: applies to solve modes only");
    fs::create_directories(dir);
    switch (cfg.mode) {
      case Mode::manufacture: run_manufacture(cfg, dir); break;
      case Mode::norms: run_norms(cfg, dir); break;
      default: run_solve(cfg, options, dir); break;
    }
    return 0;
  } catch (const Error& e) {
    ojson doc;
    doc["mode"] = mode_name(cfg.mode);
    doc["kind"] = e.kind();
    doc["exit_code"] = e.exit_code();
    doc["message"] = e.what();
    if (const auto* nc = dynamic_cast<const SolverNonConvergence*>(&e)) {
      doc["solver"] = solver_json(nc->report(), options.timing);
    }
    std::cerr << "error (" << e.kind() << "): " << e.what() << "\n";
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (!ec) {
      std::ofstream out(dir / "error.json", std::ios::binary);
      out << doc.dump(2) << "\n";
    }
    return e.exit_code();
  }
}

}  // namespace nonlocal
