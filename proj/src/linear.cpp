#include "nonlocal/linear.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "nonlocal/errors.hpp"

namespace nonlocal {

Coefficient Coefficient::constant(double c) {
  Coefficient out;
  out.value = [c](const Node&) { return c; };
  out.dt = [](const Node&) { return 0.0; };
  return out;
}

Coefficient Coefficient::of(SpaceTimeFn fn, SpaceTimeFn dt_fn) {
  Coefficient out;
  out.value = [fn = std::move(fn)](const Node& n) { return fn(n.t, n.s, n.y); };
  if (dt_fn) out.dt = [fn = std::move(dt_fn)](const Node& n) { return fn(n.t, n.s, n.y); };
  return out;
}

LinearCoefficients::LinearCoefficients(int dim_)
    : dim(dim_),
      a(static_cast<std::size_t>(dim_ == 1 ? 1 : 3)),
      abar(static_cast<std::size_t>(dim_ == 1 ? 1 : 3)),
      b(static_cast<std::size_t>(dim_)),
      bbar(static_cast<std::size_t>(dim_)) {}

namespace {

std::span<const double> row_or_empty(const std::optional<TriField>& f, int it, int is) {
  if (!f) return {};
  return f->slice(it, is);
}

inline double read(std::span<const double> row, std::size_t k) { return row.empty() ? 0.0 : row[k]; }

SampledField sample_one(const Coefficient& coeff, const TriangleGrid& grid, double h_t) {
  SampledField out;
  if (!coeff.present()) return out;
  out.value.emplace(grid);
  out.dt.emplace(grid);
  const std::size_t P = grid.points();
  for (int i = 0; i < grid.n_time(); ++i) {
    for (int j = 0; j <= i; ++j) {
      auto val = out.value->slice(i, j);
      auto der = out.dt->slice(i, j);
      for (std::size_t k = 0; k < P; ++k) {
        Node node{grid.tau(i), grid.tau(j), grid.position(k), i, j, k, true};
        val[k] = coeff.value(node);
        if (coeff.dt) {
          der[k] = coeff.dt(node);
        } else {
          Node plus = node;
          Node minus = node;
          plus.on_grid = minus.on_grid = false;
          plus.it = minus.it = -1;
          plus.t += h_t;
          minus.t -= h_t;
          der[k] = (coeff.value(plus) - coeff.value(minus)) / (2.0 * h_t);
        }
        if (!std::isfinite(val[k]) || !std::isfinite(der[k])) {
          std::ostringstream msg;
          msg << "coefficient sampler returned a non-finite value at t=" << node.t
              << ", s=" << node.s << ", y=" << node.y[0];
          throw NumericalError(msg.str());
        }
      }
    }
  }
  return out;
}

std::vector<SampledField> sample_family(const std::vector<Coefficient>& family,
                                        const TriangleGrid& grid, double h_t) {
  std::vector<SampledField> out;
  out.reserve(family.size());
  for (const auto& c : family) out.push_back(sample_one(c, grid, h_t));
  return out;
}

int pair_weight(int packed) { return packed == 1 ? 2 : 1; }

}  // namespace

SampledLinearSystem sample_coefficients(const LinearCoefficients& coeffs, const TriangleGrid& grid) {
  if (coeffs.dim != grid.dim()) throw ArgumentError("linear coefficients: dimension does not match the grid");
  const auto sym = static_cast<std::size_t>(grid.sym_size());
  const auto dim = static_cast<std::size_t>(grid.dim());
  if (coeffs.a.size() != sym || coeffs.abar.size() != sym || coeffs.b.size() != dim ||
      coeffs.bbar.size() != dim) {
    throw ArgumentError("linear coefficients: coefficient family sizes do not match the dimension");
  }
  if (!coeffs.g) throw ArgumentError("linear coefficients: initial data g is required");
  const double h_t = coeffs.h_t > 0.0 ? coeffs.h_t : grid.dtau();

  SampledLinearSystem sys;
  sys.grid = grid;
  sys.a = sample_family(coeffs.a, grid, h_t);
  sys.abar = sample_family(coeffs.abar, grid, h_t);
  sys.b = sample_family(coeffs.b, grid, h_t);
  sys.bbar = sample_family(coeffs.bbar, grid, h_t);
  sys.c = sample_one(coeffs.c, grid, h_t);
  sys.cbar = sample_one(coeffs.cbar, grid, h_t);
  sys.f = sample_one(coeffs.f, grid, h_t);

  const std::size_t P = grid.points();
  sys.g = SliceField(grid.n_time(), P);
  sys.g_t = SliceField(grid.n_time(), P);
  for (int i = 0; i < grid.n_time(); ++i) {
    for (std::size_t k = 0; k < P; ++k) {
      const auto y = grid.position(k);
      const double t = grid.tau(i);
      sys.g.row(i)[k] = coeffs.g(t, y);
      sys.g_t.row(i)[k] = coeffs.g_t ? coeffs.g_t(t, y)
                                     : (coeffs.g(t + h_t, y) - coeffs.g(t - h_t, y)) / (2.0 * h_t);
      if (!std::isfinite(sys.g.row(i)[k]) || !std::isfinite(sys.g_t.row(i)[k])) {
        throw NumericalError("initial data g is not finite on the grid");
      }
    }
  }
  return sys;
}

void check_linear_ellipticity(const SampledLinearSystem& sys, double floor) {
  const auto& grid = sys.grid;
  const std::size_t P = grid.points();
  const int sym = grid.sym_size();
  auto smallest = [&](const std::array<double, 3>& m) {
    if (grid.dim() == 1) return m[0];
    const double mean = 0.5 * (m[0] + m[2]);
    return mean - std::sqrt(0.25 * (m[0] - m[2]) * (m[0] - m[2]) + m[1] * m[1]);
  };
  for (int i = 0; i < grid.n_time(); ++i) {
    for (int j = 0; j <= i; ++j) {
      for (std::size_t k = 0; k < P; ++k) {
        std::array<double, 3> a{};
        std::array<double, 3> total{};
        for (int p = 0; p < sym; ++p) {
          a[p] = read(row_or_empty(sys.a[p].value, i, j), k);
          total[p] = a[p] + read(row_or_empty(sys.abar[p].value, i, j), k);
        }
        const double la = smallest(a);
        const double lt = smallest(total);
        auto ok = [floor](double l) { return std::isfinite(l) && (floor > 0.0 ? l >= floor : l > 0.0); };
        if (!ok(la) || !ok(lt)) {
          std::ostringstream msg;
          msg << "uniform ellipticity condition violated: "
              << (!ok(la) ? "a" : "a + abar") << " has smallest eigenvalue "
              << (!ok(la) ? la : lt) << " at t=" << grid.tau(i) << ", s=" << grid.tau(j)
              << ", y=" << grid.position(k)[0];
          throw ModelError(msg.str());
        }
      }
    }
  }
}

WindowInitial initial_rows(const SampledLinearSystem& sys) {
  return WindowInitial{0, sys.g, sys.g_t};
}

namespace {

/// Nonlocal data of one t-slice: a field X(s_j, .) with its spatial
/// derivatives, rows indexed from the window start.
struct NonlocalData {
  SliceField value;
  std::vector<SliceField> grad;
  std::vector<SliceField> hess;

  void derive(const TriangleGrid& grid) {
    grad.assign(static_cast<std::size_t>(grid.dim()), SliceField(value.rows, value.points));
    hess.assign(static_cast<std::size_t>(grid.sym_size()), SliceField(value.rows, value.points));
    for (int r = 0; r < value.rows; ++r) {
      for (int a = 0; a < grid.dim(); ++a) {
        gradient(grid, value.row(r), a, grad[a].row(r));
        for (int b = a; b < grid.dim(); ++b) hessian(grid, value.row(r), a, b, hess[sym_index(a, b)].row(r));
      }
    }
  }
};

bool has_nonlocal(const SampledLinearSystem& sys) {
  auto any = [](const std::vector<SampledField>& fam) {
    return std::any_of(fam.begin(), fam.end(), [](const SampledField& f) { return f.value.has_value(); });
  };
  return any(sys.abar) || any(sys.bbar) || sys.cbar.value.has_value();
}

/// Solves one t-slice it for rows j = start .. start + rows - 1.
/// system_form: u-operator a + abar etc. and nonlocal data enter with a
/// minus sign (integral form); otherwise operator a and a plus sign
/// (known diagonal).
void solve_slice(const SampledLinearSystem& sys, int it, int start, int rows, bool system_form,
                 const NonlocalData* nonlocal, std::span<const double> u_start,
                 std::span<const double> v_start, LocalStepper& stepper, TriField& u_out,
                 TriField& v_out) {
  const auto& grid = sys.grid;
  const std::size_t P = grid.points();
  const int dim = grid.dim();
  const int sym = grid.sym_size();
  const double sign = system_form ? -1.0 : 1.0;

  std::copy(u_start.begin(), u_start.end(), u_out.slice(it, start).begin());
  std::copy(v_start.begin(), v_start.end(), v_out.slice(it, start).begin());
  if (rows <= 1) return;

  auto nonlocal_term = [&](int r, std::size_t k, const std::vector<SampledField>& second,
                           const std::vector<SampledField>& first, const SampledField& zeroth,
                           bool derivative, int j) {
    if (nonlocal == nullptr) return 0.0;
    double acc = 0.0;
    for (int p = 0; p < sym; ++p) {
      const auto& fld = derivative ? second[p].dt : second[p].value;
      const auto row = row_or_empty(fld, it, j);
      if (!row.empty()) acc += pair_weight(p) * row[k] * nonlocal->hess[p].row(r)[k];
    }
    for (int a = 0; a < dim; ++a) {
      const auto& fld = derivative ? first[a].dt : first[a].value;
      const auto row = row_or_empty(fld, it, j);
      if (!row.empty()) acc += row[k] * nonlocal->grad[a].row(r)[k];
    }
    const auto row = row_or_empty(derivative ? zeroth.dt : zeroth.value, it, j);
    if (!row.empty()) acc += row[k] * nonlocal->value.row(r)[k];
    return acc;
  };

  auto fill_u = [&](int r, LocalOperatorSlice& op) {
    const int j = start + r;
    for (int p = 0; p < sym; ++p) {
      const auto a = row_or_empty(sys.a[p].value, it, j);
      const auto ab = system_form ? row_or_empty(sys.abar[p].value, it, j) : std::span<const double>{};
      auto dst = op.diffusion_block(p, P);
      for (std::size_t k = 0; k < P; ++k) dst[k] = read(a, k) + read(ab, k);
    }
    for (int d = 0; d < dim; ++d) {
      const auto b = row_or_empty(sys.b[d].value, it, j);
      const auto bb = system_form ? row_or_empty(sys.bbar[d].value, it, j) : std::span<const double>{};
      auto dst = op.drift_block(d, P);
      for (std::size_t k = 0; k < P; ++k) dst[k] = read(b, k) + read(bb, k);
    }
    const auto c = row_or_empty(sys.c.value, it, j);
    const auto cb = system_form ? row_or_empty(sys.cbar.value, it, j) : std::span<const double>{};
    const auto f = row_or_empty(sys.f.value, it, j);
    for (std::size_t k = 0; k < P; ++k) {
      op.reaction[k] = read(c, k) + read(cb, k);
      op.source[k] = read(f, k) + sign * nonlocal_term(r, k, sys.abar, sys.bbar, sys.cbar, false, j);
    }
  };

  LocalOperatorSlice now(grid);
  LocalOperatorSlice next(grid);
  fill_u(0, now);
  for (int r = 0; r + 1 < rows; ++r) {
    fill_u(r + 1, next);
    stepper.step(u_out.slice(it, start + r), now, next, grid.dtau(), u_out.slice(it, start + r + 1));
    std::swap(now, next);
  }

  // Derivatives of the freshly computed u feed the differentiated equation.
  NonlocalData ud;
  ud.value = SliceField(rows, P);
  for (int r = 0; r < rows; ++r) {
    const auto src = u_out.slice(it, start + r);
    std::copy(src.begin(), src.end(), ud.value.row(r).begin());
  }
  ud.derive(grid);

  auto fill_v = [&](int r, LocalOperatorSlice& op) {
    const int j = start + r;
    for (int p = 0; p < sym; ++p) {
      const auto a = row_or_empty(sys.a[p].value, it, j);
      auto dst = op.diffusion_block(p, P);
      for (std::size_t k = 0; k < P; ++k) dst[k] = read(a, k);
    }
    for (int d = 0; d < dim; ++d) {
      const auto b = row_or_empty(sys.b[d].value, it, j);
      auto dst = op.drift_block(d, P);
      for (std::size_t k = 0; k < P; ++k) dst[k] = read(b, k);
    }
    const auto c = row_or_empty(sys.c.value, it, j);
    const auto ft = row_or_empty(sys.f.dt, it, j);
    for (std::size_t k = 0; k < P; ++k) {
      op.reaction[k] = read(c, k);
      double src = read(ft, k);
      for (int p = 0; p < sym; ++p) {
        double coef = read(row_or_empty(sys.a[p].dt, it, j), k);
        if (system_form) coef += read(row_or_empty(sys.abar[p].dt, it, j), k);
        src += pair_weight(p) * coef * ud.hess[p].row(r)[k];
      }
      for (int d = 0; d < dim; ++d) {
        double coef = read(row_or_empty(sys.b[d].dt, it, j), k);
        if (system_form) coef += read(row_or_empty(sys.bbar[d].dt, it, j), k);
        src += coef * ud.grad[d].row(r)[k];
      }
      double coef = read(row_or_empty(sys.c.dt, it, j), k);
      if (system_form) coef += read(row_or_empty(sys.cbar.dt, it, j), k);
      src += coef * ud.value.row(r)[k];
      src += sign * nonlocal_term(r, k, sys.abar, sys.bbar, sys.cbar, true, j);
      op.source[k] = src;
    }
  };

  fill_v(0, now);
  for (int r = 0; r + 1 < rows; ++r) {
    fill_v(r + 1, next);
    stepper.step(v_out.slice(it, start + r), now, next, grid.dtau(), v_out.slice(it, start + r + 1));
    std::swap(now, next);
  }
}

}  // namespace

void gamma_map_into(const TriField& v_in, const SampledLinearSystem& sys, int start, int end,
                    const WindowInitial& init, const StepOptions& step, TriField& u_out,
                    TriField& v_out) {
  const auto& grid = sys.grid;
  if (start < 0 || end < start || end >= grid.n_time() || init.start != start) {
    throw IndexError("gamma_map: invalid window");
  }
  const std::size_t P = grid.points();
  const bool nonlocal = has_nonlocal(sys);
  LocalStepper stepper(grid, step);
  NonlocalData integral;
  for (int it = start; it <= end; ++it) {
    const int rows = it - start + 1;
    if (nonlocal) {
      integral.value = SliceField(rows, P);
      for (int r = 0; r < rows; ++r) {
        const int j = start + r;
        auto dst = integral.value.row(r);
        if (j == it) continue;
        const auto first = v_in.slice(j, j);
        const auto last = v_in.slice(it, j);
        for (std::size_t k = 0; k < P; ++k) dst[k] = 0.5 * (first[k] + last[k]);
        for (int m = j + 1; m < it; ++m) {
          const auto mid = v_in.slice(m, j);
          for (std::size_t k = 0; k < P; ++k) dst[k] += mid[k];
        }
        for (std::size_t k = 0; k < P; ++k) dst[k] *= grid.dtau();
      }
      integral.derive(grid);
    }
    solve_slice(sys, it, start, rows, true, nonlocal ? &integral : nullptr,
                init.u0.row(it - start), init.v0.row(it - start), stepper, u_out, v_out);
  }
}

std::pair<TriField, TriField> gamma_map(const TriField& v_in, const SampledLinearSystem& sys,
                                        std::pair<int, int> window, const WindowInitial& init,
                                        const StepOptions& step) {
  TriField u(sys.grid);
  TriField v(sys.grid);
  gamma_map_into(v_in, sys, window.first, window.second, init, step, u, v);
  return {std::move(u), std::move(v)};
}

void extend_rectangle(const SampledLinearSystem& sys, int start, int end,
                      const WindowInitial& init, const StepOptions& step, TriField& u,
                      TriField& v) {
  const auto& grid = sys.grid;
  if (end >= grid.n_time() - 1) return;
  const std::size_t P = grid.points();
  const bool nonlocal = has_nonlocal(sys);
  const int rows = end - start + 1;
  NonlocalData diag;
  if (nonlocal) {
    diag.value = SliceField(rows, P);
    for (int r = 0; r < rows; ++r) {
      const auto src = u.slice(start + r, start + r);
      std::copy(src.begin(), src.end(), diag.value.row(r).begin());
    }
    diag.derive(grid);
  }
  LocalStepper stepper(grid, step);
  for (int it = end + 1; it < grid.n_time(); ++it) {
    solve_slice(sys, it, start, rows, false, nonlocal ? &diag : nullptr, init.u0.row(it - start),
                init.v0.row(it - start), stepper, u, v);
  }
}

void region_difference(const TriField& a, const TriField& b, const Region& reg, TriField& out) {
  for (int it = reg.s_begin; it <= reg.t_end; ++it) {
    for (int is = reg.s_begin; is <= reg.last_row(it); ++is) {
      const auto x = a.slice(it, is);
      const auto y = b.slice(it, is);
      auto dst = out.slice(it, is);
      for (std::size_t k = 0; k < x.size(); ++k) dst[k] = x[k] - y[k];
    }
  }
}

void copy_region(const TriField& src, const Region& reg, TriField& dst) {
  for (int it = reg.s_begin; it <= reg.t_end; ++it) {
    for (int is = reg.s_begin; is <= reg.last_row(it); ++is) {
      const auto x = src.slice(it, is);
      std::copy(x.begin(), x.end(), dst.slice(it, is).begin());
    }
  }
}

namespace {

bool diverging(const std::vector<double>& factors, double cap, int patience) {
  if (static_cast<int>(factors.size()) < patience) return false;
  return std::all_of(factors.end() - patience, factors.end(), [cap](double f) { return f >= cap; });
}

}  // namespace

WindowReport solve_linear_window(const SampledLinearSystem& sys, int start, int end,
                                 const WindowInitial& init, const SolverOptions& options,
                                 TriField& u, TriField& v, const TriField* seed) {
  const auto& grid = sys.grid;
  const Region reg{start, end, end};
  WindowReport report;
  report.start = start;
  report.end = end;

  TriField v_cur(grid);
  for (int it = start; it <= end; ++it) {
    for (int is = start; is <= it; ++is) {
      const auto src = seed != nullptr ? seed->slice(it, is) : init.v0.row(it - start);
      std::copy(src.begin(), src.end(), v_cur.slice(it, is).begin());
    }
  }
  TriField u_new(grid);
  TriField v_new(grid);
  TriField diff(grid);
  double previous = 0.0;
  for (int iter = 1; iter <= options.max_iter; ++iter) {
    try {
      gamma_map_into(v_cur, sys, start, end, init, options.step, u_new, v_new);
    } catch (const NumericalError&) {
      report.iterations = iter;
      return report;
    }
    region_difference(v_new, v_cur, reg, diff);
    const double inc = tri_norms(diff, nullptr, options.holder, SliceOrder::alpha, reg).bracket;
    report.iterations = iter;
    report.increments.push_back(inc);
    if (!std::isfinite(inc)) return report;
    if (iter > 1) report.contraction_factors.push_back(inc / previous);
    previous = inc;
    std::swap(v_cur, v_new);
    if (inc <= options.tolerance) {
      report.final_increment = inc;
      const bool contracted = report.contraction_factors.empty() ||
                              report.contraction_factors.back() < options.contraction_cap;
      if (!contracted) return report;
      copy_region(u_new, reg, u);
      copy_region(v_cur, reg, v);
      extend_rectangle(sys, start, end, init, options.step, u, v);
      report.accepted = true;
      return report;
    }
    if (diverging(report.contraction_factors, options.contraction_cap, options.cap_patience)) {
      return report;
    }
  }
  report.final_increment = previous;
  return report;
}

namespace {

WindowInitial rows_at(const TriField& u, const TriField& v, int start) {
  const auto& grid = u.grid();
  WindowInitial init;
  init.start = start;
  const int rows = grid.n_time() - start;
  init.u0 = SliceField(rows, grid.points());
  init.v0 = SliceField(rows, grid.points());
  for (int r = 0; r < rows; ++r) {
    const auto us = u.slice(start + r, start);
    const auto vs = v.slice(start + r, start);
    std::copy(us.begin(), us.end(), init.u0.row(r).begin());
    std::copy(vs.begin(), vs.end(), init.v0.row(r).begin());
  }
  return init;
}

std::string describe(const SolverReport& report) {
  std::ostringstream msg;
  msg << report.windows.size() << " window attempts, " << report.iterations << " iterations";
  if (!report.windows.empty()) {
    const auto& w = report.windows.back();
    msg << "; last window [" << w.start << ", " << w.end << "] ended with increment "
        << (w.increments.empty() ? 0.0 : w.increments.back());
  }
  return msg.str();
}

}  // namespace

LinearSolution solve_linear(const SampledLinearSystem& sys, const SolverOptions& options) {
  const auto clock_start = std::chrono::steady_clock::now();
  if (!(options.tolerance > 0.0)) throw ConfigError("tolerance must be positive");
  if (options.max_iter < 1) throw ConfigError("max_iter must be at least 1");
  options.holder.validate();
  check_linear_ellipticity(sys, options.step.ellipticity_floor);

  const auto& grid = sys.grid;
  const int last = grid.n_time() - 1;
  LinearSolution sol{TriField(grid), TriField(grid), {}};
  auto& report = sol.report;
  WindowInitial init = initial_rows(sys);
  int start = 0;
  int length = options.initial_window > 0 ? options.initial_window : last;
  while (start < last) {
    const int end = std::min(start + length, last);
    auto wr = solve_linear_window(sys, start, end, init, options, sol.u, sol.v);
    report.iterations += wr.iterations;
    const bool accepted = wr.accepted;
    report.windows.push_back(wr);
    if (!accepted) {
      if (end - start <= 1) {
        throw SolverNonConvergence("linear solver did not converge on the minimal window: " + describe(report),
                                   report);
      }
      length = std::max(1, (end - start) / 2);
      continue;
    }
    report.subintervals.emplace_back(start, end);
    report.contraction_factors.insert(report.contraction_factors.end(),
                                      wr.contraction_factors.begin(), wr.contraction_factors.end());
    report.final_increment = std::max(report.final_increment, wr.final_increment);
    start = end;
    if (start < last) init = rows_at(sol.u, sol.v, start);
  }
  if (last == 0) {
    report.subintervals.emplace_back(0, 0);
  }
  if (!sol.u.all_finite() || !sol.v.all_finite()) {
    throw NumericalError("linear solver produced non-finite values");
  }
  report.converged = true;
  report.norm_snapshot = tri_norms(sol.u, &sol.v, options.holder);
  report.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count();
  return sol;
}

LinearSolution solve_linear(const LinearCoefficients& coeffs, const TriangleGrid& grid,
                            const SolverOptions& options) {
  return solve_linear(sample_coefficients(coeffs, grid), options);
}

double check_equivalence(const LinearSolution& sol) {
  const auto& grid = sol.u.grid();
  const int n = grid.n_time();
  const double h = grid.dtau();
  double worst = 0.0;
  for (int it = 0; it < n; ++it) {
    for (int is = 0; is <= it; ++is) {
      std::span<const double> ahead;
      std::span<const double> behind;
      if (it + 1 < n) {
        ahead = sol.u.slice(it + 1, is);
        behind = sol.u.slice(it, is);
      } else if (is <= it - 1) {
        ahead = sol.u.slice(it, is);
        behind = sol.u.slice(it - 1, is);
      } else {
        continue;
      }
      const auto v = sol.v.slice(it, is);
      for (std::size_t k = 0; k < v.size(); ++k) {
        worst = std::max(worst, std::abs(v[k] - (ahead[k] - behind[k]) / h));
      }
    }
  }
  return worst;
}

TriField broadcast_initial(const TriangleGrid& grid, const SliceField& rows) {
  TriField out(grid);
  for (int it = 0; it < grid.n_time(); ++it) {
    const auto src = rows.row(it);
    for (int is = 0; is <= it; ++is) std::copy(src.begin(), src.end(), out.slice(it, is).begin());
  }
  return out;
}

namespace {

double data_norm(const SampledLinearSystem& sys, const HolderConfig& cfg) {
  double total = 0.0;
  if (sys.f.value) total += tri_norms(*sys.f.value, &*sys.f.dt, cfg, SliceOrder::alpha).double_bracket;
  const auto g = broadcast_initial(sys.grid, sys.g);
  const auto g_t = broadcast_initial(sys.grid, sys.g_t);
  total += tri_norms(g, &g_t, cfg, SliceOrder::two_plus_alpha).double_bracket;
  return total;
}

}  // namespace

double schauder_ratio(const LinearSolution& sol, const SampledLinearSystem& sys,
                      const HolderConfig& cfg, double tolerance) {
  const double numerator = tri_norms(sol.u, &sol.v, cfg, SliceOrder::two_plus_alpha).double_bracket;
  const double denominator = data_norm(sys, cfg);
  if (denominator == 0.0) {
    if (numerator <= tolerance) return 0.0;
    throw ConsistencyError("schauder_ratio: zero data norm with a nonzero solution");
  }
  return numerator / denominator;
}

namespace {

bool same_field(const SampledField& a, const SampledField& b) {
  if (a.value.has_value() != b.value.has_value()) return false;
  if (!a.value) return true;
  const auto x = a.value->values();
  const auto y = b.value->values();
  return std::equal(x.begin(), x.end(), y.begin(), y.end());
}

bool same_family(const std::vector<SampledField>& a, const std::vector<SampledField>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!same_field(a[i], b[i])) return false;
  }
  return true;
}

TriField field_or_zero(const TriangleGrid& grid, const std::optional<TriField>& f) {
  return f ? *f : TriField(grid);
}

}  // namespace

StabilityProbe stability_probe(const LinearCoefficients& coeffs,
                               const LinearCoefficients& perturbed, const TriangleGrid& grid,
                               const SolverOptions& options) {
  const auto sys = sample_coefficients(coeffs, grid);
  const auto hat = sample_coefficients(perturbed, grid);
  if (!same_family(sys.a, hat.a) || !same_family(sys.abar, hat.abar) ||
      !same_family(sys.b, hat.b) || !same_family(sys.bbar, hat.bbar) ||
      !same_field(sys.c, hat.c) || !same_field(sys.cbar, hat.cbar)) {
    throw ArgumentError("stability_probe: principal coefficients differ between the two problems");
  }
  const auto sol = solve_linear(sys, options);
  const auto sol_hat = solve_linear(hat, options);
  const auto& cfg = options.holder;
  const auto du = sol.u - sol_hat.u;
  const auto dv = sol.v - sol_hat.v;
  StabilityProbe out;
  out.lhs = tri_norms(du, &dv, cfg, SliceOrder::two_plus_alpha).double_bracket;
  const auto df = field_or_zero(grid, sys.f.value) - field_or_zero(grid, hat.f.value);
  const auto df_t = field_or_zero(grid, sys.f.dt) - field_or_zero(grid, hat.f.dt);
  const auto dg = broadcast_initial(grid, sys.g) - broadcast_initial(grid, hat.g);
  const auto dg_t = broadcast_initial(grid, sys.g_t) - broadcast_initial(grid, hat.g_t);
  out.rhs = tri_norms(df, &df_t, cfg, SliceOrder::alpha).double_bracket +
            tri_norms(dg, &dg_t, cfg, SliceOrder::two_plus_alpha).double_bracket;
  return out;
}

}  // namespace nonlocal
