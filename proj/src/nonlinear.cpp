#include "nonlocal/nonlinear.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <sstream>

#include "nonlocal/errors.hpp"

namespace nonlocal {

double& slot_ref(FArgs& args, Slot slot) noexcept {
  switch (slot) {
    case Slot::u: return args.u;
    case Slot::p0: return args.p[0];
    case Slot::p1: return args.p[1];
    case Slot::q00: return args.q[0];
    case Slot::q01: return args.q[1];
    case Slot::q11: return args.q[2];
    case Slot::l: return args.l;
    case Slot::m0: return args.m[0];
    case Slot::m1: return args.m[1];
    case Slot::n00: return args.n[0];
    case Slot::n01: return args.n[1];
    case Slot::n11: return args.n[2];
  }
  return args.u;
}

const char* slot_name(Slot slot) noexcept {
  static constexpr const char* names[kSlotCount] = {"u", "p0", "p1", "q00", "q01", "q11",
                                                    "l", "m0", "m1", "n00", "n01", "n11"};
  return names[static_cast<int>(slot)];
}

bool slot_active(Slot slot, int dim) noexcept {
  if (dim == 2) return true;
  switch (slot) {
    case Slot::u:
    case Slot::p0:
    case Slot::q00:
    case Slot::l:
    case Slot::m0:
    case Slot::n00:
      return true;
    default:
      return false;
  }
}

namespace {

constexpr std::array<Slot, kSlotCount> kAllSlots = {Slot::u,  Slot::p0,  Slot::p1,  Slot::q00,
                                                    Slot::q01, Slot::q11, Slot::l,   Slot::m0,
                                                    Slot::m1, Slot::n00, Slot::n01, Slot::n11};

Slot p_slot(int d) { return d == 0 ? Slot::p0 : Slot::p1; }
Slot m_slot(int d) { return d == 0 ? Slot::m0 : Slot::m1; }
Slot q_slot(int packed) { return static_cast<Slot>(static_cast<int>(Slot::q00) + packed); }
Slot n_slot(int packed) { return static_cast<Slot>(static_cast<int>(Slot::n00) + packed); }

/// Packed derivative of a symmetric argument to its matrix coefficient.
double matrix_coefficient(double packed_derivative, int packed) {
  return packed == 1 ? 0.5 * packed_derivative : packed_derivative;
}

double weight(int packed) { return packed == 1 ? 2.0 : 1.0; }

const FFn* closure_for(const NonlinearProblem& prob, Slot slot) {
  auto pick = [](const std::vector<FFn>& family, int index) -> const FFn* {
    if (index < static_cast<int>(family.size()) && family[index]) return &family[index];
    return nullptr;
  };
  switch (slot) {
    case Slot::u: return prob.F_u ? &prob.F_u : nullptr;
    case Slot::l: return prob.F_l ? &prob.F_l : nullptr;
    case Slot::p0: return pick(prob.F_p, 0);
    case Slot::p1: return pick(prob.F_p, 1);
    case Slot::m0: return pick(prob.F_m, 0);
    case Slot::m1: return pick(prob.F_m, 1);
    case Slot::q00: return pick(prob.F_q, 0);
    case Slot::q01: return pick(prob.F_q, 1);
    case Slot::q11: return pick(prob.F_q, 2);
    case Slot::n00: return pick(prob.F_n, 0);
    case Slot::n01: return pick(prob.F_n, 1);
    case Slot::n11: return pick(prob.F_n, 2);
  }
  return nullptr;
}

double smallest_eigenvalue(int dim, const std::array<double, 3>& m) {
  if (dim == 1) return m[0];
  const double mean = 0.5 * (m[0] + m[2]);
  return mean - std::sqrt(0.25 * (m[0] - m[2]) * (m[0] - m[2]) + m[1] * m[1]);
}

void validate(const NonlinearProblem& prob, const TriangleGrid& grid) {
  if (!prob.F) throw ArgumentError("nonlinear problem: F is required");
  if (!prob.g) throw ArgumentError("nonlinear problem: initial data g is required");
  if (prob.dim != grid.dim()) throw ArgumentError("nonlinear problem: dimension does not match the grid");
  if (!(prob.h_F > 0.0)) throw ConfigError("nonlinear problem: h_F must be positive");
}

/// Spatial derivatives of one lattice row.
struct RowDerivatives {
  std::vector<std::vector<double>> grad;
  std::vector<std::vector<double>> hess;

  RowDerivatives(const TriangleGrid& grid, std::span<const double> row)
      : grad(static_cast<std::size_t>(grid.dim()), std::vector<double>(grid.points())),
        hess(static_cast<std::size_t>(grid.sym_size()), std::vector<double>(grid.points())) {
    for (int a = 0; a < grid.dim(); ++a) {
      gradient(grid, row, a, grad[a]);
      for (int b = a; b < grid.dim(); ++b) hessian(grid, row, a, b, hess[sym_index(a, b)]);
    }
  }
};

/// d/dt along the rows of a SliceField: central inside, second-order
/// one-sided at the ends.
SliceField row_derivative(const SliceField& x, double h) {
  SliceField out(x.rows, x.points);
  const int R = x.rows;
  if (R < 2) return out;
  for (int r = 0; r < R; ++r) {
    auto dst = out.row(r);
    for (std::size_t k = 0; k < x.points; ++k) {
      if (R == 2) {
        dst[k] = (x.row(1)[k] - x.row(0)[k]) / h;
      } else if (r == 0) {
        dst[k] = (-3.0 * x.row(0)[k] + 4.0 * x.row(1)[k] - x.row(2)[k]) / (2.0 * h);
      } else if (r == R - 1) {
        dst[k] = (3.0 * x.row(R - 1)[k] - 4.0 * x.row(R - 2)[k] + x.row(R - 3)[k]) / (2.0 * h);
      } else {
        dst[k] = (x.row(r + 1)[k] - x.row(r - 1)[k]) / (2.0 * h);
      }
    }
  }
  return out;
}

bool all_zero(const SliceField& f) {
  return std::all_of(f.values.begin(), f.values.end(), [](double x) { return x == 0.0; });
}

std::optional<TriField> broadcast_rows(const TriangleGrid& grid, int start, const SliceField& rows) {
  TriField out(grid);
  for (int it = 0; it < grid.n_time(); ++it) {
    const auto src = rows.row(std::max(it - start, 0));
    for (int is = 0; is <= it; ++is) std::copy(src.begin(), src.end(), out.slice(it, is).begin());
  }
  return out;
}

SampledField broadcast_field(const TriangleGrid& grid, int start, const SliceField& value,
                             const SliceField& dt) {
  SampledField out;
  if (all_zero(value) && all_zero(dt)) return out;
  out.value = broadcast_rows(grid, start, value);
  out.dt = broadcast_rows(grid, start, dt);
  return out;
}

}  // namespace

NonlinearProblem time_reverse(const NonlinearProblem& prob, double horizon) {
  const double T = horizon;
  auto flip = [T](FArgs a) {
    a.t = T - a.t;
    a.s = T - a.s;
    return a;
  };
  auto negate = [flip](const FFn& fn) -> FFn {
    if (!fn) return {};
    return [fn, flip](const FArgs& a) { return -fn(flip(a)); };
  };
  NonlinearProblem out;
  out.dim = prob.dim;
  out.h_F = prob.h_F;
  out.F = negate(prob.F);
  out.F_u = negate(prob.F_u);
  out.F_l = negate(prob.F_l);
  // d/dt' of -F(T - t', ...) is +F_t.
  if (prob.F_t) out.F_t = [fn = prob.F_t, flip](const FArgs& a) { return fn(flip(a)); };
  for (const auto& f : prob.F_p) out.F_p.push_back(negate(f));
  for (const auto& f : prob.F_m) out.F_m.push_back(negate(f));
  for (const auto& f : prob.F_q) out.F_q.push_back(negate(f));
  for (const auto& f : prob.F_n) out.F_n.push_back(negate(f));
  if (prob.g) {
    out.g = [g = prob.g, T](double t, std::span<const double> y) { return g(T - t, y); };
  }
  if (prob.g_t) {
    out.g_t = [gt = prob.g_t, T](double t, std::span<const double> y) { return -gt(T - t, y); };
  }
  return out;
}

NonlinearProblem as_nonlinear(const LinearCoefficients& coeffs) {
  const int dim = coeffs.dim;
  const int sym = dim == 1 ? 1 : 3;
  auto node = [](const FArgs& x) {
    Node nd;
    nd.t = x.t;
    nd.s = x.s;
    nd.y = x.y;
    return nd;
  };
  auto eval = [](const Coefficient& c, const Node& nd) { return c.present() ? c.value(nd) : 0.0; };
  NonlinearProblem prob;
  prob.dim = dim;
  prob.F = [coeffs, node, eval, dim, sym](const FArgs& x) {
    const Node nd = node(x);
    double out = eval(coeffs.c, nd) * x.u + eval(coeffs.cbar, nd) * x.l + eval(coeffs.f, nd);
    for (int e = 0; e < sym; ++e) {
      const double w = e == 1 ? 2.0 : 1.0;
      out += w * (eval(coeffs.a[e], nd) * x.q[e] + eval(coeffs.abar[e], nd) * x.n[e]);
    }
    for (int i = 0; i < dim; ++i) {
      out += eval(coeffs.b[i], nd) * x.p[i] + eval(coeffs.bbar[i], nd) * x.m[i];
    }
    return out;
  };
  auto slot_fn = [node, eval](Coefficient c, double w) -> FFn {
    return [c = std::move(c), node, eval, w](const FArgs& x) { return w * eval(c, node(x)); };
  };
  prob.F_u = slot_fn(coeffs.c, 1.0);
  prob.F_l = slot_fn(coeffs.cbar, 1.0);
  for (int e = 0; e < sym; ++e) {
    prob.F_q.push_back(slot_fn(coeffs.a[e], e == 1 ? 2.0 : 1.0));
    prob.F_n.push_back(slot_fn(coeffs.abar[e], e == 1 ? 2.0 : 1.0));
  }
  for (int i = 0; i < dim; ++i) {
    prob.F_p.push_back(slot_fn(coeffs.b[i], 1.0));
    prob.F_m.push_back(slot_fn(coeffs.bbar[i], 1.0));
  }
  prob.g = coeffs.g;
  prob.g_t = coeffs.g_t;
  return prob;
}

double partial(const NonlinearProblem& prob, const FArgs& args, Slot slot) {
  if (const FFn* fn = closure_for(prob, slot)) return (*fn)(args);
  FArgs plus = args;
  FArgs minus = args;
  const double x = slot_ref(plus, slot);
  const double h = prob.h_F * std::max(1.0, std::abs(x));
  slot_ref(plus, slot) = x + h;
  slot_ref(minus, slot) = x - h;
  return (prob.F(plus) - prob.F(minus)) / (2.0 * h);
}

double partial_t(const NonlinearProblem& prob, const FArgs& args) {
  if (prob.F_t) return prob.F_t(args);
  const double h = prob.h_F * std::max(1.0, std::abs(args.t));
  FArgs plus = args;
  FArgs minus = args;
  plus.t += h;
  minus.t -= h;
  return (prob.F(plus) - prob.F(minus)) / (2.0 * h);
}

WindowInitial nonlinear_initial_rows(const NonlinearProblem& prob, const TriangleGrid& grid) {
  validate(prob, grid);
  const std::size_t P = grid.points();
  WindowInitial init{0, SliceField(grid.n_time(), P), SliceField(grid.n_time(), P)};
  const double h = grid.dtau();
  for (int i = 0; i < grid.n_time(); ++i) {
    for (std::size_t k = 0; k < P; ++k) {
      const auto y = grid.position(k);
      const double t = grid.tau(i);
      init.u0.row(i)[k] = prob.g(t, y);
      init.v0.row(i)[k] = prob.g_t ? prob.g_t(t, y) : (prob.g(t + h, y) - prob.g(t - h, y)) / (2.0 * h);
      if (!std::isfinite(init.u0.row(i)[k]) || !std::isfinite(init.v0.row(i)[k])) {
        throw NumericalError("initial data g is not finite on the grid");
      }
    }
  }
  return init;
}

AnchorLinearization anchor_at(const NonlinearProblem& prob, const TriangleGrid& grid,
                              const WindowInitial& init, double floor) {
  validate(prob, grid);
  const int dim = grid.dim();
  const int sym = grid.sym_size();
  const std::size_t P = grid.points();
  const int start = init.start;
  const int R = grid.n_time() - start;

  AnchorLinearization lin;
  lin.grid = grid;
  lin.start = start;
  lin.a.assign(sym, SliceField(R, P));
  lin.abar.assign(sym, SliceField(R, P));
  lin.b.assign(dim, SliceField(R, P));
  lin.bbar.assign(dim, SliceField(R, P));
  lin.c = SliceField(R, P);
  lin.cbar = SliceField(R, P);
  lin.anchors.resize(static_cast<std::size_t>(R) * P);

  const RowDerivatives diag(grid, init.u0.row(0));
  for (int r = 0; r < R; ++r) {
    const auto row = init.u0.row(r);
    const RowDerivatives local(grid, row);
    for (std::size_t k = 0; k < P; ++k) {
      FArgs& x = lin.anchors[static_cast<std::size_t>(r) * P + k];
      x.t = grid.tau(start + r);
      x.s = grid.tau(start);
      x.y = grid.position(k);
      x.u = row[k];
      x.l = init.u0.row(0)[k];
      for (int d = 0; d < dim; ++d) {
        x.p[d] = local.grad[d][k];
        x.m[d] = diag.grad[d][k];
      }
      for (int p = 0; p < sym; ++p) {
        x.q[p] = local.hess[p][k];
        x.n[p] = diag.hess[p][k];
      }
      std::array<double, 3> a{};
      std::array<double, 3> total{};
      for (int p = 0; p < sym; ++p) {
        a[p] = matrix_coefficient(partial(prob, x, q_slot(p)), p);
        const double ab = matrix_coefficient(partial(prob, x, n_slot(p)), p);
        lin.a[p].row(r)[k] = a[p];
        lin.abar[p].row(r)[k] = ab;
        total[p] = a[p] + ab;
      }
      for (int d = 0; d < dim; ++d) {
        lin.b[d].row(r)[k] = partial(prob, x, p_slot(d));
        lin.bbar[d].row(r)[k] = partial(prob, x, m_slot(d));
      }
      lin.c.row(r)[k] = partial(prob, x, Slot::u);
      lin.cbar.row(r)[k] = partial(prob, x, Slot::l);

      const double la = smallest_eigenvalue(dim, a);
      const double lt = smallest_eigenvalue(dim, total);
      auto ok = [floor](double l) { return std::isfinite(l) && (floor > 0.0 ? l >= floor : l > 0.0); };
      if (!ok(la) || !ok(lt)) {
        std::ostringstream msg;
        msg << "ellipticity condition of F violated at the anchor: "
            << (!ok(la) ? "dF/dq" : "dF/dq + dF/dn") << " has smallest eigenvalue "
            << (!ok(la) ? la : lt) << " at t=" << x.t << ", s=" << x.s << ", y=" << x.y[0];
        if (dim == 2) msg << "," << x.y[1];
        throw ModelError(msg.str());
      }
    }
  }

  const double h = grid.dtau();
  auto derive = [h](const std::vector<SliceField>& family) {
    std::vector<SliceField> out;
    out.reserve(family.size());
    for (const auto& f : family) out.push_back(row_derivative(f, h));
    return out;
  };
  lin.a_t = derive(lin.a);
  lin.abar_t = derive(lin.abar);
  lin.b_t = derive(lin.b);
  lin.bbar_t = derive(lin.bbar);
  lin.c_t = row_derivative(lin.c, h);
  lin.cbar_t = row_derivative(lin.cbar, h);
  return lin;
}

AnchorLinearization anchor_linearization(const NonlinearProblem& prob, const TriangleGrid& grid) {
  return anchor_at(prob, grid, nonlinear_initial_rows(prob, grid));
}

SampledLinearSystem linearized_system(const AnchorLinearization& anchors,
                                      const WindowInitial& init) {
  const auto& grid = anchors.grid;
  const int start = anchors.start;
  SampledLinearSystem sys;
  sys.grid = grid;
  for (std::size_t p = 0; p < anchors.a.size(); ++p) {
    // The principal part must stay present even where it vanishes.
    SampledField a;
    a.value = broadcast_rows(grid, start, anchors.a[p]);
    a.dt = broadcast_rows(grid, start, anchors.a_t[p]);
    sys.a.push_back(std::move(a));
    sys.abar.push_back(broadcast_field(grid, start, anchors.abar[p], anchors.abar_t[p]));
  }
  for (std::size_t d = 0; d < anchors.b.size(); ++d) {
    sys.b.push_back(broadcast_field(grid, start, anchors.b[d], anchors.b_t[d]));
    sys.bbar.push_back(broadcast_field(grid, start, anchors.bbar[d], anchors.bbar_t[d]));
  }
  sys.c = broadcast_field(grid, start, anchors.c, anchors.c_t);
  sys.cbar = broadcast_field(grid, start, anchors.cbar, anchors.cbar_t);
  sys.f.value.emplace(grid);
  sys.f.dt.emplace(grid);
  const std::size_t P = grid.points();
  sys.g = SliceField(grid.n_time(), P);
  sys.g_t = SliceField(grid.n_time(), P);
  for (int r = 0; r < init.u0.rows; ++r) {
    std::copy(init.u0.row(r).begin(), init.u0.row(r).end(), sys.g.row(start + r).begin());
    std::copy(init.v0.row(r).begin(), init.v0.row(r).end(), sys.g_t.row(start + r).begin());
  }
  return sys;
}

void assemble_lambda_source(const NonlinearProblem& prob, const AnchorLinearization& anchors,
                            const TriField& u_in, const TriField& v_in, int start, int end,
                            SampledLinearSystem& sys) {
  const auto& grid = anchors.grid;
  const int dim = grid.dim();
  const int sym = grid.sym_size();
  const std::size_t P = grid.points();
  if (!sys.f.value) sys.f.value.emplace(grid);
  if (!sys.f.dt) sys.f.dt.emplace(grid);

  std::vector<RowDerivatives> diag;
  diag.reserve(static_cast<std::size_t>(end - start + 1));
  for (int j = start; j <= end; ++j) diag.emplace_back(grid, u_in.slice(j, j));

  for (int it = start; it < grid.n_time(); ++it) {
    const int r = it - anchors.start;
    for (int is = start; is <= std::min(it, end); ++is) {
      const auto u = u_in.slice(it, is);
      const auto v = v_in.slice(it, is);
      const RowDerivatives du(grid, u);
      const RowDerivatives dv(grid, v);
      const auto& dd = diag[static_cast<std::size_t>(is - start)];
      const auto l = u_in.slice(is, is);
      auto phi = sys.f.value->slice(it, is);
      auto phi_t = sys.f.dt->slice(it, is);
      for (std::size_t k = 0; k < P; ++k) {
        FArgs x;
        x.t = grid.tau(it);
        x.s = grid.tau(is);
        x.y = grid.position(k);
        x.u = u[k];
        x.l = l[k];
        for (int d = 0; d < dim; ++d) {
          x.p[d] = du.grad[d][k];
          x.m[d] = dd.grad[d][k];
        }
        for (int p = 0; p < sym; ++p) {
          x.q[p] = du.hess[p][k];
          x.n[p] = dd.hess[p][k];
        }
        double lu = anchors.c.row(r)[k] * x.u + anchors.cbar.row(r)[k] * x.l;
        double lu_t = anchors.c_t.row(r)[k] * x.u + anchors.c.row(r)[k] * v[k] +
                      anchors.cbar_t.row(r)[k] * x.l;
        double chain = partial_t(prob, x) + partial(prob, x, Slot::u) * v[k];
        for (int d = 0; d < dim; ++d) {
          lu += anchors.b[d].row(r)[k] * x.p[d] + anchors.bbar[d].row(r)[k] * x.m[d];
          lu_t += anchors.b_t[d].row(r)[k] * x.p[d] + anchors.b[d].row(r)[k] * dv.grad[d][k] +
                  anchors.bbar_t[d].row(r)[k] * x.m[d];
          chain += partial(prob, x, p_slot(d)) * dv.grad[d][k];
        }
        for (int p = 0; p < sym; ++p) {
          const double w = weight(p);
          lu += w * (anchors.a[p].row(r)[k] * x.q[p] + anchors.abar[p].row(r)[k] * x.n[p]);
          lu_t += w * (anchors.a_t[p].row(r)[k] * x.q[p] + anchors.a[p].row(r)[k] * dv.hess[p][k] +
                       anchors.abar_t[p].row(r)[k] * x.n[p]);
          chain += partial(prob, x, q_slot(p)) * dv.hess[p][k];
        }
        phi[k] = prob.F(x) - lu;
        phi_t[k] = chain - lu_t;
        if (!std::isfinite(phi[k]) || !std::isfinite(phi_t[k])) {
          std::ostringstream msg;
          msg << "F is not finite at t=" << x.t << ", s=" << x.s << ", y=" << x.y[0];
          throw NumericalError(msg.str());
        }
      }
    }
  }
}

std::pair<TriField, TriField> lambda_map(const NonlinearProblem& prob, const TriField& u_in,
                                         const TriField& v_in, int start, int end,
                                         const WindowInitial& init, const SolverOptions& options) {
  const auto anchors = anchor_at(prob, u_in.grid(), init, options.step.ellipticity_floor);
  auto sys = linearized_system(anchors, init);
  assemble_lambda_source(prob, anchors, u_in, v_in, start, end, sys);
  TriField u = u_in;
  TriField v = v_in;
  const auto report = solve_linear_window(sys, start, end, init, options, u, v, &v_in);
  if (!report.accepted) throw NonConvergenceError("lambda_map: inner linear solve did not converge");
  return {std::move(u), std::move(v)};
}

namespace {

WindowInitial rows_at(const TriField& u, const TriField& v, int start) {
  const auto& grid = u.grid();
  const int rows = grid.n_time() - start;
  WindowInitial init{start, SliceField(rows, grid.points()), SliceField(rows, grid.points())};
  for (int r = 0; r < rows; ++r) {
    const auto us = u.slice(start + r, start);
    const auto vs = v.slice(start + r, start);
    std::copy(us.begin(), us.end(), init.u0.row(r).begin());
    std::copy(vs.begin(), vs.end(), init.v0.row(r).begin());
  }
  return init;
}

/// Outer Picard iteration on one window; writes the strip into (u, v) when
/// accepted.
WindowReport solve_nonlinear_window(const NonlinearProblem& prob, int start, int end,
                                    const WindowInitial& init, const SolverOptions& options,
                                    TriField& u, TriField& v) {
  const auto& grid = u.grid();
  const Region strip{start, end, grid.n_time() - 1};
  WindowReport report;
  report.start = start;
  report.end = end;

  const auto anchors = anchor_at(prob, grid, init, options.step.ellipticity_floor);
  auto sys = linearized_system(anchors, init);
  SolverOptions inner = options;
  inner.tolerance = 0.1 * options.tolerance;

  TriField u_cur(grid);
  TriField v_cur(grid);
  for (int it = start; it < grid.n_time(); ++it) {
    for (int is = start; is <= strip.last_row(it); ++is) {
      const auto us = init.u0.row(it - start);
      const auto vs = init.v0.row(it - start);
      std::copy(us.begin(), us.end(), u_cur.slice(it, is).begin());
      std::copy(vs.begin(), vs.end(), v_cur.slice(it, is).begin());
    }
  }
  TriField u_new(grid);
  TriField v_new(grid);
  TriField du(grid);
  TriField dv(grid);
  double previous = 0.0;
  for (int iter = 1; iter <= options.max_iter; ++iter) {
    report.iterations = iter;
    try {
      assemble_lambda_source(prob, anchors, u_cur, v_cur, start, end, sys);
      const auto lin = solve_linear_window(sys, start, end, init, inner, u_new, v_new, &v_cur);
      if (!lin.accepted) return report;
    } catch (const NumericalError&) {
      return report;
    }
    region_difference(u_new, u_cur, strip, du);
    region_difference(v_new, v_cur, strip, dv);
    const double inc = tri_norms(du, &dv, options.holder, SliceOrder::alpha, strip).double_bracket;
    report.increments.push_back(inc);
    if (!std::isfinite(inc)) return report;
    if (iter > 1) report.contraction_factors.push_back(inc / previous);
    previous = inc;
    std::swap(u_cur, u_new);
    std::swap(v_cur, v_new);
    if (inc <= options.tolerance) {
      report.final_increment = inc;
      if (!report.contraction_factors.empty() &&
          report.contraction_factors.back() >= options.contraction_cap) {
        return report;
      }
      copy_region(u_cur, strip, u);
      copy_region(v_cur, strip, v);
      report.accepted = true;
      return report;
    }
    const auto& f = report.contraction_factors;
    if (static_cast<int>(f.size()) >= options.cap_patience &&
        std::all_of(f.end() - options.cap_patience, f.end(),
                    [&](double x) { return x >= options.contraction_cap; })) {
      return report;
    }
  }
  report.final_increment = previous;
  return report;
}

}  // namespace

LinearSolution solve_nonlinear(const NonlinearProblem& prob, const TriangleGrid& grid,
                               const SolverOptions& options) {
  const auto clock_start = std::chrono::steady_clock::now();
  if (!(options.tolerance > 0.0)) throw ConfigError("tolerance must be positive");
  if (options.max_iter < 1) throw ConfigError("max_iter must be at least 1");
  options.holder.validate();

  const int last = grid.n_time() - 1;
  LinearSolution sol{TriField(grid), TriField(grid), {}};
  auto& report = sol.report;
  WindowInitial init = nonlinear_initial_rows(prob, grid);
  int start = 0;
  int length = options.initial_window > 0 ? options.initial_window : last;
  while (start < last) {
    const int end = std::min(start + length, last);
    auto wr = solve_nonlinear_window(prob, start, end, init, options, sol.u, sol.v);
    report.iterations += wr.iterations;
    const bool accepted = wr.accepted;
    report.windows.push_back(wr);
    if (!accepted) {
      if (end - start <= 1) {
        std::ostringstream msg;
        msg << "nonlinear solver did not converge on the minimal window [" << start << ", " << end
            << "] after " << wr.iterations << " iterations";
        throw SolverNonConvergence(msg.str(), report);
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
  if (!sol.u.all_finite() || !sol.v.all_finite()) {
    throw NumericalError("nonlinear solver produced non-finite values");
  }
  report.converged = true;
  report.norm_snapshot = tri_norms(sol.u, &sol.v, options.holder);
  report.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count();
  return sol;
}

double residual_nonlinear(const TriField& u, const NonlinearProblem& prob) {
  const auto& grid = u.grid();
  validate(prob, grid);
  const int dim = grid.dim();
  const int sym = grid.sym_size();
  const std::size_t P = grid.points();
  std::vector<RowDerivatives> diag;
  diag.reserve(static_cast<std::size_t>(grid.n_time()));
  for (int j = 0; j < grid.n_time(); ++j) diag.emplace_back(grid, u.slice(j, j));
  double worst = 0.0;
  for (int it = 2; it < grid.n_time(); ++it) {
    for (int is = 1; is < it; ++is) {
      const auto row = u.slice(it, is);
      const auto ahead = u.slice(it, is + 1);
      const auto behind = u.slice(it, is - 1);
      const RowDerivatives local(grid, row);
      const auto& dd = diag[static_cast<std::size_t>(is)];
      const auto l = u.slice(is, is);
      for (std::size_t k = 0; k < P; ++k) {
        FArgs x;
        x.t = grid.tau(it);
        x.s = grid.tau(is);
        x.y = grid.position(k);
        x.u = row[k];
        x.l = l[k];
        for (int d = 0; d < dim; ++d) {
          x.p[d] = local.grad[d][k];
          x.m[d] = dd.grad[d][k];
        }
        for (int p = 0; p < sym; ++p) {
          x.q[p] = local.hess[p][k];
          x.n[p] = dd.hess[p][k];
        }
        const double ds = (ahead[k] - behind[k]) / (2.0 * grid.dtau());
        worst = std::max(worst, std::abs(ds - prob.F(x)));
      }
    }
  }
  return worst;
}

namespace {

struct Sampler {
  const NonlinearProblem& prob;
  const TriangleGrid& grid;
  std::mt19937_64 rng;

  FArgs draw(double radius) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> box(-radius, radius);
    FArgs x;
    x.t = grid.horizon() * unit(rng);
    x.s = x.t * unit(rng);
    for (int d = 0; d < grid.dim(); ++d) x.y[d] = grid.period() * unit(rng);
    for (Slot slot : kAllSlots) {
      if (slot_active(slot, grid.dim())) slot_ref(x, slot) = box(rng);
    }
    return x;
  }
};

struct LipschitzPass {
  std::array<double, kSlotCount> lipschitz{};
  std::array<double, kSlotCount> derivative_lipschitz{};
  double min_a = std::numeric_limits<double>::infinity();
  double min_total = std::numeric_limits<double>::infinity();
  bool non_finite = false;
};

LipschitzPass lipschitz_pass(const NonlinearProblem& prob, const TriangleGrid& grid,
                             const RegularityOptions& options, double radius, std::uint64_t seed) {
  Sampler sampler{prob, grid, std::mt19937_64(seed)};
  std::uniform_real_distribution<double> unit(0.5, 1.0);
  std::bernoulli_distribution coin(0.5);
  const int dim = grid.dim();
  const int sym = grid.sym_size();
  LipschitzPass out;
  for (int sample = 0; sample < options.samples; ++sample) {
    const FArgs x = sampler.draw(radius);
    const double fx = prob.F(x);
    if (!std::isfinite(fx)) out.non_finite = true;

    // Joint perturbation of every active slot for the derivative estimates.
    FArgs xj = x;
    double dist2 = 0.0;
    for (Slot slot : kAllSlots) {
      if (!slot_active(slot, dim)) continue;
      const double delta = options.pair_scale * radius * unit(sampler.rng) * (coin(sampler.rng) ? 1.0 : -1.0);
      slot_ref(xj, slot) += delta;
      dist2 += delta * delta;
    }
    const double dist = std::sqrt(dist2);

    for (Slot slot : kAllSlots) {
      if (!slot_active(slot, dim)) continue;
      const int idx = static_cast<int>(slot);
      FArgs xs = x;
      const double delta = options.pair_scale * radius * unit(sampler.rng) * (coin(sampler.rng) ? 1.0 : -1.0);
      slot_ref(xs, slot) += delta;
      const double q = std::abs(prob.F(xs) - fx) / std::abs(delta);
      if (!std::isfinite(q)) out.non_finite = true;
      else out.lipschitz[idx] = std::max(out.lipschitz[idx], q);

      const double dq = std::abs(partial(prob, xj, slot) - partial(prob, x, slot)) / dist;
      if (!std::isfinite(dq)) out.non_finite = true;
      else out.derivative_lipschitz[idx] = std::max(out.derivative_lipschitz[idx], dq);
    }

    std::array<double, 3> a{};
    std::array<double, 3> total{};
    for (int p = 0; p < sym; ++p) {
      a[p] = matrix_coefficient(partial(prob, x, q_slot(p)), p);
      total[p] = a[p] + matrix_coefficient(partial(prob, x, n_slot(p)), p);
    }
    out.min_a = std::min(out.min_a, smallest_eigenvalue(dim, a));
    out.min_total = std::min(out.min_total, smallest_eigenvalue(dim, total));
  }
  return out;
}

}  // namespace

RegularityReport check_regularity(const NonlinearProblem& prob, const TriangleGrid& grid,
                                  const RegularityOptions& options) {
  validate(prob, grid);
  if (options.samples < 1) throw ConfigError("check_regularity: samples must be positive");
  if (!(options.radius > 0.0) || !(options.pair_scale > 0.0)) {
    throw ConfigError("check_regularity: radius and pair_scale must be positive");
  }
  const auto base = lipschitz_pass(prob, grid, options, options.radius, options.seed);
  const auto wide = lipschitz_pass(prob, grid, options, 2.0 * options.radius, options.seed + 1);
  RegularityReport report;
  report.lipschitz = base.lipschitz;
  report.derivative_lipschitz = base.derivative_lipschitz;
  report.min_eig_a = base.min_a;
  report.min_eig_a_abar = base.min_total;
  report.ellipticity_violated = !(base.min_a > 0.0) || !(base.min_total > 0.0);
  report.non_finite = base.non_finite || wide.non_finite;
  const double tiny = 1e-12;
  for (int i = 0; i < kSlotCount; ++i) {
    if (wide.lipschitz[i] > options.growth_factor * base.lipschitz[i] + tiny) report.unbounded_growth = true;
  }
  return report;
}

double third_difference_sup(const TriField& u) {
  const auto& grid = u.grid();
  const double h3 = 2.0 * grid.dy() * grid.dy() * grid.dy();
  double worst = 0.0;
  for (int it = 0; it < grid.n_time(); ++it) {
    for (int is = 0; is <= it; ++is) {
      const auto row = u.slice(it, is);
      for (std::size_t k = 0; k < row.size(); ++k) {
        const auto idx = grid.multi_index(k);
        auto at = [&](int offset) { return row[grid.flat(idx[0] + offset, idx[1])]; };
        worst = std::max(worst, std::abs(at(2) - 2.0 * at(1) + 2.0 * at(-1) - at(-2)) / h3);
      }
    }
  }
  return worst;
}

}  // namespace nonlocal
