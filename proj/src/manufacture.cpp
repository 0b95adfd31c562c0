#include "nonlocal/manufacture.hpp"

#include <cmath>
#include <random>
#include <string>

#include "nonlocal/errors.hpp"

namespace nonlocal {

namespace {

constexpr Var kY[2] = {Var::y1, Var::y2};
constexpr Var kP[2] = {Var::p1, Var::p2};
constexpr Var kM[2] = {Var::m1, Var::m2};
constexpr Var kQ[3] = {Var::q11, Var::q12, Var::q22};
constexpr Var kN[3] = {Var::n11, Var::n12, Var::n22};
// Packed entry k is the axis pair kPair[k].
constexpr int kPair[3][2] = {{0, 0}, {0, 1}, {1, 1}};

int sym_count(int dim) { return dim == 1 ? 1 : 3; }
// Packed index in dimension dim: d = 1 only has entry 0.
int packed(int dim, int k) { return dim == 1 ? 0 : k; }

VarSet space_time_vars(int dim) {
  VarSet v = var_set({Var::t, Var::s, Var::y1});
  if (dim == 2) v.set(static_cast<std::size_t>(Var::y2));
  return v;
}

VarSet f_vars(int dim) {
  VarSet v = space_time_vars(dim);
  for (Var x : {Var::u, Var::p1, Var::q11, Var::l, Var::m1, Var::n11}) v.set(static_cast<std::size_t>(x));
  if (dim == 2) {
    for (Var x : {Var::p2, Var::q12, Var::q22, Var::m2, Var::n12, Var::n22})
      v.set(static_cast<std::size_t>(x));
  }
  return v;
}

void require_subset(const ExprFn& e, VarSet allowed, const char* what) {
  const VarSet extra = e.free_vars() & ~allowed;
  if (extra.none()) return;
  for (int k = 0; k < kVarCount; ++k) {
    if (extra.test(static_cast<std::size_t>(k))) {
      throw ManufactureError(std::string(what) + " " + e.str() + " depends on '" +
                             var_name(static_cast<Var>(k)) + "'");
    }
  }
}

ExprFn entry(const std::vector<ExprFn>& v, std::size_t k) { return k < v.size() ? v[k] : ExprFn(); }

ExprFn on_diagonal(const ExprFn& e) { return e.substitute(Var::t, ExprFn::variable(Var::s)); }

VarValues space_time_values(double t, double s, std::span<const double> y) {
  VarValues v{};
  v[static_cast<int>(Var::t)] = t;
  v[static_cast<int>(Var::s)] = s;
  v[static_cast<int>(Var::y1)] = y.empty() ? 0.0 : y[0];
  v[static_cast<int>(Var::y2)] = y.size() > 1 ? y[1] : 0.0;
  return v;
}

SpaceTimeFn space_time_fn(ExprFn e) {
  return [e = std::move(e)](double t, double s, std::span<const double> y) {
    return e(space_time_values(t, s, y));
  };
}

InitialFn initial_fn(ExprFn e) {
  return [e = std::move(e)](double t, std::span<const double> y) {
    return e(space_time_values(t, 0.0, y));
  };
}

Coefficient coefficient_of(const ExprFn& e) {
  if (e.is_constant()) {
    const double c = e.constant_value();
    return c == 0.0 ? Coefficient{} : Coefficient::constant(c);
  }
  return Coefficient::of(space_time_fn(e), space_time_fn(e.derivative(Var::t)));
}

FFn f_fn(ExprFn e) {
  return [e = std::move(e)](const FArgs& args) { return e(values_of(args)); };
}

}  // namespace

VarValues values_of(const FArgs& args) {
  VarValues v{};
  v[static_cast<int>(Var::t)] = args.t;
  v[static_cast<int>(Var::s)] = args.s;
  v[static_cast<int>(Var::y1)] = args.y[0];
  v[static_cast<int>(Var::y2)] = args.y[1];
  v[static_cast<int>(Var::u)] = args.u;
  v[static_cast<int>(Var::l)] = args.l;
  for (int i = 0; i < 2; ++i) {
    v[static_cast<int>(kP[i])] = args.p[i];
    v[static_cast<int>(kM[i])] = args.m[i];
  }
  for (int k = 0; k < 3; ++k) {
    v[static_cast<int>(kQ[k])] = args.q[k];
    v[static_cast<int>(kN[k])] = args.n[k];
  }
  return v;
}

ExprFn linear_rhs(const LinearExprs& c) {
  ExprFn out = c.f;
  for (int k = 0; k < sym_count(c.dim); ++k) {
    const std::size_t pk = static_cast<std::size_t>(packed(c.dim, k));
    const ExprFn weight = ExprFn::constant(pk == 1 ? 2.0 : 1.0);
    out = out + weight * entry(c.a, pk) * ExprFn::variable(kQ[pk]);
    out = out + weight * entry(c.abar, pk) * ExprFn::variable(kN[pk]);
  }
  for (int i = 0; i < c.dim; ++i) {
    out = out + entry(c.b, static_cast<std::size_t>(i)) * ExprFn::variable(kP[i]);
    out = out + entry(c.bbar, static_cast<std::size_t>(i)) * ExprFn::variable(kM[i]);
  }
  out = out + c.c * ExprFn::variable(Var::u) + c.cbar * ExprFn::variable(Var::l);
  return out;
}

ExprFn manufacture_source(const ExprFn& u_star, const ExprFn& F, int dim) {
  if (dim < 1 || dim > 2) throw ConfigError("manufacture_source: dim must be 1 or 2");
  require_subset(u_star, space_time_vars(dim), "exact solution");
  require_subset(F, f_vars(dim), "right-hand side");

  ExprFn rhs = F.substitute(Var::u, u_star).substitute(Var::l, on_diagonal(u_star));
  for (int i = 0; i < dim; ++i) {
    const ExprFn ui = u_star.derivative(kY[i]);
    rhs = rhs.substitute(kP[i], ui).substitute(kM[i], on_diagonal(ui));
  }
  for (int k = 0; k < sym_count(dim); ++k) {
    const int pk = packed(dim, k);
    const ExprFn uij = u_star.derivative(kY[kPair[pk][0]]).derivative(kY[kPair[pk][1]]);
    rhs = rhs.substitute(kQ[pk], uij).substitute(kN[pk], on_diagonal(uij));
  }
  return u_star.derivative(Var::s) - rhs;
}

ExprFn manufacture_source(const ExprFn& u_star, const LinearExprs& coeffs) {
  LinearExprs homogeneous = coeffs;
  homogeneous.f = ExprFn();
  return manufacture_source(u_star, linear_rhs(homogeneous), coeffs.dim);
}

ExprFn initial_row(const ExprFn& u_star) { return u_star.substitute(Var::s, ExprFn::constant(0.0)); }

double source_spot_check(const ExprFn& u_star, const ExprFn& F, const ExprFn& f, int dim,
                         double horizon, double period, int samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  // Steps balance truncation against round-off for O(1) data.
  const double h1 = 1e-5;
  const double h2 = 2e-4;

  auto U = [&](double t, double s, std::array<double, 2> y) {
    return u_star(space_time_values(t, s, std::span<const double>(y.data(), 2)));
  };
  auto shifted = [](std::array<double, 2> y, int axis, double h) {
    y[static_cast<std::size_t>(axis)] += h;
    return y;
  };
  auto first = [&](double t, double s, const std::array<double, 2>& y, int i) {
    return (U(t, s, shifted(y, i, h1)) - U(t, s, shifted(y, i, -h1))) / (2.0 * h1);
  };
  auto second = [&](double t, double s, const std::array<double, 2>& y, int i, int j) {
    if (i == j) {
      return (U(t, s, shifted(y, i, h2)) - 2.0 * U(t, s, y) + U(t, s, shifted(y, i, -h2))) / (h2 * h2);
    }
    const auto pp = shifted(shifted(y, i, h2), j, h2), pm = shifted(shifted(y, i, h2), j, -h2);
    const auto mp = shifted(shifted(y, i, -h2), j, h2), mm = shifted(shifted(y, i, -h2), j, -h2);
    return (U(t, s, pp) - U(t, s, pm) - U(t, s, mp) + U(t, s, mm)) / (4.0 * h2 * h2);
  };

  double worst = 0.0;
  for (int k = 0; k < samples; ++k) {
    FArgs args;
    args.t = horizon * unit(rng);
    args.s = args.t * unit(rng);
    for (int i = 0; i < dim; ++i) args.y[static_cast<std::size_t>(i)] = period * unit(rng);
    const double t = args.t, s = args.s;
    args.u = U(t, s, args.y);
    args.l = U(s, s, args.y);
    for (int i = 0; i < dim; ++i) {
      args.p[static_cast<std::size_t>(i)] = first(t, s, args.y, i);
      args.m[static_cast<std::size_t>(i)] = first(s, s, args.y, i);
    }
    for (int q = 0; q < sym_count(dim); ++q) {
      const int pk = packed(dim, q);
      args.q[static_cast<std::size_t>(pk)] = second(t, s, args.y, kPair[pk][0], kPair[pk][1]);
      args.n[static_cast<std::size_t>(pk)] = second(s, s, args.y, kPair[pk][0], kPair[pk][1]);
    }
    const double us = (U(t, s + h1, args.y) - U(t, s - h1, args.y)) / (2.0 * h1);
    const double fd = us - F(values_of(args));
    const double sym = f(values_of(args));
    if (!std::isfinite(fd) || !std::isfinite(sym)) {
      throw ManufactureError("manufactured source is not finite at t=" + std::to_string(t) +
                             " s=" + std::to_string(s) + " y=" + std::to_string(args.y[0]));
    }
    worst = std::max(worst, std::abs(fd - sym));
  }
  return worst;
}

LinearCoefficients to_linear_coefficients(const LinearExprs& c) {
  LinearCoefficients out(c.dim);
  const VarSet allowed = space_time_vars(c.dim);
  auto check = [&](const ExprFn& e) {
    if ((e.free_vars() & ~allowed).any()) {
      throw ConfigError("linear coefficient " + e.str() + " may only depend on t, s, y");
    }
    return coefficient_of(e);
  };
  for (std::size_t k = 0; k < out.a.size(); ++k) {
    out.a[k] = check(entry(c.a, k));
    out.abar[k] = check(entry(c.abar, k));
  }
  for (std::size_t i = 0; i < out.b.size(); ++i) {
    out.b[i] = check(entry(c.b, i));
    out.bbar[i] = check(entry(c.bbar, i));
  }
  out.c = check(c.c);
  out.cbar = check(c.cbar);
  out.f = check(c.f);
  out.g = initial_fn(c.g);
  out.g_t = initial_fn(c.g.derivative(Var::t));
  return out;
}

NonlinearProblem to_nonlinear_problem(const ExprFn& F, const ExprFn& g, int dim) {
  if ((F.free_vars() & ~f_vars(dim)).any()) {
    throw ConfigError("F = " + F.str() + " uses a variable outside dimension " + std::to_string(dim));
  }
  NonlinearProblem prob;
  prob.dim = dim;
  prob.F = f_fn(F);
  prob.F_u = f_fn(F.derivative(Var::u));
  prob.F_l = f_fn(F.derivative(Var::l));
  prob.F_t = f_fn(F.derivative(Var::t));
  for (int i = 0; i < dim; ++i) {
    prob.F_p.push_back(f_fn(F.derivative(kP[i])));
    prob.F_m.push_back(f_fn(F.derivative(kM[i])));
  }
  for (int k = 0; k < sym_count(dim); ++k) {
    const int pk = packed(dim, k);
    prob.F_q.push_back(f_fn(F.derivative(kQ[pk])));
    prob.F_n.push_back(f_fn(F.derivative(kN[pk])));
  }
  prob.g = initial_fn(g);
  prob.g_t = initial_fn(g.derivative(Var::t));
  return prob;
}

}  // namespace nonlocal
