#include "nonlocal/hjb.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <sstream>
#include <unordered_map>

#include "nonlocal/errors.hpp"

namespace nonlocal {

namespace {

double hamiltonian_unchecked(const ControlProblem& cp, double t, double s, const Point& y,
                             const Control& a, const Point& p, const std::array<double, 3>& q) {
  double value = cp.running ? cp.running(t, s, y, a) : 0.0;
  if (cp.drift) {
    const Point b = cp.drift(s, y, a);
    for (int i = 0; i < cp.dim; ++i) value += p[i] * b[i];
  }
  if (cp.volatility) {
    const auto cov = covariance(cp, s, y, a);
    value += 0.5 * (q[0] * cov[0]);
    if (cp.dim == 2) value += 0.5 * (2.0 * q[1] * cov[1] + q[2] * cov[2]);
  }
  return value;
}

void validate_controls(const ControlProblem& cp) {
  if (cp.dim < 1 || cp.dim > 2) throw ConfigError("control problem: dim must be 1 or 2");
  if (cp.noise_dim < 1 || cp.noise_dim > 2) throw ConfigError("control problem: noise_dim must be 1 or 2");
  if (cp.control_dim < 1 || cp.control_dim > 2) {
    throw ConfigError("control problem: control_dim must be 1 or 2");
  }
  if (cp.closed_form) return;
  const auto m = static_cast<std::size_t>(cp.control_dim);
  if (cp.lower.size() != m || cp.upper.size() != m) {
    throw ConfigError("control problem: a control box of matching dimension or a closed-form minimizer is required");
  }
  for (std::size_t c = 0; c < m; ++c) {
    if (!(cp.lower[c] <= cp.upper[c])) throw ConfigError("control problem: empty control box");
  }
  if (cp.resolution < 2) throw ConfigError("control problem: resolution must be at least 2");
}

std::string format_point(const double* v, int n) {
  std::ostringstream out;
  out << '(';
  for (int i = 0; i < n; ++i) out << (i ? ", " : "") << v[i];
  out << ')';
  return out.str();
}

Point to_point(std::span<const double> y) {
  Point p{};
  for (std::size_t i = 0; i < y.size() && i < 2; ++i) p[i] = y[i];
  return p;
}

/// Bitwise key of (s, y, m, n) for the argmin cache.
using ArgKey = std::array<std::uint64_t, 8>;

struct ArgKeyHash {
  std::size_t operator()(const ArgKey& k) const noexcept {
    std::uint64_t h = 0x9e3779b97f4a7c15ULL;
    for (auto w : k) {
      h ^= w + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    }
    return static_cast<std::size_t>(h);
  }
};

struct ArgminCache {
  static constexpr std::size_t kLimit = 1u << 21;
  std::unordered_map<ArgKey, Control, ArgKeyHash> map;
};

/// Row-wise spatial derivatives of one lattice row.
struct RowDerivs {
  std::vector<std::vector<double>> grad, hess;
};

RowDerivs row_derivs(const TriangleGrid& grid, std::span<const double> row) {
  const std::size_t P = grid.points();
  RowDerivs d;
  d.grad.assign(static_cast<std::size_t>(grid.dim()), std::vector<double>(P));
  d.hess.assign(static_cast<std::size_t>(grid.sym_size()), std::vector<double>(P));
  for (int a = 0; a < grid.dim(); ++a) {
    gradient(grid, row, a, d.grad[a]);
    for (int b = a; b < grid.dim(); ++b) hessian(grid, row, a, b, d.hess[sym_index(a, b)]);
  }
  return d;
}

Point grad_at(const RowDerivs& d, std::size_t k) {
  Point p{};
  for (std::size_t a = 0; a < d.grad.size(); ++a) p[a] = d.grad[a][k];
  return p;
}

std::array<double, 3> hess_at(const RowDerivs& d, std::size_t k) {
  std::array<double, 3> q{};
  for (std::size_t a = 0; a < d.hess.size(); ++a) q[a] = d.hess[a][k];
  return q;
}

void fill_operator(const ControlProblem& cp, const TriangleGrid& grid, double s,
                   const std::vector<Control>& policy, LocalOperatorSlice& op) {
  const std::size_t P = grid.points();
  for (std::size_t k = 0; k < P; ++k) {
    const Point y = grid.position(k);
    const Control& e = policy[k];
    const auto cov = cp.volatility ? covariance(cp, s, y, e) : std::array<double, 3>{};
    op.diffusion_block(0, P)[k] = 0.5 * cov[0];
    if (grid.dim() == 2) {
      op.diffusion_block(1, P)[k] = 0.5 * cov[1];
      op.diffusion_block(2, P)[k] = 0.5 * cov[2];
    }
    if (cp.drift) {
      const Point b = cp.drift(s, y, e);
      for (int a = 0; a < grid.dim(); ++a) op.drift_block(a, P)[k] = b[a];
    }
    op.source[k] = cp.running ? cp.running(s, s, y, e) : 0.0;
  }
}

}  // namespace

std::array<double, 3> covariance(const ControlProblem& cp, double s, const Point& y,
                                 const Control& a) {
  const auto sig = cp.volatility(s, y, a);
  const int k = cp.noise_dim;
  auto entry = [&](int i, int j) {
    double acc = 0.0;
    for (int l = 0; l < k; ++l) acc += sig[i * k + l] * sig[j * k + l];
    return acc;
  };
  if (cp.dim == 1) return {entry(0, 0), 0.0, 0.0};
  return {entry(0, 0), entry(0, 1), entry(1, 1)};
}

double hamiltonian(const ControlProblem& cp, double t, double s, const Point& y, const Control& a,
                   const Point& p, const std::array<double, 3>& q) {
  if (!cp.lower.empty()) {
    for (int c = 0; c < cp.control_dim; ++c) {
      const double slack = 1e-12 * std::max(1.0, std::abs(cp.upper[c] - cp.lower[c]));
      if (!(a[c] >= cp.lower[c] - slack && a[c] <= cp.upper[c] + slack)) {
        std::ostringstream msg;
        msg << "control " << format_point(a.data(), cp.control_dim)
            << " lies outside the control set";
        throw ArgumentError(msg.str());
      }
    }
  }
  return hamiltonian_unchecked(cp, t, s, y, a, p, q);
}

ArgminResult argmin_control(const ControlProblem& cp, double t, double s, const Point& y,
                            const Point& p, const std::array<double, 3>& q) {
  validate_controls(cp);
  if (cp.closed_form) {
    const Control a = cp.closed_form(t, s, y, p, q);
    return {a, hamiltonian_unchecked(cp, t, s, y, a, p, q), false};
  }
  const int m = cp.control_dim;
  const int N = cp.resolution;
  std::array<double, 2> step{};
  for (int c = 0; c < m; ++c) step[c] = (cp.upper[c] - cp.lower[c]) / (N - 1);
  auto node = [&](int c, int i) { return i == N - 1 ? cp.upper[c] : cp.lower[c] + i * step[c]; };

  // Strict improvement in lexicographic order keeps the smallest minimizer.
  double best = std::numeric_limits<double>::infinity();
  std::array<int, 2> idx{-1, -1};
  const int n1 = m == 2 ? N : 1;
  for (int i0 = 0; i0 < N; ++i0) {
    for (int i1 = 0; i1 < n1; ++i1) {
      const Control a{node(0, i0), m == 2 ? node(1, i1) : 0.0};
      const double h = hamiltonian_unchecked(cp, t, s, y, a, p, q);
      if (std::isfinite(h) && h < best) {
        best = h;
        idx = {i0, i1};
      }
    }
  }
  if (idx[0] < 0) {
    std::ostringstream msg;
    msg << "Hamiltonian is not finite anywhere on the control set at s=" << s
        << " y=" << format_point(y.data(), cp.dim);
    throw ModelError(msg.str());
  }

  ArgminResult res;
  res.control = {node(0, idx[0]), m == 2 ? node(1, idx[1]) : 0.0};
  res.value = best;
  for (int c = 0; c < m; ++c) {
    if (step[c] > 0.0 && (idx[c] == 0 || idx[c] == N - 1)) res.on_boundary = true;
  }
  for (int c = 0; c < m; ++c) {
    if (idx[c] <= 0 || idx[c] >= N - 1) continue;
    Control lo = res.control, hi = res.control;
    lo[c] = node(c, idx[c] - 1);
    hi[c] = node(c, idx[c] + 1);
    const double hl = hamiltonian_unchecked(cp, t, s, y, lo, p, q);
    const double hh = hamiltonian_unchecked(cp, t, s, y, hi, p, q);
    const double curv = hl - 2.0 * res.value + hh;
    if (!std::isfinite(curv) || !(curv > 0.0)) continue;
    const double delta = std::clamp(0.5 * (hl - hh) / curv, -1.0, 1.0);
    Control cand = res.control;
    cand[c] = std::clamp(cand[c] + delta * step[c], cp.lower[c], cp.upper[c]);
    const double hc = hamiltonian_unchecked(cp, t, s, y, cand, p, q);
    if (std::isfinite(hc) && hc <= res.value) {
      res.control = cand;
      res.value = hc;
    }
  }
  return res;
}

NonlinearProblem equilibrium_problem(const ControlProblem& cp) {
  validate_controls(cp);
  if (!cp.terminal) throw ConfigError("control problem: terminal cost is required");
  if (!cp.volatility) throw ConfigError("control problem: volatility is required");
  auto cache = std::make_shared<ArgminCache>();

  // phi(s, s, y, m, n), memoized on the exact argument bits.
  auto phi = [cp, cache](double s, const Point& y, const Point& m, const std::array<double, 3>& n) {
    const ArgKey key{std::bit_cast<std::uint64_t>(s),    std::bit_cast<std::uint64_t>(y[0]),
                     std::bit_cast<std::uint64_t>(y[1]), std::bit_cast<std::uint64_t>(m[0]),
                     std::bit_cast<std::uint64_t>(m[1]), std::bit_cast<std::uint64_t>(n[0]),
                     std::bit_cast<std::uint64_t>(n[1]), std::bit_cast<std::uint64_t>(n[2])};
    if (auto it = cache->map.find(key); it != cache->map.end()) return it->second;
    const Control a = argmin_control(cp, s, s, y, m, n).control;
    if (cache->map.size() >= ArgminCache::kLimit) cache->map.clear();
    cache->map.emplace(key, a);
    return a;
  };

  // Backward form u_s = -H(t, s, y, phi(s, s, y, m, n), p, q) on {t <= s <= T}.
  NonlinearProblem back;
  back.dim = cp.dim;
  back.F = [cp, phi](const FArgs& x) {
    const Control a = phi(x.s, x.y, x.m, x.n);
    return -hamiltonian_unchecked(cp, x.t, x.s, x.y, a, x.p, x.q);
  };
  auto zero = [](const FArgs&) { return 0.0; };
  back.F_u = zero;
  back.F_l = zero;
  for (int i = 0; i < cp.dim; ++i) {
    back.F_p.push_back([cp, phi, i](const FArgs& x) {
      if (!cp.drift) return 0.0;
      return -cp.drift(x.s, x.y, phi(x.s, x.y, x.m, x.n))[i];
    });
  }
  const int sym = cp.dim == 1 ? 1 : 3;
  for (int e = 0; e < sym; ++e) {
    // Packed derivative: diagonal entries carry 1/2, the off-diagonal entry 1.
    const double w = e == 1 ? 1.0 : 0.5;
    back.F_q.push_back([cp, phi, e, w](const FArgs& x) {
      return -w * covariance(cp, x.s, x.y, phi(x.s, x.y, x.m, x.n))[e];
    });
  }
  back.g = [cp](double t, std::span<const double> y) { return cp.terminal(t, to_point(y)); };
  return time_reverse(back, cp.horizon);
}

double EquilibriumPolicy::u(int t_node, int s_node, std::size_t iy) const {
  const int n = grid.n_time();
  if (t_node < 0 || s_node >= n || t_node > s_node) throw IndexError("u(t, s) needs t <= s on the grid");
  return u_forward.at(n - 1 - t_node, n - 1 - s_node, iy);
}

double EquilibriumPolicy::u_t(int t_node, int s_node, std::size_t iy) const {
  const int n = grid.n_time();
  if (t_node < 0 || s_node >= n || t_node > s_node) throw IndexError("u_t(t, s) needs t <= s on the grid");
  return -v_forward.at(n - 1 - t_node, n - 1 - s_node, iy);
}

EquilibriumPolicy solve_equilibrium_hjb(const ControlProblem& cp, const TriangleGrid& grid,
                                        const SolverOptions& options) {
  validate_controls(cp);
  if (cp.dim != grid.dim()) throw ConfigError("control problem dimension does not match the grid");
  if (std::abs(cp.horizon - grid.horizon()) > 1e-12 * cp.horizon) {
    throw ConfigError("control problem horizon does not match the grid");
  }
  const int n = grid.n_time();
  const std::size_t P = grid.points();
  const double T = cp.horizon;

  // The first anchors sit on the terminal row; a degenerate diffusion there
  // is reported with the control value that causes it.
  {
    std::vector<double> gT(P);
    for (std::size_t k = 0; k < P; ++k) gT[k] = cp.terminal(T, grid.position(k));
    const RowDerivs d = row_derivs(grid, gT);
    for (std::size_t k = 0; k < P; ++k) {
      const Point y = grid.position(k);
      const Control e = argmin_control(cp, T, T, y, grad_at(d, k), hess_at(d, k)).control;
      const auto cov = covariance(cp, T, y, e);
      const double lmin = cp.dim == 1
                              ? cov[0]
                              : 0.5 * (cov[0] + cov[2]) -
                                    std::sqrt(0.25 * (cov[0] - cov[2]) * (cov[0] - cov[2]) + cov[1] * cov[1]);
      if (!(lmin > options.step.ellipticity_floor)) {
        std::ostringstream msg;
        msg << "equilibrium control a=" << format_point(e.data(), cp.control_dim)
            << " at s=" << T << " y=" << format_point(y.data(), cp.dim)
            << " makes sigma sigma^T degenerate (smallest eigenvalue " << lmin << ")";
        throw ModelError(msg.str());
      }
    }
  }

  const NonlinearProblem prob = equilibrium_problem(cp);
  LinearSolution sol = solve_nonlinear(prob, grid, options);

  EquilibriumPolicy pol;
  pol.grid = grid;
  pol.value = DiagField(grid);
  pol.control.assign(static_cast<std::size_t>(cp.control_dim), DiagField(grid));
  for (int j = 0; j < n; ++j) {
    const int m = n - 1 - j;
    const auto row = sol.u.slice(j, j);
    std::copy(row.begin(), row.end(), pol.value.row(m).begin());
    const RowDerivs d = row_derivs(grid, row);
    const double s = T - grid.tau(j);
    for (std::size_t k = 0; k < P; ++k) {
      const auto r = argmin_control(cp, s, s, grid.position(k), grad_at(d, k), hess_at(d, k));
      for (int c = 0; c < cp.control_dim; ++c) pol.control[c].at(m, k) = r.control[c];
      if (r.on_boundary) ++pol.boundary_hits;
    }
  }
  pol.u_forward = std::move(sol.u);
  pol.v_forward = std::move(sol.v);
  pol.report = std::move(sol.report);
  return pol;
}

ClassicalHjbSolution solve_classical_hjb(const ControlProblem& cp, const TriangleGrid& grid,
                                         const SolverOptions& options) {
  validate_controls(cp);
  if (!cp.terminal) throw ConfigError("control problem: terminal cost is required");
  if (cp.dim != grid.dim()) throw ConfigError("control problem dimension does not match the grid");
  const int n = grid.n_time();
  const std::size_t P = grid.points();
  const double T = cp.horizon;

  std::vector<double> gT(P);
  for (std::size_t k = 0; k < P; ++k) gT[k] = cp.terminal(T, grid.position(k));

  // policy[j][k] in reversed time s' = tau_j.
  std::vector<std::vector<Control>> policy(static_cast<std::size_t>(n), std::vector<Control>(P));
  auto update_policy = [&](int j, std::span<const double> row) {
    const RowDerivs d = row_derivs(grid, row);
    const double s = T - grid.tau(j);
    for (std::size_t k = 0; k < P; ++k) {
      policy[j][k] = argmin_control(cp, s, s, grid.position(k), grad_at(d, k), hess_at(d, k)).control;
    }
  };
  for (int j = 0; j < n; ++j) update_policy(j, gT);

  SliceProvider provider = [&](int j) {
    LocalOperatorSlice op(grid);
    fill_operator(cp, grid, T - grid.tau(j), policy[j], op);
    return op;
  };

  SliceField prev;
  for (int iter = 1; iter <= options.max_iter; ++iter) {
    SliceField V = solve_parameterized_local(grid, provider, gT, n - 1, options.step);
    double change = std::numeric_limits<double>::infinity();
    if (!prev.values.empty()) {
      change = 0.0;
      for (std::size_t x = 0; x < V.values.size(); ++x) {
        change = std::max(change, std::abs(V.values[x] - prev.values[x]));
      }
    }
    for (int j = 0; j < n; ++j) update_policy(j, V.row(j));
    prev = std::move(V);
    if (change <= options.tolerance) {
      ClassicalHjbSolution out;
      out.iterations = iter;
      out.value = DiagField(grid);
      out.control.assign(static_cast<std::size_t>(cp.control_dim), DiagField(grid));
      for (int j = 0; j < n; ++j) {
        const int m = n - 1 - j;
        const auto row = prev.row(j);
        std::copy(row.begin(), row.end(), out.value.row(m).begin());
        for (std::size_t k = 0; k < P; ++k) {
          for (int c = 0; c < cp.control_dim; ++c) out.control[c].at(m, k) = policy[j][k][c];
        }
      }
      return out;
    }
  }
  throw NonConvergenceError("classical HJB policy iteration did not converge");
}

HjbResiduals verify_hjb_system(const EquilibriumPolicy& policy, const ControlProblem& cp) {
  const TriangleGrid& grid = policy.grid;
  const int n = grid.n_time();
  const std::size_t P = grid.points();
  const double T = cp.horizon;
  const double h = grid.dtau();
  const TriField& U = policy.u_forward;
  HjbResiduals res;

  auto control_at = [&](int m, std::size_t k) {
    Control e{};
    for (int c = 0; c < cp.control_dim; ++c) e[c] = policy.control[c].at(m, k);
    return e;
  };

  // u_s + H(t, s, y, e(s, y), u_y, u_yy); in reversed time u_s = -D_s' u~.
  for (int i = 2; i < n; ++i) {
    for (int j = 1; j < i; ++j) {
      const RowDerivs d = row_derivs(grid, U.slice(i, j));
      const double t = T - grid.tau(i);
      const double s = T - grid.tau(j);
      const auto up = U.slice(i, j + 1);
      const auto um = U.slice(i, j - 1);
      for (std::size_t k = 0; k < P; ++k) {
        const double u_s = -(up[k] - um[k]) / (2.0 * h);
        const double H = hamiltonian_unchecked(cp, t, s, grid.position(k), control_at(n - 1 - j, k),
                                               grad_at(d, k), hess_at(d, k));
        res.res2 = std::max(res.res2, std::abs(u_s + H));
      }
    }
  }

  // Diagonal: d/ds u(s, s) = u_t(s, s) + u_s(s, s).
  for (int m = 1; m + 1 < n; ++m) {
    const auto row = policy.value.row(m);
    const RowDerivs d = row_derivs(grid, row);
    const double s = T - grid.tau(n - 1 - m);
    for (std::size_t k = 0; k < P; ++k) {
      const double v_s = (policy.value.at(m + 1, k) - policy.value.at(m - 1, k)) / (2.0 * h);
      const double inf_h = argmin_control(cp, s, s, grid.position(k), grad_at(d, k), hess_at(d, k)).value;
      const double lit = v_s + inf_h;
      res.res1_literal = std::max(res.res1_literal, std::abs(lit));
      res.res1 = std::max(res.res1, std::abs(lit - policy.u_t(m, m, k)));
    }
  }
  return res;
}

}  // namespace nonlocal
