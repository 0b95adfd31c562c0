#include "nonlocal/fbsde.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "nonlocal/errors.hpp"

namespace nonlocal {

namespace {

using Point = std::array<double, 2>;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Point drift_at(const FbsdeModel& m, double s, const Point& y) {
  return m.drift ? m.drift(s, y) : Point{};
}

std::array<double, 4> vol_at(const FbsdeModel& m, double s, const Point& y) {
  return m.volatility ? m.volatility(s, y) : std::array<double, 4>{};
}

double lipschitz_probe(const FbsdeModel& model, const PathBundle& pb) {
  std::array<double, 2> lo{}, hi{};
  for (int a = 0; a < pb.dim; ++a) {
    lo[a] = std::numeric_limits<double>::infinity();
    hi[a] = -lo[a];
  }
  for (int p = 0; p < pb.n_paths; ++p) {
    for (int l = 0; l <= pb.n_steps; ++l) {
      for (int a = 0; a < pb.dim; ++a) {
        lo[a] = std::min(lo[a], pb.state(p, l, a));
        hi[a] = std::max(hi[a], pb.state(p, l, a));
      }
    }
  }
  constexpr int kProbe = 32;
  double L = 0.0;
  for (double s : {0.0, 0.5 * pb.horizon, pb.horizon}) {
    for (int axis = 0; axis < pb.dim; ++axis) {
      const double width = hi[axis] - lo[axis];
      if (!(width > 0.0)) continue;
      const double h = width / kProbe;
      for (int i = 0; i < kProbe; ++i) {
        Point y0{}, y1{};
        for (int a = 0; a < pb.dim; ++a) y0[a] = y1[a] = 0.5 * (lo[a] + hi[a]);
        y0[axis] = lo[axis] + i * h;
        y1[axis] = y0[axis] + h;
        const auto b0 = drift_at(model, s, y0), b1 = drift_at(model, s, y1);
        const auto s0 = vol_at(model, s, y0), s1 = vol_at(model, s, y1);
        for (int a = 0; a < 2; ++a) L = std::max(L, std::abs(b1[a] - b0[a]) / h);
        for (int a = 0; a < 4; ++a) L = std::max(L, std::abs(s1[a] - s0[a]) / h);
      }
    }
  }
  return L;
}

/// Periodic 4-point cubic stencil (offsets -1 .. 2) along each axis.
struct Stencil {
  std::array<std::size_t, 16> index{};
  std::array<double, 16> weight{};
  int size = 0;
};

void cubic_weights(double r, double* w) {
  w[0] = -r * (r - 1.0) * (r - 2.0) / 6.0;
  w[1] = (r + 1.0) * (r - 1.0) * (r - 2.0) / 2.0;
  w[2] = -(r + 1.0) * r * (r - 2.0) / 2.0;
  w[3] = (r + 1.0) * r * (r - 1.0) / 6.0;
}

Stencil make_stencil(const TriangleGrid& grid, const Point& y) {
  std::array<int, 2> base{};
  std::array<std::array<double, 4>, 2> w{};
  for (int a = 0; a < grid.dim(); ++a) {
    const double x = y[a] / grid.dy();
    const double fl = std::floor(x);
    base[a] = static_cast<int>(std::fmod(fl, static_cast<double>(grid.n_space())));
    cubic_weights(x - fl, w[a].data());
  }
  Stencil st;
  if (grid.dim() == 1) {
    for (int i = 0; i < 4; ++i) {
      st.index[i] = grid.flat(base[0] - 1 + i);
      st.weight[i] = w[0][i];
    }
    st.size = 4;
  } else {
    for (int j = 0; j < 4; ++j) {
      for (int i = 0; i < 4; ++i) {
        st.index[j * 4 + i] = grid.flat(base[0] - 1 + i, base[1] - 1 + j);
        st.weight[j * 4 + i] = w[0][i] * w[1][j];
      }
    }
    st.size = 16;
  }
  return st;
}

double interpolate_row(const Stencil& st, std::span<const double> row) {
  double acc = 0.0;
  for (int i = 0; i < st.size; ++i) acc += st.weight[i] * row[st.index[i]];
  return acc;
}

struct RowDerivs {
  std::vector<std::vector<double>> grad, hess;
};

RowDerivs derivs_of(const TriangleGrid& grid, std::span<const double> row) {
  RowDerivs d;
  d.grad.assign(static_cast<std::size_t>(grid.dim()), std::vector<double>(grid.points()));
  d.hess.assign(static_cast<std::size_t>(grid.sym_size()), std::vector<double>(grid.points()));
  for (int a = 0; a < grid.dim(); ++a) {
    gradient(grid, row, a, d.grad[a]);
    for (int b = a; b < grid.dim(); ++b) hessian(grid, row, a, b, d.hess[sym_index(a, b)]);
  }
  return d;
}

/// sum_ij M_ij H_ij for packed symmetric M and H.
double contract(const std::array<double, 3>& M, const RowDerivs& d, std::size_t k, int dim) {
  if (dim == 1) return M[0] * d.hess[0][k];
  return M[0] * d.hess[0][k] + 2.0 * M[1] * d.hess[1][k] + M[2] * d.hess[2][k];
}

std::array<double, 3> cov_of(const std::array<double, 4>& sig, int dim, int k) {
  auto e = [&](int i, int j) {
    double acc = 0.0;
    for (int l = 0; l < k; ++l) acc += sig[i * k + l] * sig[j * k + l];
    return acc;
  };
  if (dim == 1) return {e(0, 0), 0.0, 0.0};
  return {e(0, 0), e(0, 1), e(1, 1)};
}

void sample_stats(const std::vector<double>& r, double& mean, double& se, double& max_abs) {
  const auto n = static_cast<double>(r.size());
  mean = 0.0;
  max_abs = 0.0;
  for (double x : r) {
    mean += x;
    max_abs = std::max(max_abs, std::abs(x));
  }
  mean /= n;
  double var = 0.0;
  for (double x : r) var += (x - mean) * (x - mean);
  var = r.size() > 1 ? var / (n - 1.0) : 0.0;
  se = std::sqrt(var / n);
}

double ratio(double mean, double se) {
  if (se > 0.0) return std::abs(mean) / se;
  return mean == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
}

}  // namespace

PathBundle simulate_forward(const FbsdeModel& model, const std::array<double, 2>& y0,
                            double horizon, int n_paths, int n_steps, std::uint64_t seed) {
  if (model.dim < 1 || model.dim > 2) throw ConfigError("forward model: dim must be 1 or 2");
  if (model.noise_dim < 1 || model.noise_dim > 2) throw ConfigError("forward model: noise_dim must be 1 or 2");
  if (n_paths < 1 || n_steps < 1) throw ConfigError("simulate_forward: n_paths and n_steps must be positive");
  if (!(horizon > 0.0)) throw ConfigError("simulate_forward: horizon must be positive");

  PathBundle pb;
  pb.n_paths = n_paths;
  pb.n_steps = n_steps;
  pb.dim = model.dim;
  pb.noise_dim = model.noise_dim;
  pb.horizon = horizon;
  pb.dtau = horizon / n_steps;
  pb.seed = seed;
  pb.dW.resize(static_cast<std::size_t>(n_paths) * n_steps * model.noise_dim);
  pb.X.resize(static_cast<std::size_t>(n_paths) * (n_steps + 1) * model.dim);

  const double sq = std::sqrt(pb.dtau);
  const int d = model.dim, k = model.noise_dim;
  for (int p = 0; p < n_paths; ++p) {
    std::mt19937_64 rng(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(p))));
    std::normal_distribution<double> normal(0.0, 1.0);
    Point x{y0[0], d == 2 ? y0[1] : 0.0};
    double* X = &pb.X[static_cast<std::size_t>(p) * (n_steps + 1) * d];
    double* W = &pb.dW[static_cast<std::size_t>(p) * n_steps * k];
    for (int a = 0; a < d; ++a) X[a] = x[a];
    for (int l = 0; l < n_steps; ++l) {
      const double s = l * pb.dtau;
      const Point b = drift_at(model, s, x);
      const auto sig = vol_at(model, s, x);
      std::array<double, 2> dw{};
      for (int c = 0; c < k; ++c) dw[c] = W[l * k + c] = sq * normal(rng);
      Point next{};
      for (int a = 0; a < d; ++a) {
        next[a] = x[a] + b[a] * pb.dtau;
        for (int c = 0; c < k; ++c) next[a] += sig[a * k + c] * dw[c];
        if (!std::isfinite(next[a])) {
          std::ostringstream msg;
          msg << "forward path " << p << " is not finite at step " << l + 1;
          throw BlowUpError(msg.str());
        }
        X[(l + 1) * d + a] = next[a];
      }
      x = next;
    }
  }
  pb.lipschitz_estimate = lipschitz_probe(model, pb);
  return pb;
}

IncrementStats increment_statistics(const PathBundle& paths) {
  IncrementStats st;
  const auto n = static_cast<double>(paths.n_paths) * paths.n_steps;
  for (int c = 0; c < paths.noise_dim; ++c) {
    double mean = 0.0;
    for (int p = 0; p < paths.n_paths; ++p)
      for (int l = 0; l < paths.n_steps; ++l) mean += paths.increment(p, l, c);
    mean /= n;
    double m2 = 0.0, m4 = 0.0;
    for (int p = 0; p < paths.n_paths; ++p) {
      for (int l = 0; l < paths.n_steps; ++l) {
        const double x = paths.increment(p, l, c) - mean;
        m2 += x * x;
        m4 += x * x * x * x;
      }
    }
    const double var = m2 / (n - 1.0);
    m4 /= n;
    st.mean[c] = mean;
    st.variance[c] = var;
    st.mean_z[c] = std::abs(mean) / std::sqrt(var / n);
    st.variance_z[c] = std::abs(var - paths.dtau) / std::sqrt(std::max(m4 - var * var, 0.0) / n);
  }
  return st;
}

FKFields evaluate_fk_fields(const FkSolution& sol, const FbsdeModel& model, const PathBundle& paths,
                            std::vector<int> t_nodes) {
  const TriangleGrid& grid = sol.u_forward.grid();
  const int n = grid.n_time();
  const double T = grid.horizon();
  const int d = grid.dim();
  const int k = model.noise_dim;
  const std::size_t P = grid.points();
  if (model.dim != d || paths.dim != d || paths.noise_dim != k) {
    throw ConfigError("Feynman-Kac check: model, paths and grid dimensions differ");
  }
  if (std::abs(paths.horizon - T) > 1e-12 * T) {
    throw ConfigError("Feynman-Kac check: path horizon differs from the grid horizon");
  }
  if (paths.n_steps % (n - 1) != 0) {
    throw ConfigError("Feynman-Kac check: n_steps must be a multiple of n_time - 1");
  }
  if (!sol.forward.F || !sol.forward.g) throw ArgumentError("Feynman-Kac check: F and g are required");
  const int r = paths.n_steps / (n - 1);
  const NonlinearProblem back = time_reverse(sol.forward, T);
  if (t_nodes.empty()) {
    for (int m = 0; m < n; ++m) t_nodes.push_back(m);
  }

  // Diagonal triple, shared by every reference node.
  std::vector<std::vector<double>> diag(static_cast<std::size_t>(n));
  std::vector<RowDerivs> diag_d(static_cast<std::size_t>(n));
  for (int m = 0; m < n; ++m) {
    const auto row = sol.u_forward.slice(n - 1 - m, n - 1 - m);
    diag[m].assign(row.begin(), row.end());
    diag_d[m] = derivs_of(grid, row);
  }

  // Quantities per row: Y, generator, Z (k), Gamma (k x k), A (k).
  const int nq = 2 + k + k * k + k;
  const int qZ = 2, qG = 2 + k, qA = 2 + k + k * k;

  FKFields out;
  out.n_paths = paths.n_paths;
  out.n_steps = paths.n_steps;
  out.noise_dim = k;
  const std::size_t nodes = static_cast<std::size_t>(paths.n_paths) * (paths.n_steps + 1);

  for (int mt : t_nodes) {
    if (mt < 0 || mt >= n) throw IndexError("Feynman-Kac check: t node outside the grid");
    const double t = grid.tau(mt);
    const int rows = n - mt;
    // q[row][quantity] lattice rows; row index m - mt.
    std::vector<std::vector<std::vector<double>>> q(
        static_cast<std::size_t>(rows), std::vector<std::vector<double>>(nq, std::vector<double>(P)));
    std::vector<std::vector<std::vector<double>>> zgrad(static_cast<std::size_t>(rows));
    std::vector<std::vector<RowDerivs>> zder(static_cast<std::size_t>(rows));

    for (int m = mt; m < n; ++m) {
      auto& Q = q[m - mt];
      const double s = grid.tau(m);
      const auto urow = sol.u_forward.slice(n - 1 - mt, n - 1 - m);
      const RowDerivs du = derivs_of(grid, urow);
      for (std::size_t x = 0; x < P; ++x) {
        const Point y = grid.position(x);
        const auto sig = vol_at(model, s, y);
        const auto b = drift_at(model, s, y);
        FArgs a;
        a.t = t;
        a.s = s;
        a.y = y;
        a.u = urow[x];
        a.l = diag[m][x];
        for (int i = 0; i < d; ++i) {
          a.p[i] = du.grad[i][x];
          a.m[i] = diag_d[m].grad[i][x];
        }
        for (int e = 0; e < grid.sym_size(); ++e) {
          a.q[e] = du.hess[e][x];
          a.n[e] = diag_d[m].hess[e][x];
        }
        double gen = back.F(a) + 0.5 * contract(cov_of(sig, d, k), du, x, d);
        for (int i = 0; i < d; ++i) gen += b[i] * a.p[i];
        Q[0][x] = urow[x];
        Q[1][x] = gen;
        for (int c = 0; c < k; ++c) {
          double z = 0.0;
          for (int j = 0; j < d; ++j) z += sig[j * k + c] * a.p[j];
          Q[qZ + c][x] = z;
        }
      }
      zder[m - mt].resize(static_cast<std::size_t>(k));
      for (int c = 0; c < k; ++c) zder[m - mt][c] = derivs_of(grid, Q[qZ + c]);
    }

    const double h = grid.dtau();
    for (int m = mt; m < n; ++m) {
      auto& Q = q[m - mt];
      const double s = grid.tau(m);
      const int i = m - mt;
      for (int c = 0; c < k; ++c) {
        auto z = [&](int row) -> const std::vector<double>& { return q[row][qZ + c]; };
        for (std::size_t x = 0; x < P; ++x) {
          double zs = 0.0;
          if (rows >= 3) {
            if (i == 0) zs = (-3.0 * z(0)[x] + 4.0 * z(1)[x] - z(2)[x]) / (2.0 * h);
            else if (i == rows - 1) zs = (3.0 * z(i)[x] - 4.0 * z(i - 1)[x] + z(i - 2)[x]) / (2.0 * h);
            else zs = (z(i + 1)[x] - z(i - 1)[x]) / (2.0 * h);
          } else if (rows == 2) {
            zs = (z(1)[x] - z(0)[x]) / h;
          }
          const Point y = grid.position(x);
          const auto sig = vol_at(model, s, y);
          const auto b = drift_at(model, s, y);
          const RowDerivs& dz = zder[i][c];
          double A = zs + 0.5 * contract(cov_of(sig, d, k), dz, x, d);
          for (int j = 0; j < d; ++j) A += b[j] * dz.grad[j][x];
          Q[qA + c][x] = A;
          for (int a = 0; a < k; ++a) {
            double g = 0.0;
            for (int j = 0; j < d; ++j) g += sig[j * k + a] * dz.grad[j][x];
            Q[qG + c * k + a][x] = g;
          }
        }
      }
    }

    FkSlice sl;
    sl.t_node = mt;
    sl.t = t;
    sl.first_step = mt * r;
    sl.Y.assign(nodes, 0.0);
    sl.generator.assign(nodes, 0.0);
    sl.Z.assign(nodes * k, 0.0);
    sl.Gamma.assign(nodes * k * k, 0.0);
    sl.A.assign(nodes * k, 0.0);
    sl.terminal.assign(static_cast<std::size_t>(paths.n_paths), 0.0);

    std::vector<double> vals(static_cast<std::size_t>(nq));
    for (int p = 0; p < paths.n_paths; ++p) {
      for (int l = sl.first_step; l <= paths.n_steps; ++l) {
        Point y{};
        for (int a = 0; a < d; ++a) y[a] = paths.state(p, l, a);
        const Stencil st = make_stencil(grid, y);
        int lo = l / r;
        double w = static_cast<double>(l - lo * r) / r;
        if (lo >= n - 1) {
          lo = n - 2;
          w = 1.0;
        }
        for (int qq = 0; qq < nq; ++qq) {
          if (w == 0.0) {
            vals[qq] = interpolate_row(st, q[lo - mt][qq]);
          } else if (w == 1.0) {
            vals[qq] = interpolate_row(st, q[lo + 1 - mt][qq]);
          } else {
            vals[qq] = (1.0 - w) * interpolate_row(st, q[lo - mt][qq]) + w * interpolate_row(st, q[lo + 1 - mt][qq]);
          }
        }
        const std::size_t at = out.at(p, l);
        sl.Y[at] = vals[0];
        sl.generator[at] = vals[1];
        for (int c = 0; c < k; ++c) {
          sl.Z[at * k + c] = vals[qZ + c];
          sl.A[at * k + c] = vals[qA + c];
          for (int a = 0; a < k; ++a) sl.Gamma[(at * k + c) * k + a] = vals[qG + c * k + a];
        }
      }
      double yT[2] = {paths.state(p, paths.n_steps, 0), d == 2 ? paths.state(p, paths.n_steps, 1) : 0.0};
      sl.terminal[p] = back.g(t, std::span<const double>(yT, static_cast<std::size_t>(d)));
    }
    out.slices.push_back(std::move(sl));
  }
  return out;
}

FkReport bsde_residual_stats(const FKFields& fields, const PathBundle& paths) {
  const int k = fields.noise_dim;
  const double dt = paths.dtau;
  FkReport rep;
  rep.n_paths = fields.n_paths;
  rep.n_steps = fields.n_steps;
  std::vector<double> ry(static_cast<std::size_t>(fields.n_paths));
  std::vector<std::vector<double>> rz(static_cast<std::size_t>(k), ry);

  for (const FkSlice& sl : fields.slices) {
    for (int p = 0; p < fields.n_paths; ++p) {
      const std::size_t first = fields.at(p, sl.first_step);
      const std::size_t last = fields.at(p, fields.n_steps);
      double time_int = 0.0, noise_int = 0.0;
      std::array<double, 2> a_int{}, g_int{};
      for (int l = sl.first_step; l < fields.n_steps; ++l) {
        const std::size_t at = fields.at(p, l);
        time_int += 0.5 * (sl.generator[at] + sl.generator[at + 1]) * dt;
        for (int c = 0; c < k; ++c) {
          const double dw = paths.increment(p, l, c);
          noise_int += sl.Z[at * k + c] * dw;
          a_int[c] += 0.5 * (sl.A[at * k + c] + sl.A[(at + 1) * k + c]) * dt;
          for (int a = 0; a < k; ++a) g_int[c] += sl.Gamma[(at * k + c) * k + a] * paths.increment(p, l, a);
        }
      }
      ry[p] = sl.Y[first] - sl.terminal[p] + time_int + noise_int;
      for (int c = 0; c < k; ++c) {
        rz[c][p] = sl.Z[last * k + c] - sl.Z[first * k + c] - a_int[c] - g_int[c];
      }
    }
    ResidualStats st;
    st.t_node = sl.t_node;
    st.t = sl.t;
    sample_stats(ry, st.mean, st.standard_error, st.max_abs);
    // An empty interval carries no noise: the residual there is the
    // deterministic interpolation error of g, so it enters max_abs only.
    const bool stochastic = sl.first_step < fields.n_steps;
    if (stochastic) rep.max_ratio_y = std::max(rep.max_ratio_y, ratio(st.mean, st.standard_error));
    rep.max_abs_y = std::max(rep.max_abs_y, st.max_abs);
    for (int c = 0; c < k; ++c) {
      sample_stats(rz[c], st.z_mean[c], st.z_standard_error[c], st.z_max_abs[c]);
      if (stochastic) rep.max_ratio_z = std::max(rep.max_ratio_z, ratio(st.z_mean[c], st.z_standard_error[c]));
      rep.max_abs_z = std::max(rep.max_abs_z, st.z_max_abs[c]);
    }
    rep.per_t.push_back(st);
  }
  return rep;
}

FkReport verify_feynman_kac(const FkSolution& sol, const FbsdeModel& model, const PathBundle& paths) {
  FkReport total;
  total.n_paths = paths.n_paths;
  total.n_steps = paths.n_steps;
  for (int m = 0; m < sol.u_forward.grid().n_time(); ++m) {
    const FkReport part = bsde_residual_stats(evaluate_fk_fields(sol, model, paths, {m}), paths);
    total.per_t.insert(total.per_t.end(), part.per_t.begin(), part.per_t.end());
    total.max_ratio_y = std::max(total.max_ratio_y, part.max_ratio_y);
    total.max_ratio_z = std::max(total.max_ratio_z, part.max_ratio_z);
    total.max_abs_y = std::max(total.max_abs_y, part.max_abs_y);
    total.max_abs_z = std::max(total.max_abs_z, part.max_abs_z);
  }
  return total;
}

}  // namespace nonlocal
