#pragma once

// Independent discrete-time equilibrium recursion for 1-d problems
// dX = a dtau + sigma dW on the circle [0, 2 pi) with reference-dependent
// costs h(t, tau, y, a) and g(t, y).  Agent m picks a_m(y) at time tau_m
// against the already fixed policies of agents m+1, ..., N-1; every earlier
// agent r < m then evaluates that policy with its own reference time tau_r.
// Expectations use Gauss-Hermite quadrature, off-lattice values 4-point
// periodic Lagrange interpolation, minimization golden-section search.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

namespace oracle {

struct TicGame {
  double horizon = 1.0;
  double sigma = 0.5;
  int steps = 32;     // time steps; nodes tau_m = m * horizon / steps
  int lattice = 64;   // points on [0, 2 pi)
  double control_bound = 4.0;
  int quadrature = 24;
  std::function<double(double t, double tau, double y, double a)> running;
  std::function<double(double t, double y)> terminal;
};

struct TicGameResult {
  // value[m][k]: agent m's cost-to-go at (tau_m, y_k); policy likewise.
  std::vector<std::vector<double>> value, policy;
};

inline void hermite_rule(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  // Golub-Welsch for the standard normal weight.
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) J(k, k - 1) = J(k - 1, k) = std::sqrt(static_cast<double>(k));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  nodes.resize(n);
  weights.resize(n);
  for (int i = 0; i < n; ++i) {
    nodes[i] = es.eigenvalues()(i);
    weights[i] = es.eigenvectors()(0, i) * es.eigenvectors()(0, i);
  }
}

inline double interpolate(const std::vector<double>& f, double dy, double y) {
  const int n = static_cast<int>(f.size());
  const double x = y / dy;
  const double fl = std::floor(x);
  const double r = x - fl;
  const int i = static_cast<int>(fl);
  auto at = [&](int k) { return f[((k % n) + n) % n]; };
  // Lagrange weights on nodes -1, 0, 1, 2.
  const double wm = -r * (r - 1.0) * (r - 2.0) / 6.0;
  const double w0 = (r + 1.0) * (r - 1.0) * (r - 2.0) / 2.0;
  const double w1 = -(r + 1.0) * r * (r - 2.0) / 2.0;
  const double w2 = (r + 1.0) * r * (r - 1.0) / 6.0;
  return wm * at(i - 1) + w0 * at(i) + w1 * at(i + 1) + w2 * at(i + 2);
}

inline TicGameResult solve_tic_game(const TicGame& game) {
  const int N = game.steps;
  const int P = game.lattice;
  const double dt = game.horizon / N;
  const double dy = 2.0 * std::numbers::pi / P;
  std::vector<double> z, w;
  hermite_rule(game.quadrature, z, w);
  const double spread = game.sigma * std::sqrt(dt);

  auto expect = [&](const std::vector<double>& f, double y) {
    double acc = 0.0;
    for (std::size_t q = 0; q < z.size(); ++q) acc += w[q] * interpolate(f, dy, y + spread * z[q]);
    return acc;
  };

  // cont[r]: agent r's cost-to-go at the next time node.
  std::vector<std::vector<double>> cont(N + 1, std::vector<double>(P));
  for (int r = 0; r <= N; ++r)
    for (int k = 0; k < P; ++k) cont[r][k] = game.terminal(r * dt, k * dy);

  TicGameResult out;
  out.value.assign(N + 1, std::vector<double>(P));
  out.policy.assign(N + 1, std::vector<double>(P));
  out.value[N] = cont[N];

  const double golden = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int m = N - 1; m >= 0; --m) {
    const double tm = m * dt;
    std::vector<double> a(P);
    for (int k = 0; k < P; ++k) {
      const double y = k * dy;
      auto objective = [&](double c) {
        return game.running(tm, tm, y, c) * dt + expect(cont[m], y + c * dt);
      };
      double lo = -game.control_bound, hi = game.control_bound;
      double x1 = hi - golden * (hi - lo), x2 = lo + golden * (hi - lo);
      double f1 = objective(x1), f2 = objective(x2);
      while (hi - lo > 1e-10) {
        if (f1 <= f2) {
          hi = x2; x2 = x1; f2 = f1;
          x1 = hi - golden * (hi - lo); f1 = objective(x1);
        } else {
          lo = x1; x1 = x2; f1 = f2;
          x2 = lo + golden * (hi - lo); f2 = objective(x2);
        }
      }
      a[k] = 0.5 * (lo + hi);
    }
    for (int r = 0; r <= m; ++r) {
      std::vector<double> next(P);
      for (int k = 0; k < P; ++k) {
        const double y = k * dy;
        next[k] = game.running(r * dt, tm, y, a[k]) * dt + expect(cont[r], y + a[k] * dt);
      }
      cont[r] = std::move(next);
    }
    out.value[m] = cont[m];
    out.policy[m] = a;
  }
  return out;
}

}  // namespace oracle
