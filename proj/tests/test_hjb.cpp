#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "nonlocal/errors.hpp"
#include "nonlocal/hjb.hpp"
#include "oracles/tic_game.hpp"

using namespace nonlocal;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// dX = a dtau + sigma dW, h = disc(t, tau) (a^2 + state_weight (1 - cos y)),
// g = disc(t, T) (1 - cos y) with disc = exp(-rho (tau - t)).
ControlProblem lq_problem(double rho, double sigma = 0.5, double state_weight = 0.0) {
  ControlProblem cp;
  cp.drift = [](double, const Point&, const Control& a) { return Point{a[0], 0.0}; };
  cp.volatility = [sigma](double, const Point&, const Control&) {
    return std::array<double, 4>{sigma, 0.0, 0.0, 0.0};
  };
  cp.running = [rho, state_weight](double t, double tau, const Point& y, const Control& a) {
    return std::exp(-rho * (tau - t)) * (a[0] * a[0] + state_weight * (1.0 - std::cos(y[0])));
  };
  cp.terminal = [rho, T = cp.horizon](double t, const Point& y) {
    return std::exp(-rho * (T - t)) * (1.0 - std::cos(y[0]));
  };
  // On the diagonal the discount is 1: argmin of p a + a^2.
  cp.closed_form = [](double, double, const Point&, const Point& p, const std::array<double, 3>&) {
    return Control{-0.5 * p[0], 0.0};
  };
  return cp;
}

double max_abs_diff(const DiagField& a, const DiagField& b) {
  double out = 0.0;
  for (std::size_t i = 0; i < a.values().size(); ++i) {
    out = std::max(out, std::abs(a.values()[i] - b.values()[i]));
  }
  return out;
}

}  // namespace

TEST_CASE("hamiltonian examples") {
  ControlProblem cp;
  cp.drift = [](double, const Point&, const Control& a) { return Point{a[0], 0.0}; };
  cp.volatility = [](double, const Point&, const Control&) { return std::array<double, 4>{}; };
  cp.running = [](double, double, const Point&, const Control& a) { return a[0] * a[0]; };
  cp.lower = {-1.0};
  cp.upper = {1.0};

  // p = q = 0 leaves the running cost.
  CHECK(hamiltonian(cp, 0.1, 0.2, {0.3, 0.0}, {0.7, 0.0}, {}, {}) == doctest::Approx(0.49));
  // sigma = 0, b = a, h = a^2: p a + a^2.
  CHECK(hamiltonian(cp, 0.0, 0.0, {0.0, 0.0}, {0.5, 0.0}, {2.0, 0.0}, {3.0, 0.0, 0.0}) ==
        doctest::Approx(1.25));
  CHECK_THROWS_AS((void)hamiltonian(cp, 0.0, 0.0, {}, {1.5, 0.0}, {}, {}), ArgumentError);

  ControlProblem vol;
  vol.volatility = [](double, const Point&, const Control& a) {
    return std::array<double, 4>{a[0], 0.0, 0.0, 0.0};
  };
  CHECK(hamiltonian(vol, 0.0, 0.0, {}, {1.5, 0.0}, {}, {2.0, 0.0, 0.0}) == doctest::Approx(2.25));
}

TEST_CASE("argmin control") {
  ControlProblem cp = lq_problem(0.0);
  const auto closed = argmin_control(cp, 0.0, 0.0, {1.0, 0.0}, {0.6, 0.0}, {});
  CHECK(closed.control[0] == doctest::Approx(-0.3));

  ControlProblem grid = cp;
  grid.closed_form = nullptr;
  grid.lower = {-10.0};
  grid.upper = {10.0};
  grid.resolution = 20001;  // spacing 1e-3
  for (double p : {0.6, -1.37, 3.0001}) {
    const auto r = argmin_control(grid, 0.0, 0.0, {1.0, 0.0}, {p, 0.0}, {});
    CHECK(std::abs(r.control[0] + 0.5 * p) <= 1e-3);
    CHECK_FALSE(r.on_boundary);
  }
  // Default resolution: the quadratic fit recovers a quadratic exactly.
  grid.resolution = 64;
  const auto coarse = argmin_control(grid, 0.0, 0.0, {1.0, 0.0}, {1.37, 0.0}, {});
  CHECK(coarse.control[0] == doctest::Approx(-0.685).epsilon(1e-10));

  SUBCASE("ties pick the smallest grid control") {
    ControlProblem flat;
    flat.volatility = [](double, const Point&, const Control&) { return std::array<double, 4>{}; };
    flat.lower = {-2.0};
    flat.upper = {3.0};
    const auto r = argmin_control(flat, 0.0, 0.0, {}, {}, {});
    CHECK(r.control[0] == -2.0);
    CHECK(r.on_boundary);
  }
  SUBCASE("lexicographic tie-break in two control dimensions") {
    ControlProblem flat;
    flat.control_dim = 2;
    flat.volatility = [](double, const Point&, const Control&) { return std::array<double, 4>{}; };
    // Minimal along the whole line a0 = 1.
    flat.running = [](double, double, const Point&, const Control& a) { return (a[0] - 1.0) * (a[0] - 1.0); };
    flat.lower = {-1.0, -1.0};
    flat.upper = {1.0, 1.0};
    const auto r = argmin_control(flat, 0.0, 0.0, {}, {}, {});
    CHECK(r.control[0] == 1.0);
    CHECK(r.control[1] == -1.0);
  }
  SUBCASE("positive scaling of H keeps the minimizer") {
    ControlProblem scaled = grid;
    const double c = 3.7;
    scaled.drift = [c](double, const Point&, const Control& a) { return Point{c * a[0], 0.0}; };
    scaled.volatility = [c](double, const Point&, const Control&) {
      return std::array<double, 4>{0.5 * std::sqrt(c), 0.0, 0.0, 0.0};
    };
    scaled.running = [c](double, double, const Point&, const Control& a) { return c * a[0] * a[0]; };
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> U(-3.0, 3.0);
    for (int i = 0; i < 20; ++i) {
      const Point p{U(rng), 0.0};
      const std::array<double, 3> q{U(rng), 0.0, 0.0};
      const auto a = argmin_control(grid, 0.0, 0.0, {}, p, q);
      const auto b = argmin_control(scaled, 0.0, 0.0, {}, p, q);
      CHECK(a.control[0] == doctest::Approx(b.control[0]).epsilon(1e-9));
    }
  }
  SUBCASE("non-finite Hamiltonian everywhere") {
    ControlProblem bad = grid;
    bad.running = [](double, double, const Point&, const Control&) { return std::nan(""); };
    CHECK_THROWS_AS((void)argmin_control(bad, 0.0, 0.0, {}, {}, {}), ModelError);
  }
}

TEST_CASE("time reversal") {
  NonlinearProblem prob;
  prob.F = [](const FArgs& x) {
    return std::sin(x.t) * x.q[0] + x.s * x.n[0] + x.u * x.l + std::cos(x.p[0] + 2.0 * x.m[0]) +
           x.y[0];
  };
  prob.F_q = {[](const FArgs& x) { return std::sin(x.t); }};
  prob.g = [](double t, std::span<const double> y) { return t * y[0]; };

  const double T = 1.0;
  const NonlinearProblem rev = time_reverse(prob, T);
  const NonlinearProblem back = time_reverse(rev, T);
  const double y[1] = {0.8};
  CHECK(rev.g(0.3, y) == doctest::Approx(0.7 * 0.8));

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    FArgs x;
    x.t = 0.5 + 0.5 * U(rng);
    x.s = 0.5 * (x.t + 0.5 + 0.5 * U(rng));
    x.y = {U(rng), 0.0};
    x.u = U(rng);
    x.p = {U(rng), 0.0};
    x.q = {U(rng), 0.0, 0.0};
    x.l = U(rng);
    x.m = {U(rng), 0.0};
    x.n = {U(rng), 0.0, 0.0};
    CHECK(back.F(x) == doctest::Approx(prob.F(x)).epsilon(1e-12));
    CHECK(back.F_q[0](x) == doctest::Approx(prob.F_q[0](x)).epsilon(1e-12));
    CHECK(back.g(x.t, y) == doctest::Approx(prob.g(x.t, y)).epsilon(1e-12));
  }

  // u_s + u_yy = 0 backward is u_s = -q; reversed it is the heat equation.
  NonlinearProblem backward_heat;
  backward_heat.F = [](const FArgs& x) { return -x.q[0]; };
  const auto fwd = time_reverse(backward_heat, 2.0);
  FArgs x;
  x.q = {1.25, 0.0, 0.0};
  CHECK(fwd.F(x) == 1.25);
}

TEST_CASE("zero-cost problem has the zero solution") {
  ControlProblem cp = lq_problem(0.0);
  cp.running = [](double, double, const Point&, const Control&) { return 0.0; };
  cp.terminal = [](double, const Point&) { return 0.0; };
  const auto grid = build_grid(9, 1, 32, 1.0, kTwoPi);
  const auto pol = solve_equilibrium_hjb(cp, grid);
  for (double x : pol.u_forward.values()) CHECK(x == 0.0);
  const auto res = verify_hjb_system(pol, cp);
  CHECK(res.res1 <= 1e-8);
  CHECK(res.res2 <= 1e-8);
}

TEST_CASE("time-consistent costs: u does not depend on t and matches the classical HJB") {
  const ControlProblem cp = lq_problem(0.0, 0.5, 0.5);
  const auto grid = build_grid(33, 1, 64, 1.0, kTwoPi);
  SolverOptions opt;
  const auto pol = solve_equilibrium_hjb(cp, grid, opt);

  // Every t-slice coincides with the longest one on the shared rows.
  const int n = grid.n_time();
  const auto ref = pol.u_forward.t_slice(n - 1);
  double worst = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto sl = pol.u_forward.t_slice(i);
    for (std::size_t x = 0; x < sl.size(); ++x) worst = std::max(worst, std::abs(sl[x] - ref[x]));
  }
  CHECK(worst <= 10.0 * opt.tolerance);

  // Policy feasibility and diagonal storage.
  for (int m = 0; m < n; ++m) {
    const auto row = pol.u_forward.slice(n - 1 - m, n - 1 - m);
    for (std::size_t k = 0; k < grid.points(); ++k) CHECK(pol.value.at(m, k) == row[k]);
  }

  const auto classical = solve_classical_hjb(cp, grid, opt);
  CHECK(max_abs_diff(classical.value, pol.value) <= 1e-6);
  CHECK(max_abs_diff(classical.control[0], pol.control[0]) <= 1e-5);

  const auto res = verify_hjb_system(pol, cp);
  CHECK(res.res1 == doctest::Approx(res.res1_literal).epsilon(1e-6));
  MESSAGE("time-consistent residuals: " << res.res1 << " " << res.res2);
}

TEST_CASE("reference-dependent discount matches the discrete game recursion") {
  // Calibrate the oracle gap on rho = 0, then require the rho > 0 gap to
  // stay within five times the calibrated constant.
  const int steps = 32;
  const int P = 64;
  const auto grid = build_grid(steps + 1, 1, P, 1.0, kTwoPi);
  const double scale = grid.dtau() + grid.dy() * grid.dy();

  auto gap = [&](double rho) {
    const ControlProblem cp = lq_problem(rho);
    const auto pol = solve_equilibrium_hjb(cp, grid);
    oracle::TicGame game;
    game.steps = steps;
    game.lattice = P;
    game.sigma = 0.5;
    game.running = [rho](double t, double tau, double, double a) { return std::exp(-rho * (tau - t)) * a * a; };
    game.terminal = [rho](double t, double y) { return std::exp(-rho * (1.0 - t)) * (1.0 - std::cos(y)); };
    const auto ref = oracle::solve_tic_game(game);
    double out = 0.0;
    for (int m = 0; m <= steps; ++m) {
      for (int k = 0; k < P; ++k) out = std::max(out, std::abs(pol.value.at(m, k) - ref.value[m][k]));
    }
    return out;
  };
  const double c_cal = gap(0.0) / scale;
  const double err = gap(1.0);
  MESSAGE("calibrated constant " << c_cal << ", discounted gap " << err);
  CHECK(err <= 5.0 * c_cal * scale);
}

TEST_CASE("reference-dependent discount: structure and residuals") {
  const double rho = 1.0;
  const ControlProblem cp = lq_problem(rho);
  double prev = 0.0;
  for (int level = 0; level < 2; ++level) {
    const auto grid = build_grid(17 << level, 1, 64, 1.0, kTwoPi);
    const auto pol = solve_equilibrium_hjb(cp, grid);
    const int n = grid.n_time();
    // Exponential discounting factors: u(t, s) = exp(-rho (s - t)) v(s).
    double worst = 0.0;
    for (int a = 0; a < n; a += 4) {
      for (int b = a; b < n; ++b) {
        for (std::size_t k = 0; k < grid.points(); ++k) {
          const double expect = std::exp(-rho * (grid.tau(b) - grid.tau(a))) * pol.value.at(b, k);
          worst = std::max(worst, std::abs(pol.u(a, b, k) - expect));
        }
      }
    }
    CHECK(worst <= 1e-6);
    const auto res = verify_hjb_system(pol, cp);
    MESSAGE("level " << level << ": res1 " << res.res1 << " literal " << res.res1_literal << " res2 "
                     << res.res2);
    CHECK(res.res1_literal > 10.0 * res.res1);
    if (level == 1) CHECK(res.res1 <= 0.55 * prev);
    prev = res.res1;
  }
}

TEST_CASE("control in the volatility with grid search") {
  auto make = [](double kappa) {
    ControlProblem cp = lq_problem(0.5, 0.5, 0.5);
    cp.volatility = [kappa](double, const Point&, const Control& a) {
      return std::array<double, 4>{0.5 + kappa * a[0], 0.0, 0.0, 0.0};
    };
    cp.closed_form = nullptr;
    cp.lower = {-0.5};
    cp.upper = {0.5};
    return cp;
  };
  const auto grid = build_grid(17, 1, 64, 1.0, kTwoPi);
  const auto base_cp = make(0.0);
  const auto coupled_cp = make(0.2);
  const auto base = solve_equilibrium_hjb(base_cp, grid);
  const auto coupled = solve_equilibrium_hjb(coupled_cp, grid);
  CHECK(coupled.report.converged);
  const double r0 = residual_nonlinear(base.u_forward, equilibrium_problem(base_cp));
  const double r1 = residual_nonlinear(coupled.u_forward, equilibrium_problem(coupled_cp));
  MESSAGE("residuals " << r0 << " " << r1);
  CHECK(r1 <= 10.0 * r0);
  for (double e : coupled.control[0].values()) {
    CHECK(e >= -0.5);
    CHECK(e <= 0.5);
  }
}

TEST_CASE("degenerate diffusion names the control") {
  // sigma = a: where g_yy > 0 the minimizer a = 0 switches the noise off.
  ControlProblem cp;
  cp.volatility = [](double, const Point&, const Control& a) { return std::array<double, 4>{a[0], 0.0, 0.0, 0.0}; };
  cp.terminal = [](double, const Point& y) { return 1.0 - std::cos(y[0]); };
  cp.lower = {-1.0};
  cp.upper = {1.0};
  cp.resolution = 65;
  const auto grid = build_grid(9, 1, 32, 1.0, kTwoPi);
  try {
    (void)solve_equilibrium_hjb(cp, grid);
    FAIL("expected a model error");
  } catch (const ModelError& e) {
    CHECK(std::string(e.what()).find("control a=") != std::string::npos);
  }
}
