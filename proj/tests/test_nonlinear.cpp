#include <algorithm>
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "nonlocal/errors.hpp"
#include "nonlocal/nonlinear.hpp"

using namespace nonlocal;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double max_abs(const TriField& a, const TriField& b) {
  double out = 0.0;
  const auto x = a.values();
  const auto y = b.values();
  for (std::size_t i = 0; i < x.size(); ++i) out = std::max(out, std::abs(x[i] - y[i]));
  return out;
}

NonlinearProblem heat(double diffusion = 1.0) {
  NonlinearProblem prob;
  prob.F = [diffusion](const FArgs& x) { return diffusion * x.q[0]; };
  prob.g = [](double, std::span<const double> y) { return std::sin(y[0]); };
  return prob;
}

// u* = e^{t-s}(2 + sin y) solves u_s = q + eps n/(1+n^2) + f* with the
// hand-derived f* = -2 e^{t-s} + eps sin y / (1 + sin^2 y), f*_t = -2 e^{t-s}.
NonlinearProblem manufactured(double eps) {
  NonlinearProblem prob;
  auto f = [eps](double t, double s, double y) {
    return -2.0 * std::exp(t - s) + eps * std::sin(y) / (1.0 + std::sin(y) * std::sin(y));
  };
  prob.F = [eps, f](const FArgs& x) {
    return x.q[0] + eps * x.n[0] / (1.0 + x.n[0] * x.n[0]) + f(x.t, x.s, x.y[0]);
  };
  prob.F_t = [](const FArgs& x) { return -2.0 * std::exp(x.t - x.s); };
  prob.g = [](double t, std::span<const double> y) { return std::exp(t) * (2.0 + std::sin(y[0])); };
  prob.g_t = prob.g;
  return prob;
}

double exact(double t, double s, double y) { return std::exp(t - s) * (2.0 + std::sin(y)); }

TriField sample(const TriangleGrid& grid, double (*fn)(double, double, double)) {
  TriField out(grid);
  for (int i = 0; i < grid.n_time(); ++i) {
    for (int j = 0; j <= i; ++j) {
      for (std::size_t k = 0; k < grid.points(); ++k) out.at(i, j, k) = fn(grid.tau(i), grid.tau(j), grid.position(k)[0]);
    }
  }
  return out;
}

// Linear problem with coefficients constant in (t, s): both solver paths
// then share their discrete equations exactly.
struct LinearCase {
  static double a(double y) { return 0.8 + 0.2 * std::cos(y); }
  static double abar(double y) { return 0.3 + 0.1 * std::sin(y); }
  static double b(double y) { return 0.2 * std::sin(y); }
  static double bbar(double) { return -0.1; }
  static double c(double) { return -0.3; }
  static double cbar(double y) { return 0.2 * std::cos(y); }
  static double f(double t, double s, double y) { return std::cos(y - t) * (1.0 + s); }
  static double f_t(double t, double s, double y) { return std::sin(y - t) * (1.0 + s); }
  static double g(double t, double y) { return std::sin(y) * std::exp(-t) + 0.5; }
  static double g_t(double t, double y) { return -std::sin(y) * std::exp(-t); }
};

LinearCoefficients linear_case_coefficients() {
  using L = LinearCase;
  LinearCoefficients c(1);
  auto lift = [](double (*fn)(double)) {
    return Coefficient::of([fn](double, double, std::span<const double> y) { return fn(y[0]); },
                           [](double, double, std::span<const double>) { return 0.0; });
  };
  c.a[0] = lift(L::a);
  c.abar[0] = lift(L::abar);
  c.b[0] = lift(L::b);
  c.bbar[0] = lift(L::bbar);
  c.c = lift(L::c);
  c.cbar = lift(L::cbar);
  c.f = Coefficient::of([](double t, double s, std::span<const double> y) { return L::f(t, s, y[0]); },
                        [](double t, double s, std::span<const double> y) { return L::f_t(t, s, y[0]); });
  c.g = [](double t, std::span<const double> y) { return L::g(t, y[0]); };
  c.g_t = [](double t, std::span<const double> y) { return L::g_t(t, y[0]); };
  return c;
}

NonlinearProblem linear_case_problem() {
  using L = LinearCase;
  NonlinearProblem prob;
  prob.F = [](const FArgs& x) {
    const double y = x.y[0];
    return L::a(y) * x.q[0] + L::b(y) * x.p[0] + L::c(y) * x.u + L::abar(y) * x.n[0] +
           L::bbar(y) * x.m[0] + L::cbar(y) * x.l + L::f(x.t, x.s, y);
  };
  prob.F_t = [](const FArgs& x) { return L::f_t(x.t, x.s, x.y[0]); };
  prob.g = [](double t, std::span<const double> y) { return L::g(t, y[0]); };
  prob.g_t = [](double t, std::span<const double> y) { return L::g_t(t, y[0]); };
  return prob;
}

}  // namespace

TEST_CASE("anchor linearization examples") {
  const auto grid = build_grid(5, 1, 64, 1.0, kTwoPi);
  SUBCASE("F = q") {
    const auto lin = anchor_linearization(heat(), grid);
    for (double x : lin.a[0].values) CHECK(x == doctest::Approx(1.0).epsilon(1e-9));
    for (const auto* f : {&lin.abar[0], &lin.b[0], &lin.bbar[0], &lin.c, &lin.cbar}) {
      for (double x : f->values) CHECK(std::abs(x) <= 1e-9);
    }
  }
  SUBCASE("F = q + n") {
    NonlinearProblem prob = heat();
    prob.F = [](const FArgs& x) { return x.q[0] + x.n[0]; };
    const auto lin = anchor_linearization(prob, grid);
    for (double x : lin.a[0].values) CHECK(x == doctest::Approx(1.0).epsilon(1e-9));
    for (double x : lin.abar[0].values) CHECK(x == doctest::Approx(1.0).epsilon(1e-9));
  }
  SUBCASE("F = q + eps sin(n), g = sin y") {
    const double eps = 0.3;
    NonlinearProblem prob = heat();
    prob.F = [eps](const FArgs& x) { return x.q[0] + eps * std::sin(x.n[0]); };
    const auto lin = anchor_linearization(prob, grid);
    for (int r = 0; r < lin.abar[0].rows; ++r) {
      for (std::size_t k = 0; k < grid.points(); ++k) {
        const double y = grid.position(k)[0];
        CHECK(std::abs(lin.abar[0].row(r)[k] - eps * std::cos(-std::sin(y))) <= 1e-3 * eps);
      }
    }
  }
  SUBCASE("non-elliptic F names the node") {
    NonlinearProblem prob = heat(-1.0);
    try {
      (void)anchor_linearization(prob, grid);
      FAIL("expected a model error");
    } catch (const ModelError& e) {
      CHECK(std::string(e.what()).find("t=") != std::string::npos);
    }
  }
}

TEST_CASE("analytic derivative closures agree with finite differences") {
  NonlinearProblem prob = manufactured(0.1);
  FArgs x;
  x.t = 0.4;
  x.s = 0.1;
  x.y = {1.3, 0.0};
  x.q[0] = -0.7;
  x.n[0] = 0.45;
  CHECK(partial(prob, x, Slot::q00) == doctest::Approx(1.0).epsilon(1e-9));
  const double n = x.n[0];
  const double dn = 0.1 * (1.0 - n * n) / ((1.0 + n * n) * (1.0 + n * n));
  CHECK(partial(prob, x, Slot::n00) == doctest::Approx(dn).epsilon(1e-8));
  prob.F_n = {[](const FArgs&) { return 42.0; }};
  CHECK(partial(prob, x, Slot::n00) == 42.0);
  const double ft = partial_t(prob, x);
  prob.F_t = nullptr;
  CHECK(partial_t(prob, x) == doctest::Approx(ft).epsilon(1e-8));
}

TEST_CASE("exact linearizations make the contraction map constant") {
  const auto grid = build_grid(9, 1, 16, 1.0, kTwoPi);
  for (int variant = 0; variant < 2; ++variant) {
    NonlinearProblem prob = heat();
    if (variant == 1) prob.F = [](const FArgs& x) { return x.q[0] + x.n[0]; };
    const auto init = nonlinear_initial_rows(prob, grid);
    TriField u1(grid);
    TriField v1(grid);
    TriField u2(grid);
    TriField v2(grid);
    for (int i = 0; i < grid.n_time(); ++i) {
      for (int j = 0; j <= i; ++j) {
        for (std::size_t k = 0; k < grid.points(); ++k) {
          const double y = grid.position(k)[0];
          const double s = grid.tau(j);
          u1.at(i, j, k) = init.u0.row(i)[k];
          u2.at(i, j, k) = init.u0.row(i)[k] + s * std::cos(2 * y);
          v2.at(i, j, k) = s * std::sin(y);
        }
      }
    }
    const auto [U1, V1] = lambda_map(prob, u1, v1, 0, 8, init);
    const auto [U2, V2] = lambda_map(prob, u2, v2, 0, 8, init);
    CHECK(max_abs(U1, U2) <= 1e-9);
  }
}

TEST_CASE("linear problems agree across the two solver paths") {
  const auto grid = build_grid(17, 1, 32, 1.0, kTwoPi);
  SolverOptions options;
  const auto lin = solve_linear(linear_case_coefficients(), grid, options);
  const auto non = solve_nonlinear(linear_case_problem(), grid, options);
  CHECK(max_abs(lin.u, non.u) <= 10 * options.tolerance);
  CHECK(max_abs(lin.v, non.v) <= 10 * options.tolerance);
}

TEST_CASE("zero data gives the zero solution") {
  const auto grid = build_grid(9, 1, 16, 1.0, kTwoPi);
  NonlinearProblem prob;
  prob.F = [](const FArgs& x) { return x.q[0] + 0.1 * std::sin(x.n[0]) + x.u * x.l; };
  prob.g = [](double, std::span<const double>) { return 0.0; };
  const auto sol = solve_nonlinear(prob, grid);
  CHECK(tri_norms(sol.u, &sol.v, HolderConfig{}).double_bracket == 0.0);
  CHECK(residual_nonlinear(sol.u, prob) == 0.0);
}

TEST_CASE("manufactured nonlinear solution converges at second order") {
  std::vector<double> errors;
  std::vector<double> third;
  for (int level = 0; level < 3; ++level) {
    const int scale = 1 << level;
    const auto grid = build_grid(8 * scale + 1, 1, 16 * scale, 1.0, kTwoPi);
    const auto prob = manufactured(0.1);
    const auto sol = solve_nonlinear(prob, grid);
    CHECK(sol.report.converged);
    for (double f : sol.report.contraction_factors) CHECK(f < 0.9);
    errors.push_back(max_abs(sol.u, sample(grid, exact)));
    third.push_back(third_difference_sup(sol.u));

    const double baseline = residual_nonlinear(sample(grid, exact), prob);
    const double h = grid.dtau() * grid.dtau() + grid.dy() * grid.dy();
    CHECK(baseline <= 2.0 * h);
    CHECK(residual_nonlinear(sol.u, prob) <= 10.0 * baseline);
  }
  CHECK(errors[0] / errors[1] >= 3.0);
  CHECK(errors[1] / errors[2] >= 3.0);
  // third spatial differences stay bounded (exact sup e)
  for (double x : third) CHECK(x <= std::exp(1.0) * 1.1);
}

TEST_CASE("converged solution is a fixed point of the contraction map") {
  const auto grid = build_grid(9, 1, 16, 1.0, kTwoPi);
  const auto prob = manufactured(0.1);
  SolverOptions options;
  const auto sol = solve_nonlinear(prob, grid, options);
  REQUIRE(sol.report.subintervals.size() == 1);
  const auto [U, V] = lambda_map(prob, sol.u, sol.v, 0, 8, nonlinear_initial_rows(prob, grid), options);
  const auto dv = V - sol.v;
  CHECK(tri_norms(U - sol.u, &dv, options.holder).double_bracket <= options.tolerance);
}

TEST_CASE("re-anchored windows keep accuracy and share boundary rows") {
  const auto grid = build_grid(17, 1, 32, 1.0, kTwoPi);
  SolverOptions options;
  options.initial_window = 4;
  const auto prob = manufactured(0.1);
  const auto sol = solve_nonlinear(prob, grid, options);
  REQUIRE(sol.report.subintervals.size() == 4);
  const double h = grid.dtau() * grid.dtau() + grid.dy() * grid.dy();
  CHECK(max_abs(sol.u, sample(grid, exact)) <= 0.5 * h);
  const auto whole = solve_nonlinear(prob, grid);
  CHECK(max_abs(sol.u, whole.u) <= 0.5 * h);
}

TEST_CASE("residual of the zero field") {
  const auto grid = build_grid(6, 1, 8, 1.0, kTwoPi);
  NonlinearProblem prob = heat();
  CHECK(residual_nonlinear(TriField(grid), prob) == 0.0);
}

TEST_CASE("regularity diagnostics") {
  const auto grid = build_grid(5, 1, 8, 1.0, kTwoPi);
  SUBCASE("F = q") {
    const auto r = check_regularity(heat(), grid);
    CHECK(r.lipschitz[static_cast<int>(Slot::q00)] == doctest::Approx(1.0).epsilon(1e-6));
    for (Slot s : {Slot::u, Slot::p0, Slot::l, Slot::m0, Slot::n00}) CHECK(r.lipschitz[static_cast<int>(s)] == 0.0);
    CHECK_FALSE(r.ellipticity_violated);
    CHECK_FALSE(r.unbounded_growth);
  }
  SUBCASE("F = -q") {
    CHECK(check_regularity(heat(-1.0), grid).ellipticity_violated);
  }
  SUBCASE("F = q + eps sin(n)") {
    const double eps = 0.2;
    NonlinearProblem prob = heat();
    prob.F = [eps](const FArgs& x) { return x.q[0] + eps * std::sin(x.n[0]); };
    const auto r = check_regularity(prob, grid);
    CHECK(r.lipschitz[static_cast<int>(Slot::n00)] == doctest::Approx(eps).epsilon(0.01));
    CHECK(r.derivative_lipschitz[static_cast<int>(Slot::n00)] <= eps * 1.01);
  }
  SUBCASE("exponential growth is flagged") {
    NonlinearProblem prob = heat();
    prob.F = [](const FArgs& x) { return x.q[0] + std::exp(3.0 * x.u); };
    CHECK(check_regularity(prob, grid).unbounded_growth);
  }
}
