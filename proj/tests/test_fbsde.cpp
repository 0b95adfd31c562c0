#include <algorithm>
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "nonlocal/errors.hpp"
#include "nonlocal/fbsde.hpp"
#include "nonlocal/hjb.hpp"

using namespace nonlocal;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

FbsdeModel constant_model(double b, double sigma) {
  FbsdeModel m;
  m.drift = [b](double, const Point&) { return Point{b, 0.0}; };
  m.volatility = [sigma](double, const Point&) { return std::array<double, 4>{sigma, 0.0, 0.0, 0.0}; };
  return m;
}

// Forward u_s = u_yy + 0.2 u_yy(s,s) + f with u* = e^{t-s}(2 + sin y).
LinearCoefficients manufactured_linear() {
  LinearCoefficients c(1);
  c.a[0] = Coefficient::constant(1.0);
  c.abar[0] = Coefficient::constant(0.2);
  c.f = Coefficient::of(
      [](double t, double s, std::span<const double> y) { return -2.0 * std::exp(t - s) + 0.2 * std::sin(y[0]); },
      [](double t, double s, std::span<const double>) { return -2.0 * std::exp(t - s); });
  c.g = [](double t, std::span<const double> y) { return std::exp(t) * (2.0 + std::sin(y[0])); };
  c.g_t = c.g;
  return c;
}

FkSolution solve_fk(const LinearCoefficients& coeffs, const TriangleGrid& grid) {
  const auto sol = solve_linear(coeffs, grid);
  return {as_nonlinear(coeffs), sol.u};
}

}  // namespace

TEST_CASE("forward paths") {
  SUBCASE("frozen state") {
    const auto pb = simulate_forward(constant_model(0.0, 0.0), {0.4, 0.0}, 1.0, 5, 8, 1);
    for (double x : pb.X) CHECK(x == 0.4);
  }
  SUBCASE("constant drift") {
    const auto pb = simulate_forward(constant_model(1.0, 0.0), {0.4, 0.0}, 1.0, 3, 16, 1);
    for (int p = 0; p < 3; ++p) CHECK(pb.state(p, 16, 0) == doctest::Approx(1.4).epsilon(1e-14));
  }
  SUBCASE("Brownian variance and increment statistics") {
    const auto pb = simulate_forward(constant_model(0.0, 1.0), {0.0, 0.0}, 1.0, 10000, 16, 42);
    double m2 = 0.0, m4 = 0.0;
    for (int p = 0; p < pb.n_paths; ++p) {
      const double x = pb.state(p, 16, 0);
      m2 += x * x;
      m4 += x * x * x * x;
    }
    m2 /= pb.n_paths;
    m4 /= pb.n_paths;
    const double se = std::sqrt((m4 - m2 * m2) / pb.n_paths);
    CHECK(std::abs(m2 - 1.0) <= 5.0 * se);
    const auto st = increment_statistics(pb);
    CHECK(st.mean_z[0] <= 5.0);
    CHECK(st.variance_z[0] <= 5.0);
  }
  SUBCASE("seed determinism") {
    const auto model = constant_model(0.3, 0.7);
    const auto a = simulate_forward(model, {1.0, 0.0}, 1.0, 50, 32, 9);
    const auto b = simulate_forward(model, {1.0, 0.0}, 1.0, 50, 32, 9);
    const auto c = simulate_forward(model, {1.0, 0.0}, 1.0, 50, 32, 10);
    CHECK(a == b);
    CHECK_FALSE(a.X == c.X);
  }
  SUBCASE("blow-up names the step") {
    FbsdeModel bad = constant_model(0.0, 1.0);
    bad.drift = [](double s, const Point&) { return Point{s > 0.35 ? std::nan("") : 0.0, 0.0}; };
    try {
      (void)simulate_forward(bad, {0.0, 0.0}, 1.0, 2, 10, 1);
      FAIL("expected blow-up");
    } catch (const BlowUpError& e) {
      CHECK(std::string(e.what()).find("step 5") != std::string::npos);
    }
  }
  SUBCASE("two-dimensional noise") {
    FbsdeModel m;
    m.dim = 2;
    m.noise_dim = 2;
    m.volatility = [](double, const Point&) { return std::array<double, 4>{1.0, 0.0, 0.5, 0.5}; };
    const auto pb = simulate_forward(m, {0.0, 0.0}, 1.0, 4000, 8, 3);
    const auto st = increment_statistics(pb);
    for (int c = 0; c < 2; ++c) {
      CHECK(st.mean_z[c] <= 5.0);
      CHECK(st.variance_z[c] <= 5.0);
    }
  }
}

TEST_CASE("Feynman-Kac fields: vanishing Z") {
  const auto grid = build_grid(9, 1, 32, 1.0, kTwoPi);
  const auto coeffs = manufactured_linear();
  const FkSolution sol = solve_fk(coeffs, grid);
  SUBCASE("sigma = 0") {
    const auto pb = simulate_forward(constant_model(0.4, 0.0), {1.0, 0.0}, 1.0, 3, 16, 1);
    const auto f = evaluate_fk_fields(sol, constant_model(0.4, 0.0), pb);
    for (const auto& sl : f.slices) {
      for (double z : sl.Z) CHECK(z == 0.0);
      for (double g : sl.Gamma) CHECK(g == 0.0);
    }
  }
  SUBCASE("spatially constant u") {
    LinearCoefficients flat(1);
    flat.a[0] = Coefficient::constant(1.0);
    flat.f = Coefficient::constant(0.5);
    flat.g = [](double t, std::span<const double>) { return 1.0 + t; };
    const FkSolution fs = solve_fk(flat, grid);
    const auto model = constant_model(0.1, 0.9);
    const auto pb = simulate_forward(model, {1.0, 0.0}, 1.0, 20, 16, 1);
    const auto f = evaluate_fk_fields(fs, model, pb);
    for (const auto& sl : f.slices)
      for (double z : sl.Z) CHECK(std::abs(z) <= 1e-12);
  }
  SUBCASE("step count must match the grid") {
    const auto pb = simulate_forward(constant_model(0.0, 1.0), {1.0, 0.0}, 1.0, 2, 12, 1);
    CHECK_THROWS_AS((void)evaluate_fk_fields(sol, constant_model(0.0, 1.0), pb), ConfigError);
  }
}

TEST_CASE("heat equation: Y is a martingale") {
  // Backward u_s + u_yy = 0, forward heat equation after reversal; with
  // sigma = sqrt(2) the generator vanishes.
  NonlinearProblem back;
  back.F = [](const FArgs& x) { return -x.q[0]; };
  back.g = [](double, std::span<const double> y) { return std::sin(y[0]); };
  const auto grid = build_grid(17, 1, 64, 1.0, kTwoPi);
  const NonlinearProblem fwd = time_reverse(back, 1.0);
  const auto sol = solve_nonlinear(fwd, grid);
  const FkSolution fk{fwd, sol.u};
  const auto model = constant_model(0.0, std::sqrt(2.0));
  const auto pb = simulate_forward(model, {1.0, 0.0}, 1.0, 4000, 64, 5);
  const auto fields = evaluate_fk_fields(fk, model, pb, {0, 8});
  for (const auto& sl : fields.slices) {
    double mean = 0.0, m2 = 0.0;
    for (int p = 0; p < pb.n_paths; ++p) {
      const double dY = sl.Y[fields.at(p, pb.n_steps)] - sl.Y[fields.at(p, sl.first_step)];
      mean += dY;
      m2 += dY * dY;
    }
    mean /= pb.n_paths;
    const double se = std::sqrt((m2 / pb.n_paths - mean * mean) / (pb.n_paths - 1));
    CHECK(std::abs(mean) <= 3.0 * se);
    for (double g : sl.generator) CHECK(std::abs(g) <= 1e-9);
  }
  const auto rep = verify_feynman_kac(fk, model, pb);
  CHECK(rep.max_ratio_y <= 3.0);
  CHECK(rep.max_ratio_z <= 3.0);
}

TEST_CASE("nonlocal linear problem: residual means vanish") {
  const auto grid = build_grid(17, 1, 64, 1.0, kTwoPi);
  const FkSolution sol = solve_fk(manufactured_linear(), grid);
  const auto model = constant_model(0.3, 0.8);
  const auto pb = simulate_forward(model, {1.0, 0.0}, 1.0, 4000, 64, 11);
  const auto rep = verify_feynman_kac(sol, model, pb);
  CHECK(rep.per_t.size() == 17u);
  MESSAGE("max |mean|/SE: Y " << rep.max_ratio_y << ", Z " << rep.max_ratio_z);
  CHECK(rep.max_ratio_y <= 3.0);
  CHECK(rep.max_ratio_z <= 3.0);
}

TEST_CASE("deterministic paths: residual is quadrature error of order dtau^2") {
  const auto model = constant_model(0.5, 0.0);
  std::vector<double> res;
  for (int level = 0; level < 3; ++level) {
    const int n = (8 << level) + 1;
    const auto grid = build_grid(n, 1, 32 << level, 1.0, kTwoPi);
    const FkSolution sol = solve_fk(manufactured_linear(), grid);
    const auto pb = simulate_forward(model, {1.0, 0.0}, 1.0, 2, n - 1, 1);
    const auto rep = verify_feynman_kac(sol, model, pb);
    const double h = grid.dtau();
    MESSAGE("level " << level << ": max |R| = " << rep.max_abs_y << ", /dtau^2 = " << rep.max_abs_y / (h * h));
    res.push_back(rep.max_abs_y);
  }
  CHECK(res[0] / res[1] >= 3.0);
  CHECK(res[1] / res[2] >= 3.0);
}

TEST_CASE("no diagonal dependence: identical to the parameterized local check") {
  // u_s = u_yy + 0.3 u_y - 0.2 u + t e^{-s} sin y solved per t-slice.
  LinearCoefficients c(1);
  c.a[0] = Coefficient::constant(1.0);
  c.b[0] = Coefficient::constant(0.3);
  c.c = Coefficient::constant(-0.2);
  c.f = Coefficient::of([](double t, double s, std::span<const double> y) { return t * std::exp(-s) * std::sin(y[0]); },
                        [](double, double s, std::span<const double> y) { return std::exp(-s) * std::sin(y[0]); });
  c.g = [](double t, std::span<const double> y) { return (1.0 + t) * std::cos(y[0]); };
  c.g_t = [](double, std::span<const double> y) { return std::cos(y[0]); };
  const auto grid = build_grid(17, 1, 64, 1.0, kTwoPi);
  const auto linear = solve_linear(c, grid);

  TriField local(grid);
  for (int it = 0; it < grid.n_time(); ++it) {
    const double t = grid.tau(it);
    SliceProvider ops = [&](int is) {
      LocalOperatorSlice op(grid);
      for (std::size_t k = 0; k < grid.points(); ++k) {
        op.diffusion[k] = 1.0;
        op.drift[k] = 0.3;
        op.reaction[k] = -0.2;
        op.source[k] = t * std::exp(-grid.tau(is)) * std::sin(grid.coordinate(static_cast<int>(k)));
      }
      return op;
    };
    std::vector<double> g0(grid.points());
    for (std::size_t k = 0; k < grid.points(); ++k) g0[k] = (1.0 + t) * std::cos(grid.coordinate(static_cast<int>(k)));
    const auto rows = solve_parameterized_local(grid, ops, g0, it);
    for (int j = 0; j <= it; ++j) std::copy(rows.row(j).begin(), rows.row(j).end(), local.slice(it, j).begin());
  }

  const auto model = constant_model(0.3, std::sqrt(2.0));
  const auto pb = simulate_forward(model, {2.0, 0.0}, 1.0, 2000, 32, 21);
  const auto a = verify_feynman_kac({as_nonlinear(c), linear.u}, model, pb);
  const auto b = verify_feynman_kac({as_nonlinear(c), local}, model, pb);
  for (std::size_t i = 0; i < a.per_t.size(); ++i) {
    CHECK(a.per_t[i].mean == doctest::Approx(b.per_t[i].mean).epsilon(1e-6).scale(1e-9));
    CHECK(a.per_t[i].standard_error == doctest::Approx(b.per_t[i].standard_error).epsilon(1e-6));
  }
  CHECK(a.max_ratio_y <= 3.0);
}

TEST_CASE("classical special cases of the flow") {
  // Backward u_s + 1/2 sigma^2 u_yy + b u_y + h = 0 with sigma, b and h of
  // the four reduced forms; the forward model uses the same sigma and b.
  struct Case {
    const char* name;
    std::function<double(const FArgs&)> sigma, drift, h;
  };
  const double z_scale = 0.7;
  std::vector<Case> cases = {
      {"parameterized semilinear",
       [](const FArgs&) { return 0.7; }, [](const FArgs&) { return 0.2; },
       [z_scale](const FArgs& x) { return -0.5 * x.u + 0.3 * std::cos(x.t) * z_scale * x.p[0]; }},
      {"diagonal value in the generator",
       [](const FArgs&) { return 0.7; }, [](const FArgs&) { return 0.2; },
       [z_scale](const FArgs& x) { return 0.3 * std::sin(x.l) + 0.2 * x.t * z_scale * x.p[0]; }},
      {"local and diagonal values",
       [](const FArgs&) { return 0.7; }, [](const FArgs&) { return 0.2; },
       [z_scale](const FArgs& x) { return -0.4 * x.u + 0.3 * x.t * x.l + 0.1 * z_scale * x.p[0]; }},
      {"diagonal value in the dynamics",
       [](const FArgs& x) { return 0.6 + 0.1 * std::sin(x.l); }, [](const FArgs& x) { return 0.2 * std::cos(x.l); },
       [](const FArgs& x) { return -0.3 * x.u + 0.2 * x.l; }},
  };
  const double T = 1.0;
  const auto grid = build_grid(17, 1, 64, T, kTwoPi);
  for (const auto& cs : cases) {
    const std::string name = cs.name;
    CAPTURE(name);
    NonlinearProblem back;
    back.F = [cs](const FArgs& x) {
      const double s = cs.sigma(x);
      return -0.5 * s * s * x.q[0] - cs.drift(x) * x.p[0] - cs.h(x);
    };
    back.g = [](double t, std::span<const double> y) { return (1.0 + 0.5 * t) * std::cos(y[0]); };
    const NonlinearProblem fwd = time_reverse(back, T);
    const auto sol = solve_nonlinear(fwd, grid);

    // Diagonal value v(s, y) for the dynamics: linear in s, cubic in y.
    const DiagField diag = restrict_diagonal(sol.u);
    auto v_at = [&grid, &diag, T](double s, double y) {
      const int n = grid.n_time();
      const double pos = (T - s) / grid.dtau();
      const int j = std::clamp(static_cast<int>(std::floor(pos)), 0, n - 2);
      const double w = pos - j;
      const double x = y / grid.dy();
      const double fl = std::floor(x);
      const double r = x - fl;
      const int i = static_cast<int>(fl);
      const double wts[4] = {-r * (r - 1) * (r - 2) / 6, (r + 1) * (r - 1) * (r - 2) / 2,
                             -(r + 1) * r * (r - 2) / 2, (r + 1) * r * (r - 1) / 6};
      double a = 0.0, b = 0.0;
      for (int q = 0; q < 4; ++q) {
        a += wts[q] * diag.at(j, grid.flat(i - 1 + q));
        b += wts[q] * diag.at(j + 1, grid.flat(i - 1 + q));
      }
      return (1.0 - w) * a + w * b;
    };
    FbsdeModel model;
    model.drift = [cs, v_at](double s, const Point& y) {
      FArgs x;
      x.s = s;
      x.l = v_at(s, y[0]);
      return Point{cs.drift(x), 0.0};
    };
    model.volatility = [cs, v_at](double s, const Point& y) {
      FArgs x;
      x.s = s;
      x.l = v_at(s, y[0]);
      return std::array<double, 4>{cs.sigma(x), 0.0, 0.0, 0.0};
    };
    const auto pb = simulate_forward(model, {0.5, 0.0}, T, 4000, 64, 17);
    const auto rep = verify_feynman_kac({fwd, sol.u}, model, pb);
    MESSAGE(name << ": Y " << rep.max_ratio_y << ", Z " << rep.max_ratio_z);
    CHECK(rep.max_ratio_y <= 3.0);
    CHECK(rep.max_ratio_z <= 3.0);
  }
}
