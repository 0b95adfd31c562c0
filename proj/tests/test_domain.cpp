#include <cmath>
#include <numbers>

#include "doctest.h"
#include "nonlocal/domain.hpp"
#include "nonlocal/errors.hpp"

using namespace nonlocal;

namespace {

template <class Fn>
TriField sample(const TriangleGrid& grid, Fn fn) {
  TriField f(grid);
  for (int i = 0; i < grid.n_time(); ++i) {
    for (int j = 0; j <= i; ++j) {
      auto row = f.slice(i, j);
      for (std::size_t k = 0; k < grid.points(); ++k) {
        row[k] = fn(grid.tau(i), grid.tau(j), grid.position(k)[0]);
      }
    }
  }
  return f;
}

}  // namespace

TEST_CASE("build_grid spacing") {
  const auto g = build_grid(2, 1, 4, 1.0, 1.0);
  CHECK(g.dtau() == 1.0);
  CHECK(g.dy() == 0.25);
  const auto g2 = build_grid(11, 1, 8, 1.0, 6.2831853);
  CHECK(g2.dtau() == doctest::Approx(0.1).epsilon(1e-14));
  CHECK(g2.dy() == doctest::Approx(0.7853981625).epsilon(1e-9));
  CHECK(build_grid(5, 2, 6, 1.0, 1.0).points() == 36);
}

TEST_CASE("build_grid rejects out-of-range arguments") {
  CHECK_THROWS_AS(build_grid(1, 1, 4, 1.0, 1.0), ConfigError);
  CHECK_THROWS_AS(build_grid(4, 3, 4, 1.0, 1.0), ConfigError);
  CHECK_THROWS_AS(build_grid(4, 1, 3, 1.0, 1.0), ConfigError);
  CHECK_THROWS_AS(build_grid(4, 1, 4, 0.0, 1.0), ConfigError);
  CHECK_THROWS_AS(build_grid(4, 1, 4, 1.0, -1.0), ConfigError);
}

TEST_CASE("TriField rejects reads above the diagonal") {
  const auto g = build_grid(4, 1, 4, 1.0, 1.0);
  TriField f(g);
  CHECK_NOTHROW((void)f.at(3, 3, 0));
  CHECK_THROWS_AS((void)f.at(1, 2, 0), IndexError);
  CHECK_THROWS_AS((void)f.slice(4, 0), IndexError);
  CHECK_THROWS_AS((void)f.at(0, 0, 4), IndexError);
}

TEST_CASE("TriField t-slices are contiguous rows") {
  const auto g = build_grid(5, 1, 4, 1.0, 1.0);
  const auto f = sample(g, [](double t, double s, double y) { return 100 * t + 10 * s + y; });
  const auto slice = f.t_slice(3);
  REQUIRE(slice.size() == 4 * 4);
  CHECK(slice[2 * 4 + 1] == f.at(3, 2, 1));
}

TEST_CASE("restrict_diagonal substitutes t = s") {
  const auto g = build_grid(6, 1, 5, 1.0, 1.0);
  const auto d1 = restrict_diagonal(sample(g, [](double t, double s, double) { return t + s; }));
  const auto d2 = restrict_diagonal(sample(g, [](double t, double, double y) { return t * y; }));
  const auto d3 = restrict_diagonal(sample(g, [](double, double, double) { return 7.0; }));
  for (int j = 0; j < g.n_time(); ++j) {
    for (std::size_t k = 0; k < g.points(); ++k) {
      CHECK(d1.at(j, k) == doctest::Approx(2 * g.tau(j)));
      CHECK(d2.at(j, k) == doctest::Approx(g.tau(j) * g.position(k)[0]));
      CHECK(d3.at(j, k) == 7.0);
    }
  }
}

TEST_CASE("restrict_diagonal of a t-independent field returns the s-slice") {
  const auto g = build_grid(7, 1, 8, 1.0, 2.0);
  const auto f = sample(g, [](double, double s, double y) { return std::sin(3 * s) + y * y; });
  const auto d = restrict_diagonal(f);
  for (int j = 0; j < g.n_time(); ++j) {
    for (std::size_t k = 0; k < g.points(); ++k) CHECK(d.at(j, k) == f.at(g.n_time() - 1, j, k));
  }
}

TEST_CASE("diag_derivatives are second-order central differences") {
  const double two_pi = 2 * std::numbers::pi;
  const auto g = build_grid(3, 1, 32, 1.0, two_pi);
  const auto ds = diag_derivatives(restrict_diagonal(sample(g, [](double, double, double y) { return std::sin(y); })));
  const auto dc = diag_derivatives(restrict_diagonal(sample(g, [](double, double, double y) { return std::cos(y); })));
  const auto dk = diag_derivatives(restrict_diagonal(sample(g, [](double, double, double) { return 4.0; })));
  const double h2 = g.dy() * g.dy();
  for (int j = 0; j < g.n_time(); ++j) {
    for (std::size_t k = 0; k < g.points(); ++k) {
      const double y = g.position(k)[0];
      CHECK(std::abs(ds.grad[0].at(j, k) - std::cos(y)) <= h2);
      CHECK(std::abs(dc.hess[0].at(j, k) + std::cos(y)) <= h2);
      CHECK(dk.grad[0].at(j, k) == 0.0);
      CHECK(dk.hess[0].at(j, k) == 0.0);
    }
  }
}

TEST_CASE("diag_derivatives in two dimensions") {
  const double two_pi = 2 * std::numbers::pi;
  const auto g = build_grid(2, 2, 24, 1.0, two_pi);
  DiagField phi(g);
  for (int j = 0; j < 2; ++j) {
    for (std::size_t k = 0; k < g.points(); ++k) {
      const auto y = g.position(k);
      phi.at(j, k) = std::sin(y[0]) * std::cos(y[1]);
    }
  }
  const auto d = diag_derivatives(phi);
  REQUIRE(d.grad.size() == 2);
  REQUIRE(d.hess.size() == 3);
  const double h2 = g.dy() * g.dy();
  for (std::size_t k = 0; k < g.points(); ++k) {
    const auto y = g.position(k);
    CHECK(std::abs(d.grad[0].at(1, k) - std::cos(y[0]) * std::cos(y[1])) <= h2);
    CHECK(std::abs(d.grad[1].at(1, k) + std::sin(y[0]) * std::sin(y[1])) <= h2);
    CHECK(std::abs(d.hess[1].at(1, k) + std::cos(y[0]) * std::sin(y[1])) <= 2 * h2);
    CHECK(std::abs(d.hess[2].at(1, k) + std::sin(y[0]) * std::cos(y[1])) <= h2);
  }
}

TEST_CASE("integrate_t_segment examples") {
  const auto g = build_grid(5, 1, 4, 1.0, 1.0);
  const auto one = sample(g, [](double, double, double) { return 1.0; });
  CHECK(integrate_t_segment(one, 2, 1, 0) == doctest::Approx(0.25));
  const auto theta = sample(g, [](double t, double, double) { return t; });
  CHECK(integrate_t_segment(theta, 4, 0, 2) == 0.5);
  const TriField zero(g);
  CHECK(integrate_t_segment(zero, 4, 1, 3) == 0.0);
  CHECK(integrate_t_segment(one, 3, 3, 1) == 0.0);
  CHECK_THROWS_AS((void)integrate_t_segment(one, 1, 2, 0), IndexError);
}

TEST_CASE("integrate_t_segment is additive over an intermediate node") {
  const auto g = build_grid(9, 1, 4, 1.0, 1.0);
  const auto v = sample(g, [](double t, double s, double y) { return std::exp(t - s) * (1 + y); });
  for (std::size_t k = 0; k < g.points(); ++k) {
    const int is = 1;
    const int im = 4;
    const int it = 8;
    double tail = 0.5 * (v.at(im, is, k) + v.at(it, is, k));
    for (int m = im + 1; m < it; ++m) tail += v.at(m, is, k);
    tail *= g.dtau();
    const double whole = integrate_t_segment(v, it, is, k);
    const double split = integrate_t_segment(v, im, is, k) + tail;
    CHECK(std::abs(whole - split) <= 4 * std::numeric_limits<double>::epsilon() * std::abs(whole));
  }
}

TEST_CASE("integrate_t_segment converges at second order") {
  // oracle: int_s^t e^{theta - s} d theta = e^{t - s} - 1
  double previous = 0.0;
  for (int level = 0; level < 4; ++level) {
    const int n = 8 * (1 << level) + 1;
    const auto g = build_grid(n, 1, 4, 1.0, 1.0);
    const auto v = sample(g, [](double t, double s, double) { return std::exp(t - s); });
    const double err = std::abs(integrate_t_segment(v, n - 1, 0, 0) - (std::exp(1.0) - 1.0));
    if (level > 0) CHECK(previous / err == doctest::Approx(4.0).epsilon(0.02));
    previous = err;
  }
}
