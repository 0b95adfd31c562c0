#include "nonlocal/domain.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nonlocal/errors.hpp"

namespace nonlocal {

TriangleGrid build_grid(int n_time, int dim, int n_space, double horizon, double period) {
  if (n_time < 2) throw ConfigError("grid: n_time must be at least 2, got " + std::to_string(n_time));
  if (dim != 1 && dim != 2) throw ConfigError("grid: d must be 1 or 2, got " + std::to_string(dim));
  if (n_space < 4) throw ConfigError("grid: n_space must be at least 4, got " + std::to_string(n_space));
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw ConfigError("grid: horizon T must be positive");
  if (!(period > 0.0) || !std::isfinite(period)) throw ConfigError("grid: period L must be positive");

  TriangleGrid g;
  g.n_time_ = n_time;
  g.dim_ = dim;
  g.n_space_ = n_space;
  g.horizon_ = horizon;
  g.period_ = period;
  g.dtau_ = horizon / (n_time - 1);
  g.dy_ = period / n_space;
  g.points_ = dim == 1 ? static_cast<std::size_t>(n_space)
                       : static_cast<std::size_t>(n_space) * static_cast<std::size_t>(n_space);
  return g;
}

// ---------------------------------------------------------------- TriField

TriField::TriField(const TriangleGrid& grid, double fill)
    : grid_(grid), values_(grid.triangle_pairs() * grid.points(), fill) {}

std::size_t TriField::offset(int it, int is) const {
  if (it < 0 || it >= grid_.n_time() || is < 0 || is > it) {
    throw IndexError("TriField: invalid index pair (i_t=" + std::to_string(it) +
                     ", i_s=" + std::to_string(is) + ")");
  }
  const auto i = static_cast<std::size_t>(it);
  return (i * (i + 1) / 2 + static_cast<std::size_t>(is)) * grid_.points();
}

std::span<double> TriField::slice(int it, int is) {
  return std::span<double>(values_).subspan(offset(it, is), grid_.points());
}

std::span<const double> TriField::slice(int it, int is) const {
  return std::span<const double>(values_).subspan(offset(it, is), grid_.points());
}

std::span<double> TriField::t_slice(int it) {
  return std::span<double>(values_).subspan(offset(it, 0),
                                            static_cast<std::size_t>(it + 1) * grid_.points());
}

std::span<const double> TriField::t_slice(int it) const {
  return std::span<const double>(values_).subspan(
      offset(it, 0), static_cast<std::size_t>(it + 1) * grid_.points());
}

double& TriField::at(int it, int is, std::size_t iy) {
  if (iy >= grid_.points()) throw IndexError("TriField: spatial index out of range");
  return values_[offset(it, is) + iy];
}

double TriField::at(int it, int is, std::size_t iy) const {
  if (iy >= grid_.points()) throw IndexError("TriField: spatial index out of range");
  return values_[offset(it, is) + iy];
}

bool TriField::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double x) { return std::isfinite(x); });
}

TriField& TriField::operator+=(const TriField& other) {
  if (!(grid_ == other.grid_)) throw ArgumentError("TriField: grid mismatch");
  std::transform(values_.begin(), values_.end(), other.values_.begin(), values_.begin(),
                 std::plus<>());
  return *this;
}

TriField& TriField::operator-=(const TriField& other) {
  if (!(grid_ == other.grid_)) throw ArgumentError("TriField: grid mismatch");
  std::transform(values_.begin(), values_.end(), other.values_.begin(), values_.begin(),
                 std::minus<>());
  return *this;
}

TriField& TriField::operator*=(double factor) noexcept {
  for (double& x : values_) x *= factor;
  return *this;
}

TriField operator-(TriField lhs, const TriField& rhs) { return lhs -= rhs; }
TriField operator+(TriField lhs, const TriField& rhs) { return lhs += rhs; }
TriField operator*(double factor, TriField field) { return field *= factor; }

// --------------------------------------------------------------- DiagField

DiagField::DiagField(const TriangleGrid& grid, double fill)
    : grid_(grid), values_(static_cast<std::size_t>(grid.n_time()) * grid.points(), fill) {}

std::span<double> DiagField::row(int is) {
  if (is < 0 || is >= grid_.n_time()) throw IndexError("DiagField: s index out of range");
  return std::span<double>(values_).subspan(static_cast<std::size_t>(is) * grid_.points(),
                                            grid_.points());
}

std::span<const double> DiagField::row(int is) const {
  if (is < 0 || is >= grid_.n_time()) throw IndexError("DiagField: s index out of range");
  return std::span<const double>(values_).subspan(static_cast<std::size_t>(is) * grid_.points(),
                                                  grid_.points());
}

// ------------------------------------------------------ spatial differences

void gradient(const TriangleGrid& grid, std::span<const double> field, int axis,
              std::span<double> out) {
  const int n = grid.n_space();
  const double scale = 1.0 / (2.0 * grid.dy());
  if (grid.dim() == 1) {
    for (int k = 0; k < n; ++k) {
      out[k] = (field[grid.wrap(k + 1)] - field[grid.wrap(k - 1)]) * scale;
    }
    return;
  }
  for (int k1 = 0; k1 < n; ++k1) {
    for (int k0 = 0; k0 < n; ++k0) {
      const double plus = axis == 0 ? field[grid.flat(k0 + 1, k1)] : field[grid.flat(k0, k1 + 1)];
      const double minus = axis == 0 ? field[grid.flat(k0 - 1, k1)] : field[grid.flat(k0, k1 - 1)];
      out[grid.flat(k0, k1)] = (plus - minus) * scale;
    }
  }
}

void hessian(const TriangleGrid& grid, std::span<const double> field, int a, int b,
             std::span<double> out) {
  const int n = grid.n_space();
  const double h2 = grid.dy() * grid.dy();
  if (grid.dim() == 1) {
    for (int k = 0; k < n; ++k) {
      out[k] = (field[grid.wrap(k + 1)] - 2.0 * field[k] + field[grid.wrap(k - 1)]) / h2;
    }
    return;
  }
  for (int k1 = 0; k1 < n; ++k1) {
    for (int k0 = 0; k0 < n; ++k0) {
      double value = 0.0;
      if (a == b) {
        const int e0 = a == 0 ? 1 : 0;
        const int e1 = a == 0 ? 0 : 1;
        value = (field[grid.flat(k0 + e0, k1 + e1)] - 2.0 * field[grid.flat(k0, k1)] +
                 field[grid.flat(k0 - e0, k1 - e1)]) /
                h2;
      } else {
        value = (field[grid.flat(k0 + 1, k1 + 1)] - field[grid.flat(k0 + 1, k1 - 1)] -
                 field[grid.flat(k0 - 1, k1 + 1)] + field[grid.flat(k0 - 1, k1 - 1)]) /
                (4.0 * h2);
      }
      out[grid.flat(k0, k1)] = value;
    }
  }
}

// ------------------------------------------------------------- diagonal ops

DiagField restrict_diagonal(const TriField& u) {
  DiagField diag(u.grid());
  for (int i = 0; i < u.grid().n_time(); ++i) {
    const auto src = u.slice(i, i);
    std::copy(src.begin(), src.end(), diag.row(i).begin());
  }
  return diag;
}

DiagDerivatives diag_derivatives(const DiagField& phi) {
  const auto& grid = phi.grid();
  DiagDerivatives out;
  for (int a = 0; a < grid.dim(); ++a) out.grad.emplace_back(grid);
  for (int p = 0; p < grid.sym_size(); ++p) out.hess.emplace_back(grid);
  for (int j = 0; j < grid.n_time(); ++j) {
    for (int a = 0; a < grid.dim(); ++a) {
      gradient(grid, phi.row(j), a, out.grad[a].row(j));
      for (int b = a; b < grid.dim(); ++b) {
        hessian(grid, phi.row(j), a, b, out.hess[sym_index(a, b)].row(j));
      }
    }
  }
  return out;
}

double integrate_t_segment(const TriField& v, int it, int is, std::size_t iy) {
  if (is > it) {
    throw IndexError("integrate_t_segment: i_s=" + std::to_string(is) + " exceeds i_t=" +
                     std::to_string(it));
  }
  if (is == it) return 0.0;
  double sum = 0.5 * (v.at(is, is, iy) + v.at(it, is, iy));
  for (int m = is + 1; m < it; ++m) sum += v.at(m, is, iy);
  return sum * v.grid().dtau();
}

}  // namespace nonlocal
