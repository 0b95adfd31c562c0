#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace nonlocal {

/// Uniform discretization of the triangle {0 <= s <= t <= T} times the
/// periodic lattice [0, L)^d.  t and s share the node set tau_i = i * dtau.
class TriangleGrid {
 public:
  TriangleGrid() = default;

  [[nodiscard]] int n_time() const noexcept { return n_time_; }
  [[nodiscard]] int dim() const noexcept { return dim_; }
  [[nodiscard]] int n_space() const noexcept { return n_space_; }
  [[nodiscard]] double horizon() const noexcept { return horizon_; }
  [[nodiscard]] double period() const noexcept { return period_; }
  [[nodiscard]] double dtau() const noexcept { return dtau_; }
  [[nodiscard]] double dy() const noexcept { return dy_; }

  [[nodiscard]] double tau(int i) const noexcept { return i * dtau_; }
  [[nodiscard]] double coordinate(int k) const noexcept { return k * dy_; }

  /// Number of lattice points, n_space^d.
  [[nodiscard]] std::size_t points() const noexcept { return points_; }
  /// Number of independent entries of a symmetric d x d matrix.
  [[nodiscard]] int sym_size() const noexcept { return dim_ == 1 ? 1 : 3; }

  [[nodiscard]] int wrap(int k) const noexcept {
    const int r = k % n_space_;
    return r < 0 ? r + n_space_ : r;
  }
  [[nodiscard]] std::size_t flat(int k0, int k1 = 0) const noexcept {
    return static_cast<std::size_t>(wrap(k0)) +
           (dim_ == 2 ? static_cast<std::size_t>(wrap(k1)) * n_space_ : 0);
  }
  /// Per-axis lattice indices of a flat index.
  [[nodiscard]] std::array<int, 2> multi_index(std::size_t flat) const noexcept {
    const auto n = static_cast<std::size_t>(n_space_);
    return {static_cast<int>(flat % n), dim_ == 2 ? static_cast<int>(flat / n) : 0};
  }
  [[nodiscard]] std::array<double, 2> position(std::size_t flat) const noexcept {
    const auto k = multi_index(flat);
    return {coordinate(k[0]), dim_ == 2 ? coordinate(k[1]) : 0.0};
  }

  /// Number of stored (i, j) pairs with j <= i.
  [[nodiscard]] std::size_t triangle_pairs() const noexcept {
    const auto n = static_cast<std::size_t>(n_time_);
    return n * (n + 1) / 2;
  }

  friend bool operator==(const TriangleGrid&, const TriangleGrid&) = default;

  friend TriangleGrid build_grid(int n_time, int dim, int n_space, double horizon,
                                 double period);

 private:
  int n_time_ = 0;
  int dim_ = 0;
  int n_space_ = 0;
  double horizon_ = 0.0;
  double period_ = 0.0;
  double dtau_ = 0.0;
  double dy_ = 0.0;
  std::size_t points_ = 0;
};

/// Throws ConfigError unless n_time >= 2, dim in {1, 2}, n_space >= 4,
/// horizon > 0 and period > 0.
TriangleGrid build_grid(int n_time, int dim, int n_space, double horizon, double period);

/// Index of the packed symmetric entry (a, b); (0,0)=0, (0,1)=1, (1,1)=2.
[[nodiscard]] constexpr int sym_index(int a, int b) noexcept {
  if (a > b) std::swap(a, b);
  return a == b ? (a == 0 ? 0 : 2) : 1;
}

/// Samples u(t_i, s_j, y_k) for j <= i.  Rows of fixed i are contiguous, so
/// the slice u(t_i, ., .) on [0, t_i] is a single span.
class TriField {
 public:
  TriField() = default;
  explicit TriField(const TriangleGrid& grid, double fill = 0.0);

  [[nodiscard]] const TriangleGrid& grid() const noexcept { return grid_; }

  [[nodiscard]] std::span<double> slice(int it, int is);
  [[nodiscard]] std::span<const double> slice(int it, int is) const;
  /// Rows s_0 .. s_it of the t-slice it.
  [[nodiscard]] std::span<double> t_slice(int it);
  [[nodiscard]] std::span<const double> t_slice(int it) const;

  [[nodiscard]] double& at(int it, int is, std::size_t iy);
  [[nodiscard]] double at(int it, int is, std::size_t iy) const;

  [[nodiscard]] std::span<double> values() noexcept { return values_; }
  [[nodiscard]] std::span<const double> values() const noexcept { return values_; }

  [[nodiscard]] bool all_finite() const noexcept;

  TriField& operator+=(const TriField& other);
  TriField& operator-=(const TriField& other);
  TriField& operator*=(double factor) noexcept;

 private:
  [[nodiscard]] std::size_t offset(int it, int is) const;

  TriangleGrid grid_;
  std::vector<double> values_;
};

[[nodiscard]] TriField operator-(TriField lhs, const TriField& rhs);
[[nodiscard]] TriField operator+(TriField lhs, const TriField& rhs);
[[nodiscard]] TriField operator*(double factor, TriField field);

/// Samples phi(s_j, s_j, y_k), one lattice row per s node.
class DiagField {
 public:
  DiagField() = default;
  explicit DiagField(const TriangleGrid& grid, double fill = 0.0);

  [[nodiscard]] const TriangleGrid& grid() const noexcept { return grid_; }
  [[nodiscard]] std::span<double> row(int is);
  [[nodiscard]] std::span<const double> row(int is) const;
  [[nodiscard]] double& at(int is, std::size_t iy) { return row(is)[iy]; }
  [[nodiscard]] double at(int is, std::size_t iy) const { return row(is)[iy]; }
  [[nodiscard]] std::span<const double> values() const noexcept { return values_; }

 private:
  TriangleGrid grid_;
  std::vector<double> values_;
};

/// Rectangular field over s rows times the lattice, such as one t-slice.
struct SliceField {
  int rows = 0;
  std::size_t points = 0;
  std::vector<double> values;

  SliceField() = default;
  SliceField(int rows_, std::size_t points_, double fill = 0.0)
      : rows(rows_), points(points_), values(static_cast<std::size_t>(rows_) * points_, fill) {}

  [[nodiscard]] std::span<double> row(int j) {
    return std::span<double>(values).subspan(static_cast<std::size_t>(j) * points, points);
  }
  [[nodiscard]] std::span<const double> row(int j) const {
    return std::span<const double>(values).subspan(static_cast<std::size_t>(j) * points, points);
  }
};

/// Central first difference along `axis` with periodic wraparound.
void gradient(const TriangleGrid& grid, std::span<const double> field, int axis,
              std::span<double> out);
/// Central second difference for the axis pair (a, b); a != b uses the
/// four-point cross stencil.
void hessian(const TriangleGrid& grid, std::span<const double> field, int a, int b,
             std::span<double> out);

[[nodiscard]] DiagField restrict_diagonal(const TriField& u);

struct DiagDerivatives {
  std::vector<DiagField> grad;  ///< one per axis
  std::vector<DiagField> hess;  ///< packed symmetric, see sym_index
};

[[nodiscard]] DiagDerivatives diag_derivatives(const DiagField& phi);

/// Composite trapezoid of v(theta, s_is, y_iy) over theta in [s_is, t_it].
/// Throws IndexError when is > it.
[[nodiscard]] double integrate_t_segment(const TriField& v, int it, int is, std::size_t iy);

}  // namespace nonlocal
