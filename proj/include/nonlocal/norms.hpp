#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "nonlocal/domain.hpp"

namespace nonlocal {

struct HolderConfig {
  double alpha = 0.5;           ///< in (0, 1); exponent alpha/2 in s, alpha in y
  std::size_t pair_budget = 0;  ///< 0 = exhaustive pair enumeration
  std::uint64_t seed = 0x5eedULL;

  /// Throws ConfigError when alpha is outside (0, 1).
  void validate() const;
};

struct NormReport {
  double sup = 0.0;
  double semi_s = 0.0;
  double semi_y = 0.0;
  double c_alpha = 0.0;   ///< sup + semi_s + semi_y
  double c_2alpha = 0.0;  ///< zero unless derivative terms were supplied
  double bracket = 0.0;
  double double_bracket = 0.0;
  bool sampled = false;  ///< true when pair_budget truncated an enumeration

  friend bool operator==(const NormReport&, const NormReport&) = default;
};

/// Read-only view of rows s_0 .. s_{rows-1} (spacing dtau) times the lattice.
struct SliceView {
  std::span<const double> values;
  int rows = 0;
  std::size_t points = 0;

  [[nodiscard]] std::span<const double> row(int j) const {
    return values.subspan(static_cast<std::size_t>(j) * points, points);
  }
};

[[nodiscard]] inline SliceView view_of(const SliceField& f) {
  return {f.values, f.rows, f.points};
}

/// Derivative slices of the (2 + alpha) norm: phi_s, phi_{y_i}, and the
/// packed second derivatives phi_{y_i y_j} (see sym_index).
struct SliceDerivatives {
  SliceView ds;
  std::vector<SliceView> dy;
  std::vector<SliceView> dyy;
};

/// Owning storage for derivative slices computed by finite differences.
struct SliceDerivativeData {
  SliceField ds;
  std::vector<SliceField> dy;
  std::vector<SliceField> dyy;

  [[nodiscard]] SliceDerivatives view() const;
};

/// phi_s by central differences in s (second-order one-sided at the ends,
/// forward difference with two rows, zero with one row); spatial
/// derivatives by periodic central differences.
[[nodiscard]] SliceDerivativeData slice_derivatives(const TriangleGrid& grid, SliceView slice);

[[nodiscard]] double sup_norm(std::span<const double> values) noexcept;

/// Hoelder norms of one slice.  Distances: s-pairs m rows apart are m*dtau
/// apart; y-pairs use the wrapped lattice offset times dy (Euclidean for d=2).
/// With derivatives, c_2alpha = sup + c_alpha(phi_s) + sum_i sup(phi_{y_i})
/// + sum_{i,j} c_alpha(phi_{y_i y_j}).
[[nodiscard]] NormReport holder_norm_alpha(const TriangleGrid& grid, SliceView slice,
                                           const HolderConfig& cfg,
                                           const SliceDerivatives* derivatives = nullptr);

/// Same as holder_norm_alpha but throws ArgumentError when the (2 + alpha)
/// variant is requested without derivative slices.
[[nodiscard]] NormReport holder_norm(const TriangleGrid& grid, SliceView slice,
                                     const HolderConfig& cfg, bool two_plus_alpha,
                                     const SliceDerivatives* derivatives);

enum class SliceOrder { alpha, two_plus_alpha };

/// Sub-domain of the triangle: t-slices it in [s_begin, t_end], each
/// restricted to s rows in [s_begin, min(it, s_end)].
struct Region {
  int s_begin = 0;
  int s_end = 0;
  int t_end = 0;

  [[nodiscard]] static Region full(const TriangleGrid& grid) {
    return {0, grid.n_time() - 1, grid.n_time() - 1};
  }
  [[nodiscard]] int last_row(int it) const noexcept { return it < s_end ? it : s_end; }
};

/// bracket = max over t-slices of the slice norm of u; double_bracket adds
/// the slice norm of v.  The slice norm is c_alpha or c_2alpha by `order`.
[[nodiscard]] NormReport tri_norms(const TriField& u, const TriField* v, const HolderConfig& cfg,
                                   SliceOrder order = SliceOrder::alpha,
                                   std::optional<Region> region = std::nullopt);

}  // namespace nonlocal
