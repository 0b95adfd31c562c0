#pragma once

#include <cstdint>
#include <vector>

#include "nonlocal/expr.hpp"
#include "nonlocal/nonlinear.hpp"

namespace nonlocal {

/// Linear coefficients as expressions in (t, s, y).  Matrices are packed
/// symmetric; an empty vector means zero.  g is an expression in (t, y).
struct LinearExprs {
  int dim = 1;
  std::vector<ExprFn> a, abar, b, bbar;
  ExprFn c, cbar, f;
  ExprFn g;
};

/// The right-hand side a:q + b.p + c u + abar:n + bbar.m + cbar l + f as
/// an expression in the F variables.
[[nodiscard]] ExprFn linear_rhs(const LinearExprs& coeffs);

/// f = d_s u* - F(t, s, y, u*, u*_y, u*_yy, u*(s,s), u*_y(s,s), u*_yy(s,s)),
/// by symbolic differentiation; diagonal terms substitute t := s.  With f
/// added to F, u* is an exact solution with initial row u*(t, 0, y).
/// ManufactureError when u* depends on anything but (t, s, y).
[[nodiscard]] ExprFn manufacture_source(const ExprFn& u_star, const ExprFn& F, int dim);
/// Linear variant; the source expression in `coeffs` is ignored.
[[nodiscard]] ExprFn manufacture_source(const ExprFn& u_star, const LinearExprs& coeffs);

/// u*(t, 0, y).
[[nodiscard]] ExprFn initial_row(const ExprFn& u_star);

/// Max deviation between `f` and a finite-difference evaluation of
/// d_s u* - F(u*) at `samples` random points of the triangle.
/// ManufactureError when either side is not finite.
[[nodiscard]] double source_spot_check(const ExprFn& u_star, const ExprFn& F, const ExprFn& f,
                                       int dim, double horizon, double period, int samples,
                                       std::uint64_t seed);

[[nodiscard]] LinearCoefficients to_linear_coefficients(const LinearExprs& coeffs);

/// NonlinearProblem with exact symbolic first derivatives of F.
[[nodiscard]] NonlinearProblem to_nonlinear_problem(const ExprFn& F, const ExprFn& g, int dim);

[[nodiscard]] VarValues values_of(const FArgs& args);

}  // namespace nonlocal
