#pragma once

#include <array>
#include <functional>
#include <vector>

#include "nonlocal/nonlinear.hpp"

namespace nonlocal {

using Control = std::array<double, 2>;
using Point = std::array<double, 2>;

/// Stochastic control specification: state dX = b dtau + sigma dW on the
/// torus, cost int_s^T h(s, tau, X, a) dtau + g(s, X_T), minimized.
/// sigma is d x k, row-major with row stride k.
struct ControlProblem {
  int dim = 1;
  int noise_dim = 1;
  int control_dim = 1;
  double horizon = 1.0;
  std::function<Point(double s, const Point& y, const Control& a)> drift;
  std::function<std::array<double, 4>(double s, const Point& y, const Control& a)> volatility;
  std::function<double(double t, double tau, const Point& y, const Control& a)> running;
  std::function<double(double t, const Point& y)> terminal;
  /// Box control set; required unless closed_form is given.
  std::vector<double> lower, upper;
  int resolution = 64;  ///< grid points per control axis
  /// Optional closed-form minimizer phi(t, s, y, p, q).
  std::function<Control(double t, double s, const Point& y, const Point& p,
                        const std::array<double, 3>& q)>
      closed_form;
};

/// Packed covariance sigma sigma^T (00, 01, 11).
[[nodiscard]] std::array<double, 3> covariance(const ControlProblem& cp, double s, const Point& y,
                                               const Control& a);

/// 1/2 tr(q sigma sigma^T) + p.b + h.  ArgumentError when a is outside a box U.
[[nodiscard]] double hamiltonian(const ControlProblem& cp, double t, double s, const Point& y,
                                 const Control& a, const Point& p, const std::array<double, 3>& q);

struct ArgminResult {
  Control control{};
  double value = 0.0;
  bool on_boundary = false;  ///< grid optimum on the box boundary
};

/// Closed form when supplied, else a lexicographic grid search refined once
/// per axis by a three-point quadratic fit.  ModelError when H is not
/// finite anywhere on the grid.
[[nodiscard]] ArgminResult argmin_control(const ControlProblem& cp, double t, double s,
                                          const Point& y, const Point& p,
                                          const std::array<double, 3>& q);

/// The equilibrium HJB equation in forward (reversed) time:
/// F~(t', s', y, ., p, q, ., m, n) = H(T - t', T - s', y, phi(T - s', T - s', y, m, n), p, q),
/// with initial row g(T - t', y).  Minimizers are memoized by (s, y, m, n).
[[nodiscard]] NonlinearProblem equilibrium_problem(const ControlProblem& cp);

/// Solution in natural orientation: node m is time m * dtau; u(t_a, s_b)
/// is defined for a <= b.
struct EquilibriumPolicy {
  TriangleGrid grid;
  TriField u_forward;  ///< u~(t', s') = u(T - t', T - s')
  TriField v_forward;  ///< d u~ / d t'
  std::vector<DiagField> control;  ///< e(s_m, y) per control component
  DiagField value;                 ///< v(s_m, y) = u(s_m, s_m, y)
  SolverReport report;
  int boundary_hits = 0;

  [[nodiscard]] double u(int t_node, int s_node, std::size_t iy) const;
  /// du/dt in natural orientation.
  [[nodiscard]] double u_t(int t_node, int s_node, std::size_t iy) const;
};

[[nodiscard]] EquilibriumPolicy solve_equilibrium_hjb(const ControlProblem& cp,
                                                      const TriangleGrid& grid,
                                                      const SolverOptions& options = {});

/// Classical (local) HJB v_s + inf_a H(s, s, y, a, v_y, v_yy) = 0 by policy
/// iteration over local theta-scheme solves.  Meaningful when h and g do
/// not depend on the reference time.
struct ClassicalHjbSolution {
  DiagField value;
  std::vector<DiagField> control;
  int iterations = 0;
};

[[nodiscard]] ClassicalHjbSolution solve_classical_hjb(const ControlProblem& cp,
                                                       const TriangleGrid& grid,
                                                       const SolverOptions& options = {});

struct HjbResiduals {
  double res1 = 0.0;          ///< v_s + inf H - u_t(s, s, y), interior diagonal nodes
  double res1_literal = 0.0;  ///< v_s + inf H without the reference-time term
  double res2 = 0.0;          ///< u_s + H(t, s, y, e(s, y), u_y, u_yy), interior nodes
};

[[nodiscard]] HjbResiduals verify_hjb_system(const EquilibriumPolicy& policy,
                                             const ControlProblem& cp);

}  // namespace nonlocal
