#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "nonlocal/nonlinear.hpp"

namespace nonlocal {

/// Control-free forward dynamics dX = b(s, X) ds + sigma(s, X) dW; sigma is
/// d x k row-major with row stride k.
struct FbsdeModel {
  int dim = 1;
  int noise_dim = 1;
  std::function<std::array<double, 2>(double s, const std::array<double, 2>& y)> drift;
  std::function<std::array<double, 4>(double s, const std::array<double, 2>& y)> volatility;
};

/// Euler-Maruyama paths on [0, horizon].  Increments are stored as
/// (path, step, component), states as (path, node, axis); states are not
/// wrapped onto the torus.
struct PathBundle {
  int n_paths = 0;
  int n_steps = 0;
  int dim = 1;
  int noise_dim = 1;
  double horizon = 0.0;
  double dtau = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> dW;
  std::vector<double> X;
  double lipschitz_estimate = 0.0;  ///< of (b, sigma) over the visited range

  [[nodiscard]] double increment(int path, int step, int comp) const {
    return dW[(static_cast<std::size_t>(path) * n_steps + step) * noise_dim + comp];
  }
  [[nodiscard]] double state(int path, int node, int axis) const {
    return X[(static_cast<std::size_t>(path) * (n_steps + 1) + node) * dim + axis];
  }

  friend bool operator==(const PathBundle&, const PathBundle&) = default;
};

/// Deterministic in `seed`: path p draws from its own generator seeded by a
/// splitmix64 hash of (seed, p).  Non-finite states raise BlowUpError naming
/// the step.
[[nodiscard]] PathBundle simulate_forward(const FbsdeModel& model, const std::array<double, 2>& y0,
                                          double horizon, int n_paths, int n_steps,
                                          std::uint64_t seed);

struct IncrementStats {
  std::array<double, 2> mean{};
  std::array<double, 2> variance{};
  std::array<double, 2> mean_z{};      ///< |mean| / standard error
  std::array<double, 2> variance_z{};  ///< |variance - dtau| / standard error
};

[[nodiscard]] IncrementStats increment_statistics(const PathBundle& paths);

/// Solved equation in the backward orientation u_s = F(t, s, y, ...),
/// u(t, T, y) = g(t, y), given through the forward problem that was solved
/// on the triangle and its solution u~(t', s') = u(T - t', T - s').
struct FkSolution {
  NonlinearProblem forward;
  TriField u_forward;
};

/// Path samples for one reference node t (real time tau_{t_node}).  Entries
/// before the step of t are unused.  Per (path, node): Y, the generator
/// value, Z (k), Gamma (k x k, row b holds dZ_b), A (k), and the terminal
/// value g(t, X_T) per path.
struct FkSlice {
  int t_node = 0;
  double t = 0.0;
  int first_step = 0;
  std::vector<double> Y, generator, Z, Gamma, A;
  std::vector<double> terminal;
};

struct FKFields {
  int n_paths = 0;
  int n_steps = 0;
  int noise_dim = 1;
  std::vector<FkSlice> slices;

  [[nodiscard]] std::size_t at(int path, int node) const {
    return static_cast<std::size_t>(path) * (n_steps + 1) + node;
  }
};

/// Samples the Feynman-Kac fields along the paths for the given real-time
/// grid nodes (all nodes when empty).  Grid fields and their derivatives are
/// formed by central differences on the grid, then interpolated linearly in
/// s and by periodic cubic stencils in y.  n_steps must be a multiple of
/// n_time - 1 and the path horizon must equal the grid horizon.
[[nodiscard]] FKFields evaluate_fk_fields(const FkSolution& sol, const FbsdeModel& model,
                                          const PathBundle& paths, std::vector<int> t_nodes = {});

struct ResidualStats {
  int t_node = 0;
  double t = 0.0;
  double mean = 0.0;
  double standard_error = 0.0;
  double max_abs = 0.0;
  std::array<double, 2> z_mean{};
  std::array<double, 2> z_standard_error{};
  std::array<double, 2> z_max_abs{};
};

struct FkReport {
  int n_paths = 0;
  int n_steps = 0;
  std::vector<ResidualStats> per_t;
  double max_ratio_y = 0.0;  ///< max over t of |mean| / SE for the Y-equation
  double max_ratio_z = 0.0;  ///< same for the Z-equation, over components
  double max_abs_y = 0.0;
  double max_abs_z = 0.0;
};

/// Per (t, path): R = Y(t, t) - g(t, X_T) + int_t^T generator + int_t^T Z.dW
/// and R_Z = Z(t, T) - Z(t, t) - int_t^T A - int_t^T Gamma dW, trapezoid in
/// time and left-point for the stochastic integrals.
[[nodiscard]] FkReport bsde_residual_stats(const FKFields& fields, const PathBundle& paths);

/// Streams evaluate_fk_fields and bsde_residual_stats one t node at a time.
[[nodiscard]] FkReport verify_feynman_kac(const FkSolution& sol, const FbsdeModel& model,
                                          const PathBundle& paths);

}  // namespace nonlocal
