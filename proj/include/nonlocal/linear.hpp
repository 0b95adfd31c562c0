#pragma once

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nonlocal/domain.hpp"
#include "nonlocal/errors.hpp"
#include "nonlocal/local_solver.hpp"
#include "nonlocal/norms.hpp"

namespace nonlocal {

/// Evaluation point handed to coefficient samplers.  Grid-backed samplers
/// read the indices; analytic ones read the coordinates.  Off-grid points
/// (finite-difference probes) carry on_grid = false.
struct Node {
  double t = 0.0;
  double s = 0.0;
  std::array<double, 2> y{};
  int it = -1;
  int is = -1;
  std::size_t iy = 0;
  bool on_grid = false;
};

using NodeFn = std::function<double(const Node&)>;
using SpaceTimeFn = std::function<double(double t, double s, std::span<const double> y)>;
using InitialFn = std::function<double(double t, std::span<const double> y)>;

/// A coefficient sampler with an optional analytic t-derivative.  An empty
/// value means identically zero; an empty dt falls back to a central
/// difference in t with step h_t.
struct Coefficient {
  NodeFn value;
  NodeFn dt;

  [[nodiscard]] bool present() const noexcept { return static_cast<bool>(value); }

  [[nodiscard]] static Coefficient constant(double c);
  [[nodiscard]] static Coefficient of(SpaceTimeFn fn, SpaceTimeFn dt_fn = {});
};

/// Samplers for u_s = a:u_yy + b.u_y + c u + abar:u_yy(s,s) + bbar.u_y(s,s)
/// + cbar u(s,s) + f with u(t, 0, y) = g(t, y).  Matrices are packed
/// symmetric (see sym_index); a:q reads a_00 q_00 + 2 a_01 q_01 + a_11 q_11.
struct LinearCoefficients {
  int dim = 1;
  std::vector<Coefficient> a, abar;
  std::vector<Coefficient> b, bbar;
  Coefficient c, cbar, f;
  InitialFn g;
  InitialFn g_t;      ///< empty: central difference with step h_t
  double h_t = 0.0;  ///< 0: the grid spacing dtau

  explicit LinearCoefficients(int dim_ = 1);
};

/// Coefficients sampled on the triangle; absent optionals are zero.
struct SampledField {
  std::optional<TriField> value;
  std::optional<TriField> dt;
};

struct SampledLinearSystem {
  TriangleGrid grid;
  std::vector<SampledField> a, abar, b, bbar;
  SampledField c, cbar, f;
  SliceField g;    ///< row i: g(t_i, .)
  SliceField g_t;  ///< row i: g_t(t_i, .)
};

[[nodiscard]] SampledLinearSystem sample_coefficients(const LinearCoefficients& coeffs,
                                                      const TriangleGrid& grid);

/// Throws ModelError naming the node where a, or a + abar, fails uniform
/// ellipticity with witness `floor`.
void check_linear_ellipticity(const SampledLinearSystem& sys, double floor);

struct SolverOptions {
  double tolerance = 1e-8;
  int max_iter = 200;
  double contraction_cap = 0.9;
  int cap_patience = 3;     ///< consecutive factors >= cap that trigger halving
  int initial_window = 0;   ///< in time steps; 0 = whole horizon
  HolderConfig holder{};
  StepOptions step{};
};

struct WindowReport {
  int start = 0;
  int end = 0;
  int iterations = 0;
  std::vector<double> increments;
  std::vector<double> contraction_factors;
  double final_increment = 0.0;
  bool accepted = false;
};

struct SolverReport {
  int iterations = 0;
  std::vector<double> contraction_factors;
  std::vector<std::pair<int, int>> subintervals;
  std::vector<WindowReport> windows;  ///< accepted and rejected attempts, in order
  double final_increment = 0.0;
  NormReport norm_snapshot;
  double wall_time = 0.0;
  bool converged = false;
};

/// Non-convergence on the minimal window; carries the attempt history.
class SolverNonConvergence : public NonConvergenceError {
 public:
  SolverNonConvergence(const std::string& what, SolverReport report)
      : NonConvergenceError(what), report_(std::move(report)) {}
  [[nodiscard]] const SolverReport& report() const noexcept { return report_; }

 private:
  SolverReport report_;
};

struct LinearSolution {
  TriField u;
  TriField v;
  SolverReport report;
};

/// Initial rows of a window: u(t_i, s_start, .) and v(t_i, s_start, .) for
/// i = start .. n_time - 1, stored as rows i - start.
struct WindowInitial {
  int start = 0;
  SliceField u0;
  SliceField v0;
};

[[nodiscard]] WindowInitial initial_rows(const SampledLinearSystem& sys);

/// One application of the contraction map on the window triangle
/// {start <= s <= t <= end}.  Writes only window nodes of u_out and v_out.
void gamma_map_into(const TriField& v_in, const SampledLinearSystem& sys, int start, int end,
                    const WindowInitial& init, const StepOptions& step, TriField& u_out,
                    TriField& v_out);

[[nodiscard]] std::pair<TriField, TriField> gamma_map(const TriField& v_in,
                                                      const SampledLinearSystem& sys,
                                                      std::pair<int, int> window,
                                                      const WindowInitial& init,
                                                      const StepOptions& step = {});

/// With the diagonal known for s <= end, solves the local problems on the
/// rectangle {start <= s <= end, t > end} in the original (u) and
/// differentiated (v) form.
void extend_rectangle(const SampledLinearSystem& sys, int start, int end,
                      const WindowInitial& init, const StepOptions& step, TriField& u,
                      TriField& v);

/// out = a - b on the region nodes; other nodes of out are untouched.
void region_difference(const TriField& a, const TriField& b, const Region& reg, TriField& out);
void copy_region(const TriField& src, const Region& reg, TriField& dst);

/// Picard iteration on one window followed by the rectangle extension.
/// `seed` (when given) replaces the constant-in-s Picard seed.
[[nodiscard]] WindowReport solve_linear_window(const SampledLinearSystem& sys, int start, int end,
                                               const WindowInitial& init,
                                               const SolverOptions& options, TriField& u,
                                               TriField& v, const TriField* seed = nullptr);

[[nodiscard]] LinearSolution solve_linear(const SampledLinearSystem& sys,
                                          const SolverOptions& options = {});
[[nodiscard]] LinearSolution solve_linear(const LinearCoefficients& coeffs,
                                          const TriangleGrid& grid,
                                          const SolverOptions& options = {});

/// max |v - D_t u| with the forward difference in t (backward on the last
/// row); first order in dtau.
[[nodiscard]] double check_equivalence(const LinearSolution& sol);

/// The data fields of the Schauder and stability ratios.
[[nodiscard]] TriField broadcast_initial(const TriangleGrid& grid, const SliceField& rows);

[[nodiscard]] double schauder_ratio(const LinearSolution& sol, const SampledLinearSystem& sys,
                                    const HolderConfig& cfg, double tolerance = 1e-8);

struct StabilityProbe {
  double lhs = 0.0;
  double rhs = 0.0;
};

[[nodiscard]] StabilityProbe stability_probe(const LinearCoefficients& coeffs,
                                             const LinearCoefficients& perturbed,
                                             const TriangleGrid& grid,
                                             const SolverOptions& options = {});

}  // namespace nonlocal
