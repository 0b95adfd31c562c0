#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "nonlocal/linear.hpp"

namespace nonlocal {

/// Argument record of F(t, s, y, u, p, q, l, m, n).  (u, p, q) are local
/// values at (t, s, y); (l, m, n) are the diagonal values at (s, s, y).
/// q and n are packed symmetric (see sym_index).
struct FArgs {
  double t = 0.0;
  double s = 0.0;
  std::array<double, 2> y{};
  double u = 0.0;
  std::array<double, 2> p{};
  std::array<double, 3> q{};
  double l = 0.0;
  std::array<double, 2> m{};
  std::array<double, 3> n{};
};

using FFn = std::function<double(const FArgs&)>;

/// Scalar argument slots of F, in a fixed order.
enum class Slot : int { u, p0, p1, q00, q01, q11, l, m0, m1, n00, n01, n11 };
inline constexpr int kSlotCount = 12;

[[nodiscard]] double& slot_ref(FArgs& args, Slot slot) noexcept;
[[nodiscard]] const char* slot_name(Slot slot) noexcept;
/// Whether the slot exists in dimension dim (p1, q01, q11, ... need d = 2).
[[nodiscard]] bool slot_active(Slot slot, int dim) noexcept;

/// u_s = F(t, s, y, u, u_y, u_yy, u(s,s), u_y(s,s), u_yy(s,s)), u(t,0,y) = g(t,y).
/// Derivative closures are optional; empty ones fall back to central
/// differences with step h_F * max(1, |x|).  Closures for q and n entries
/// return the derivative with respect to the packed entry, so an
/// off-diagonal closure returns twice the matrix coefficient.
struct NonlinearProblem {
  int dim = 1;
  FFn F;
  FFn F_u, F_l, F_t;
  std::vector<FFn> F_p, F_m;  ///< empty or size dim
  std::vector<FFn> F_q, F_n;  ///< empty or size sym_size
  InitialFn g;
  InitialFn g_t;  ///< empty: central difference with step dtau
  double h_F = 1e-5;
};

/// The linear equation as F = a:q + b.p + c u + abar:n + bbar.m + cbar l + f
/// with exact argument derivatives.  Coefficients are evaluated off-grid
/// (Node::on_grid = false), so grid-backed samplers are not supported.
[[nodiscard]] NonlinearProblem as_nonlinear(const LinearCoefficients& coeffs);

/// (t, s) -> (T - t, T - s): a backward problem u_s = F(...) with terminal
/// data g on {t <= s} becomes a forward one on {s <= t} with F~ = -F and
/// g~(t) = g(T - t), and vice versa.  An involution.
[[nodiscard]] NonlinearProblem time_reverse(const NonlinearProblem& prob, double horizon);

/// dF/d(slot) at args.
[[nodiscard]] double partial(const NonlinearProblem& prob, const FArgs& args, Slot slot);
/// Explicit dF/dt at args (other arguments frozen).
[[nodiscard]] double partial_t(const NonlinearProblem& prob, const FArgs& args);

/// Coefficients of the linearization operator frozen at the window anchor
/// (t, s_start, y, u(t,s_start,y), u_y, u_yy, u(s_start,s_start,y), ...).
/// Rows are t nodes start .. n_time - 1 stored at index i - start; the
/// coefficients are constant in s.  Matrix entries are packed with the
/// off-diagonal holding the matrix coefficient (half the packed derivative).
struct AnchorLinearization {
  TriangleGrid grid;
  int start = 0;
  std::vector<SliceField> a, abar, b, bbar;  ///< F_q, F_n, F_p, F_m
  SliceField c, cbar;                        ///< F_u, F_l
  std::vector<SliceField> a_t, abar_t, b_t, bbar_t;
  SliceField c_t, cbar_t;
  std::vector<FArgs> anchors;  ///< per (row, point), row-major
};

/// Anchors at the initial data g (first window).
[[nodiscard]] AnchorLinearization anchor_linearization(const NonlinearProblem& prob,
                                                       const TriangleGrid& grid);
/// Anchors at the running solution's rows on s = s_start.  Throws
/// ModelError naming the node when either ellipticity condition fails.
[[nodiscard]] AnchorLinearization anchor_at(const NonlinearProblem& prob, const TriangleGrid& grid,
                                            const WindowInitial& init, double floor = 0.0);

/// Initial rows (g, g_t) of the problem on the grid.
[[nodiscard]] WindowInitial nonlinear_initial_rows(const NonlinearProblem& prob,
                                                   const TriangleGrid& grid);

/// Linear system with the anchor coefficients broadcast in s; the source is
/// filled by assemble_lambda_source.
[[nodiscard]] SampledLinearSystem linearized_system(const AnchorLinearization& anchors,
                                                    const WindowInitial& init);

/// Writes phi = F(u_in) - L u_in and its t-derivative (chain rule through
/// v_in) into sys.f on the strip {start <= s <= end, s <= t}.
void assemble_lambda_source(const NonlinearProblem& prob, const AnchorLinearization& anchors,
                            const TriField& u_in, const TriField& v_in, int start, int end,
                            SampledLinearSystem& sys);

/// One application of the contraction map on the strip of window
/// [start, end]; returns (U, V) on the strip.
[[nodiscard]] std::pair<TriField, TriField> lambda_map(const NonlinearProblem& prob,
                                                       const TriField& u_in, const TriField& v_in,
                                                       int start, int end,
                                                       const WindowInitial& init,
                                                       const SolverOptions& options = {});

/// Picard iteration on the contraction map with window halving; each window
/// beyond the first is re-anchored at the running solution.
[[nodiscard]] LinearSolution solve_nonlinear(const NonlinearProblem& prob, const TriangleGrid& grid,
                                             const SolverOptions& options = {});

/// max over nodes 0 < s < t of |D_s u - F(...)| with the central difference
/// in s and the diagonal triple taken from u(s, s, .).
[[nodiscard]] double residual_nonlinear(const TriField& u, const NonlinearProblem& prob);

struct RegularityOptions {
  int samples = 2000;
  double radius = 1.0;      ///< sampling box half-width for u, p, q, l, m, n
  double pair_scale = 1e-3; ///< relative size of the paired perturbations
  double growth_factor = 4.0;
  std::uint64_t seed = 1;
};

struct RegularityReport {
  std::array<double, kSlotCount> lipschitz{};             ///< of F per slot
  std::array<double, kSlotCount> derivative_lipschitz{};  ///< of dF/d(slot), joint in all arguments
  double min_eig_a = 0.0;       ///< smallest eigenvalue of F_q over the samples
  double min_eig_a_abar = 0.0;  ///< of F_q + F_n
  bool ellipticity_violated = false;
  bool unbounded_growth = false;
  bool non_finite = false;
};

/// Monte Carlo diagnostic of the continuity, Lipschitz and ellipticity
/// conditions on F over the triangle and the sampling box.
[[nodiscard]] RegularityReport check_regularity(const NonlinearProblem& prob,
                                                const TriangleGrid& grid,
                                                const RegularityOptions& options = {});

/// max |D^3_y u| over the triangle (first axis, periodic central stencil).
[[nodiscard]] double third_difference_sup(const TriField& u);

}  // namespace nonlocal
