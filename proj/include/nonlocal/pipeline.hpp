#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "nonlocal/config.hpp"
#include "nonlocal/fbsde.hpp"
#include "nonlocal/hjb.hpp"
#include "nonlocal/manufacture.hpp"

namespace nonlocal {

struct RunOptions {
  int refine = 1;       ///< grid levels; each halves dtau and dy
  bool timing = false;  ///< include wall-clock times in JSON reports
};

/// Grid of refinement level `level`: (n_time - 1) 2^level + 1 time nodes,
/// n_space 2^level lattice points per axis.
[[nodiscard]] TriangleGrid grid_of(const RunConfig& cfg, int level = 0);
[[nodiscard]] SolverOptions solver_options(const RunConfig& cfg);

/// Linear coefficients; with problem.exact, f and g are manufactured.
[[nodiscard]] LinearExprs linear_exprs(const RunConfig& cfg);
/// F of the nonlinear payload (or the linear one rewritten as F), plus the
/// manufactured source when problem.exact is set.
[[nodiscard]] ExprFn nonlinear_rhs(const RunConfig& cfg);
[[nodiscard]] ExprFn initial_expr(const RunConfig& cfg);
[[nodiscard]] NonlinearProblem nonlinear_problem(const RunConfig& cfg);
[[nodiscard]] ControlProblem control_problem(const RunConfig& cfg);
[[nodiscard]] FbsdeModel fbsde_model(const RunConfig& cfg);

/// Columns t, s, y1[, y2], u, v with 17 significant digits, one row per
/// stored node in (t, s, y) order.
void write_solution_csv(std::ostream& out, const TriField& u, const TriField& v);

/// Executes the configured mode, writing artifacts into cfg.output.
/// Returns 0 on success, else the exit code of the raised error after
/// writing error.json.
[[nodiscard]] int run_solver_pipeline(const RunConfig& cfg, const RunOptions& options = {});

}  // namespace nonlocal
