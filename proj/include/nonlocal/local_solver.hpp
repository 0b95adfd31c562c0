#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "nonlocal/domain.hpp"

namespace nonlocal {

/// Coefficients of u_s = A:u_yy + B.u_y + C u + phi at one s level.
/// Storage is component-major: diffusion holds sym_size() lattice blocks in
/// packed order, drift holds dim() blocks.  For d = 2 the operator reads
/// A_00 u_00 + 2 A_01 u_01 + A_11 u_11.
struct LocalOperatorSlice {
  std::vector<double> diffusion;
  std::vector<double> drift;
  std::vector<double> reaction;
  std::vector<double> source;

  LocalOperatorSlice() = default;
  explicit LocalOperatorSlice(const TriangleGrid& grid);

  [[nodiscard]] std::span<double> diffusion_block(int packed, std::size_t points) {
    return std::span<double>(diffusion).subspan(static_cast<std::size_t>(packed) * points, points);
  }
  [[nodiscard]] std::span<const double> diffusion_block(int packed, std::size_t points) const {
    return std::span<const double>(diffusion).subspan(static_cast<std::size_t>(packed) * points,
                                                      points);
  }
  [[nodiscard]] std::span<double> drift_block(int axis, std::size_t points) {
    return std::span<double>(drift).subspan(static_cast<std::size_t>(axis) * points, points);
  }
  [[nodiscard]] std::span<const double> drift_block(int axis, std::size_t points) const {
    return std::span<const double>(drift).subspan(static_cast<std::size_t>(axis) * points,
                                                  points);
  }
};

struct StepOptions {
  double theta = 0.5;              ///< 0.5 Crank-Nicolson, 1 fully implicit
  double ellipticity_floor = 0.0;  ///< smallest admissible diffusion eigenvalue (exclusive at 0)
};

/// Throws ModelError naming the first node whose diffusion matrix has an
/// eigenvalue <= floor (or < floor when floor > 0).
void check_ellipticity(const TriangleGrid& grid, const LocalOperatorSlice& op, double floor,
                       const char* what);

/// Applies the discrete operator A:D2 + B.D1 + C to `state`.
void apply_operator(const TriangleGrid& grid, const LocalOperatorSlice& op,
                    std::span<const double> state, std::span<double> out);

/// Reusable theta-scheme stepper on the periodic lattice.  d = 1 uses a
/// cyclic tridiagonal solve; d = 2 a sparse LU factorization.
class LocalStepper {
 public:
  explicit LocalStepper(const TriangleGrid& grid, StepOptions options = {});
  ~LocalStepper();
  LocalStepper(LocalStepper&&) noexcept;
  LocalStepper& operator=(LocalStepper&&) noexcept;

  /// Advances from s_j (operator `now`) to s_j + dtau (operator `next`).
  void step(std::span<const double> state, const LocalOperatorSlice& now,
            const LocalOperatorSlice& next, double dtau, std::span<double> out);

  [[nodiscard]] const StepOptions& options() const noexcept { return options_; }

 private:
  struct Workspace;
  TriangleGrid grid_;
  StepOptions options_;
  std::unique_ptr<Workspace> work_;
};

[[nodiscard]] std::vector<double> advance_slice_step(const TriangleGrid& grid,
                                                     std::span<const double> state,
                                                     const LocalOperatorSlice& now,
                                                     const LocalOperatorSlice& next, double dtau,
                                                     double theta = 0.5);

using SliceProvider = std::function<LocalOperatorSlice(int is)>;

/// Steps from s_0 to s_up_to; row j of the result is the state at s_j.
[[nodiscard]] SliceField solve_parameterized_local(const TriangleGrid& grid,
                                                   const SliceProvider& op_by_slice,
                                                   std::span<const double> initial, int up_to,
                                                   StepOptions options = {});

/// Solves a periodic tridiagonal system in place of `rhs`
/// (row k: lower[k] x[k-1] + diag[k] x[k] + upper[k] x[k+1] = rhs[k]).
void solve_cyclic_tridiagonal(std::span<const double> lower, std::span<const double> diag,
                              std::span<const double> upper, std::span<double> rhs);

}  // namespace nonlocal
