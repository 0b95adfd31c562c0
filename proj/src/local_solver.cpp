#include "nonlocal/local_solver.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <sstream>

#include "nonlocal/errors.hpp"

namespace nonlocal {

LocalOperatorSlice::LocalOperatorSlice(const TriangleGrid& grid)
    : diffusion(static_cast<std::size_t>(grid.sym_size()) * grid.points(), 0.0),
      drift(static_cast<std::size_t>(grid.dim()) * grid.points(), 0.0),
      reaction(grid.points(), 0.0),
      source(grid.points(), 0.0) {}

void check_ellipticity(const TriangleGrid& grid, const LocalOperatorSlice& op, double floor,
                       const char* what) {
  const std::size_t P = grid.points();
  for (std::size_t k = 0; k < P; ++k) {
    double smallest = 0.0;
    if (grid.dim() == 1) {
      smallest = op.diffusion[k];
    } else {
      const double a = op.diffusion[k];
      const double b = op.diffusion[P + k];
      const double c = op.diffusion[2 * P + k];
      const double mean = 0.5 * (a + c);
      const double radius = std::sqrt(0.25 * (a - c) * (a - c) + b * b);
      smallest = mean - radius;
    }
    const bool ok = floor > 0.0 ? smallest >= floor : smallest > 0.0;
    if (!ok || !std::isfinite(smallest)) {
      const auto pos = grid.position(k);
      std::ostringstream msg;
      msg << "uniform ellipticity condition violated by " << what << " at y=(" << pos[0];
      if (grid.dim() == 2) msg << ", " << pos[1];
      msg << "): smallest diffusion eigenvalue " << smallest;
      throw ModelError(msg.str());
    }
  }
}

void apply_operator(const TriangleGrid& grid, const LocalOperatorSlice& op,
                    std::span<const double> state, std::span<double> out) {
  const std::size_t P = grid.points();
  const double h = grid.dy();
  const double h2 = h * h;
  if (grid.dim() == 1) {
    const int n = grid.n_space();
    for (int k = 0; k < n; ++k) {
      const double up = state[grid.wrap(k + 1)];
      const double dn = state[grid.wrap(k - 1)];
      const double mid = state[k];
      out[k] = op.diffusion[k] * (up - 2.0 * mid + dn) / h2 + op.drift[k] * (up - dn) / (2.0 * h) +
               op.reaction[k] * mid;
    }
    return;
  }
  const int n = grid.n_space();
  for (int k1 = 0; k1 < n; ++k1) {
    for (int k0 = 0; k0 < n; ++k0) {
      const std::size_t p = grid.flat(k0, k1);
      const double mid = state[p];
      const double e = state[grid.flat(k0 + 1, k1)];
      const double w = state[grid.flat(k0 - 1, k1)];
      const double nn = state[grid.flat(k0, k1 + 1)];
      const double ss = state[grid.flat(k0, k1 - 1)];
      const double cross = (state[grid.flat(k0 + 1, k1 + 1)] - state[grid.flat(k0 + 1, k1 - 1)] -
                            state[grid.flat(k0 - 1, k1 + 1)] + state[grid.flat(k0 - 1, k1 - 1)]) /
                           (4.0 * h2);
      out[p] = op.diffusion[p] * (e - 2.0 * mid + w) / h2 +
               op.diffusion[2 * P + p] * (nn - 2.0 * mid + ss) / h2 +
               2.0 * op.diffusion[P + p] * cross + op.drift[p] * (e - w) / (2.0 * h) +
               op.drift[P + p] * (nn - ss) / (2.0 * h) + op.reaction[p] * mid;
    }
  }
}

void solve_cyclic_tridiagonal(std::span<const double> lower, std::span<const double> diag,
                              std::span<const double> upper, std::span<double> rhs) {
  const std::size_t n = diag.size();
  // Sherman-Morrison: split off the corner entries and solve two plain
  // tridiagonal systems with the Thomas algorithm.
  const double corner_top = lower[0];       // row 0, column n-1
  const double corner_bottom = upper[n - 1];  // row n-1, column 0
  const double gamma = -diag[0];
  std::vector<double> bb(diag.begin(), diag.end());
  bb[0] = diag[0] - gamma;
  bb[n - 1] = diag[n - 1] - corner_bottom * corner_top / gamma;

  std::vector<double> work(n);
  std::vector<double> z(n, 0.0);
  z[0] = gamma;
  z[n - 1] = corner_bottom;

  auto thomas = [&](std::span<double> r) {
    double pivot = bb[0];
    if (std::abs(pivot) < 1e-300) throw NumericalError("cyclic tridiagonal solve: zero pivot at row 0");
    r[0] /= pivot;
    for (std::size_t k = 1; k < n; ++k) {
      work[k] = upper[k - 1] / pivot;
      pivot = bb[k] - lower[k] * work[k];
      if (std::abs(pivot) < 1e-300) {
        throw NumericalError("cyclic tridiagonal solve: zero pivot at row " + std::to_string(k));
      }
      r[k] = (r[k] - lower[k] * r[k - 1]) / pivot;
    }
    for (std::size_t k = n - 1; k-- > 0;) r[k] -= work[k + 1] * r[k + 1];
  };
  thomas(rhs);
  thomas(z);
  const double denom = 1.0 + z[0] + corner_top * z[n - 1] / gamma;
  if (std::abs(denom) < 1e-300) throw NumericalError("cyclic tridiagonal solve: singular correction");
  const double factor = (rhs[0] + corner_top * rhs[n - 1] / gamma) / denom;
  for (std::size_t k = 0; k < n; ++k) rhs[k] -= factor * z[k];
}

struct LocalStepper::Workspace {
  std::vector<double> lower, diag, upper, rhs, applied;
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
};

LocalStepper::LocalStepper(const TriangleGrid& grid, StepOptions options)
    : grid_(grid), options_(options), work_(std::make_unique<Workspace>()) {
  if (!(options_.theta >= 0.0 && options_.theta <= 1.0)) {
    throw ConfigError("theta scheme parameter must lie in [0, 1]");
  }
  const std::size_t P = grid.points();
  work_->lower.resize(P);
  work_->diag.resize(P);
  work_->upper.resize(P);
  work_->rhs.resize(P);
  work_->applied.resize(P);
}

LocalStepper::~LocalStepper() = default;
LocalStepper::LocalStepper(LocalStepper&&) noexcept = default;
LocalStepper& LocalStepper::operator=(LocalStepper&&) noexcept = default;

void LocalStepper::step(std::span<const double> state, const LocalOperatorSlice& now,
                        const LocalOperatorSlice& next, double dtau, std::span<double> out) {
  const double theta = options_.theta;
  check_ellipticity(grid_, next, options_.ellipticity_floor, "the local operator");
  auto& w = *work_;
  const std::size_t P = grid_.points();

  apply_operator(grid_, now, state, w.applied);
  for (std::size_t k = 0; k < P; ++k) {
    w.rhs[k] = state[k] + (1.0 - theta) * dtau * w.applied[k] +
               dtau * (theta * next.source[k] + (1.0 - theta) * now.source[k]);
  }
  if (theta == 0.0) {
    std::copy(w.rhs.begin(), w.rhs.end(), out.begin());
    return;
  }

  const double h = grid_.dy();
  const double h2 = h * h;
  const double scale = theta * dtau;
  if (grid_.dim() == 1) {
    for (std::size_t k = 0; k < P; ++k) {
      const double a = next.diffusion[k];
      const double b = next.drift[k];
      w.lower[k] = -scale * (a / h2 - b / (2.0 * h));
      w.diag[k] = 1.0 - scale * (-2.0 * a / h2 + next.reaction[k]);
      w.upper[k] = -scale * (a / h2 + b / (2.0 * h));
    }
    solve_cyclic_tridiagonal(w.lower, w.diag, w.upper, w.rhs);
    std::copy(w.rhs.begin(), w.rhs.end(), out.begin());
  } else {
    const int n = grid_.n_space();
    std::vector<Eigen::Triplet<double>> entries;
    entries.reserve(P * 9);
    for (int k1 = 0; k1 < n; ++k1) {
      for (int k0 = 0; k0 < n; ++k0) {
        const auto p = static_cast<int>(grid_.flat(k0, k1));
        const double a00 = next.diffusion[p];
        const double a01 = next.diffusion[P + p];
        const double a11 = next.diffusion[2 * P + p];
        const double b0 = next.drift[p];
        const double b1 = next.drift[P + p];
        auto add = [&](int c0, int c1, double value) {
          entries.emplace_back(p, static_cast<int>(grid_.flat(c0, c1)), -scale * value);
        };
        entries.emplace_back(p, p, 1.0);
        add(k0, k1, -2.0 * (a00 + a11) / h2 + next.reaction[p]);
        add(k0 + 1, k1, a00 / h2 + b0 / (2.0 * h));
        add(k0 - 1, k1, a00 / h2 - b0 / (2.0 * h));
        add(k0, k1 + 1, a11 / h2 + b1 / (2.0 * h));
        add(k0, k1 - 1, a11 / h2 - b1 / (2.0 * h));
        add(k0 + 1, k1 + 1, a01 / (2.0 * h2));
        add(k0 - 1, k1 - 1, a01 / (2.0 * h2));
        add(k0 + 1, k1 - 1, -a01 / (2.0 * h2));
        add(k0 - 1, k1 + 1, -a01 / (2.0 * h2));
      }
    }
    Eigen::SparseMatrix<double> matrix(static_cast<Eigen::Index>(P), static_cast<Eigen::Index>(P));
    matrix.setFromTriplets(entries.begin(), entries.end());
    matrix.makeCompressed();
    w.lu.compute(matrix);
    if (w.lu.info() != Eigen::Success) {
      throw NumericalError("local step: sparse factorization failed (" + w.lu.lastErrorMessage() + ")");
    }
    const Eigen::Map<const Eigen::VectorXd> b(w.rhs.data(), static_cast<Eigen::Index>(P));
    Eigen::VectorXd x = w.lu.solve(b);
    Eigen::VectorXd residual = b - matrix * x;
    const double ref = std::max(b.lpNorm<Eigen::Infinity>(), 1e-300);
    if (residual.lpNorm<Eigen::Infinity>() > 1e-12 * ref) {
      x += w.lu.solve(residual);
      residual = b - matrix * x;
      if (residual.lpNorm<Eigen::Infinity>() > 1e-12 * ref) {
        std::ostringstream msg;
        msg << "local step: relative residual " << residual.lpNorm<Eigen::Infinity>() / ref
            << " exceeds 1e-12 after refinement";
        throw NumericalError(msg.str());
      }
    }
    std::copy(x.data(), x.data() + P, out.begin());
  }
  for (std::size_t k = 0; k < P; ++k) {
    if (!std::isfinite(out[k])) throw NumericalError("local step produced a non-finite value");
  }
}

std::vector<double> advance_slice_step(const TriangleGrid& grid, std::span<const double> state,
                                       const LocalOperatorSlice& now,
                                       const LocalOperatorSlice& next, double dtau, double theta) {
  LocalStepper stepper(grid, StepOptions{theta, 0.0});
  check_ellipticity(grid, now, 0.0, "the local operator");
  std::vector<double> out(grid.points());
  stepper.step(state, now, next, dtau, out);
  return out;
}

SliceField solve_parameterized_local(const TriangleGrid& grid, const SliceProvider& op_by_slice,
                                     std::span<const double> initial, int up_to,
                                     StepOptions options) {
  if (up_to < 0 || up_to >= grid.n_time()) throw IndexError("solve_parameterized_local: up_to out of range");
  if (initial.size() != grid.points()) throw ArgumentError("solve_parameterized_local: initial size mismatch");
  for (double x : initial) {
    if (!std::isfinite(x)) throw ArgumentError("solve_parameterized_local: initial data not finite");
  }
  SliceField out(up_to + 1, grid.points());
  std::copy(initial.begin(), initial.end(), out.row(0).begin());
  if (up_to == 0) return out;
  LocalStepper stepper(grid, options);
  LocalOperatorSlice now = op_by_slice(0);
  check_ellipticity(grid, now, options.ellipticity_floor, "the local operator");
  for (int j = 0; j < up_to; ++j) {
    LocalOperatorSlice next = op_by_slice(j + 1);
    stepper.step(out.row(j), now, next, grid.dtau(), out.row(j + 1));
    now = std::move(next);
  }
  return out;
}

}  // namespace nonlocal
