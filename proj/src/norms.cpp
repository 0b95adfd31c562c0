#include "nonlocal/norms.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "nonlocal/errors.hpp"

namespace nonlocal {

namespace {

// Denominators |s - s'|^{alpha/2} indexed by the row offset m.
std::vector<double> s_denominators(int rows, double dtau, double alpha) {
  std::vector<double> den(static_cast<std::size_t>(std::max(rows, 1)), 1.0);
  for (int m = 1; m < rows; ++m) den[m] = std::pow(static_cast<double>(m) * dtau, alpha / 2.0);
  return den;
}

int wrapped_offset(int a, int b, int n) {
  const int m = std::abs(a - b);
  return std::min(m, n - m);
}

// Denominators |y - y'|^alpha indexed by wrapped per-axis offsets (w0, w1).
class YDenominators {
 public:
  YDenominators(const TriangleGrid& grid, double alpha)
      : dim_(grid.dim()), half_(grid.n_space() / 2 + 1), table_(static_cast<std::size_t>(half_ * half_), 1.0) {
    const double h = grid.dy();
    for (int w1 = 0; w1 < half_; ++w1) {
      for (int w0 = 0; w0 < half_; ++w0) {
        if (w0 == 0 && w1 == 0) continue;
        double dist = 0.0;
        if (dim_ == 1) {
          dist = static_cast<double>(w0) * h;
        } else {
          const double a = static_cast<double>(w0) * h;
          const double b = static_cast<double>(w1) * h;
          dist = std::sqrt(a * a + b * b);
        }
        table_[static_cast<std::size_t>(w1 * half_ + w0)] = std::pow(dist, alpha);
      }
    }
  }
  [[nodiscard]] double operator()(int w0, int w1) const {
    return table_[static_cast<std::size_t>(w1 * half_ + w0)];
  }

 private:
  int dim_;
  int half_;
  std::vector<double> table_;
};

double semi_s_exhaustive(SliceView slice, const std::vector<double>& den) {
  double best = 0.0;
  for (int r2 = 1; r2 < slice.rows; ++r2) {
    const auto b = slice.row(r2);
    for (int r1 = 0; r1 < r2; ++r1) {
      const auto a = slice.row(r1);
      const double d = den[static_cast<std::size_t>(r2 - r1)];
      for (std::size_t k = 0; k < slice.points; ++k) {
        best = std::max(best, std::abs(b[k] - a[k]) / d);
      }
    }
  }
  return best;
}

double semi_y_exhaustive(const TriangleGrid& grid, SliceView slice, const YDenominators& den) {
  const int n = grid.n_space();
  double best = 0.0;
  for (int r = 0; r < slice.rows; ++r) {
    const auto x = slice.row(r);
    if (grid.dim() == 1) {
      for (int k1 = 0; k1 < n; ++k1) {
        for (int k2 = k1 + 1; k2 < n; ++k2) {
          const double d = den(wrapped_offset(k1, k2, n), 0);
          best = std::max(best, std::abs(x[k2] - x[k1]) / d);
        }
      }
    } else {
      const std::size_t P = slice.points;
      for (std::size_t p1 = 0; p1 < P; ++p1) {
        const auto m1 = grid.multi_index(p1);
        for (std::size_t p2 = p1 + 1; p2 < P; ++p2) {
          const auto m2 = grid.multi_index(p2);
          const double d = den(wrapped_offset(m1[0], m2[0], n), wrapped_offset(m1[1], m2[1], n));
          best = std::max(best, std::abs(x[p2] - x[p1]) / d);
        }
      }
    }
  }
  return best;
}

struct Seminorms {
  double s = 0.0;
  double y = 0.0;
  bool sampled = false;
};

Seminorms seminorms(const TriangleGrid& grid, SliceView slice, const HolderConfig& cfg) {
  const auto den_s = s_denominators(slice.rows, grid.dtau(), cfg.alpha);
  const YDenominators den_y(grid, cfg.alpha);
  const auto rows = static_cast<std::size_t>(slice.rows);
  const std::size_t P = slice.points;
  const std::size_t s_pairs = rows * (rows - 1) / 2 * P;
  const std::size_t y_pairs = rows * (P * (P - 1) / 2);
  const std::size_t budget = cfg.pair_budget;

  Seminorms out;
  std::mt19937_64 rng(cfg.seed);
  if (budget == 0 || s_pairs <= budget) {
    out.s = semi_s_exhaustive(slice, den_s);
  } else {
    out.sampled = true;
    std::uniform_int_distribution<std::size_t> pick_row(0, rows - 1);
    std::uniform_int_distribution<std::size_t> pick_point(0, P - 1);
    for (std::size_t n = 0; n < budget; ++n) {
      auto r1 = pick_row(rng);
      auto r2 = pick_row(rng);
      if (r1 == r2) continue;
      if (r1 > r2) std::swap(r1, r2);
      const std::size_t k = pick_point(rng);
      const double diff = slice.values[r2 * P + k] - slice.values[r1 * P + k];
      out.s = std::max(out.s, std::abs(diff) / den_s[r2 - r1]);
    }
  }
  if (budget == 0 || y_pairs <= budget) {
    out.y = semi_y_exhaustive(grid, slice, den_y);
  } else {
    out.sampled = true;
    const int n = grid.n_space();
    std::uniform_int_distribution<std::size_t> pick_row(0, rows - 1);
    std::uniform_int_distribution<std::size_t> pick_point(0, P - 1);
    for (std::size_t c = 0; c < budget; ++c) {
      const std::size_t r = pick_row(rng);
      const std::size_t p1 = pick_point(rng);
      const std::size_t p2 = pick_point(rng);
      if (p1 == p2) continue;
      const auto m1 = grid.multi_index(p1);
      const auto m2 = grid.multi_index(p2);
      const double d = den_y(wrapped_offset(m1[0], m2[0], n),
                             grid.dim() == 2 ? wrapped_offset(m1[1], m2[1], n) : 0);
      out.y = std::max(out.y, std::abs(slice.values[r * P + p2] - slice.values[r * P + p1]) / d);
    }
  }
  return out;
}

double c_alpha_of(const TriangleGrid& grid, SliceView slice, const HolderConfig& cfg,
                  bool& sampled) {
  const auto semi = seminorms(grid, slice, cfg);
  sampled = sampled || semi.sampled;
  return sup_norm(slice.values) + semi.s + semi.y;
}

}  // namespace

void HolderConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie strictly between 0 and 1");
}

SliceDerivatives SliceDerivativeData::view() const {
  SliceDerivatives out;
  out.ds = view_of(ds);
  for (const auto& f : dy) out.dy.push_back(view_of(f));
  for (const auto& f : dyy) out.dyy.push_back(view_of(f));
  return out;
}

SliceDerivativeData slice_derivatives(const TriangleGrid& grid, SliceView slice) {
  const int rows = slice.rows;
  const std::size_t P = slice.points;
  SliceDerivativeData out;
  out.ds = SliceField(rows, P);
  const double h = grid.dtau();
  if (rows == 2) {
    for (std::size_t k = 0; k < P; ++k) {
      const double d = (slice.row(1)[k] - slice.row(0)[k]) / h;
      out.ds.row(0)[k] = d;
      out.ds.row(1)[k] = d;
    }
  } else if (rows >= 3) {
    for (int j = 0; j < rows; ++j) {
      auto dst = out.ds.row(j);
      for (std::size_t k = 0; k < P; ++k) {
        if (j == 0) {
          dst[k] = (-3.0 * slice.row(0)[k] + 4.0 * slice.row(1)[k] - slice.row(2)[k]) / (2.0 * h);
        } else if (j == rows - 1) {
          dst[k] = (3.0 * slice.row(j)[k] - 4.0 * slice.row(j - 1)[k] + slice.row(j - 2)[k]) /
                   (2.0 * h);
        } else {
          dst[k] = (slice.row(j + 1)[k] - slice.row(j - 1)[k]) / (2.0 * h);
        }
      }
    }
  }
  for (int a = 0; a < grid.dim(); ++a) out.dy.emplace_back(rows, P);
  for (int p = 0; p < grid.sym_size(); ++p) out.dyy.emplace_back(rows, P);
  for (int j = 0; j < rows; ++j) {
    for (int a = 0; a < grid.dim(); ++a) {
      gradient(grid, slice.row(j), a, out.dy[a].row(j));
      for (int b = a; b < grid.dim(); ++b) {
        hessian(grid, slice.row(j), a, b, out.dyy[sym_index(a, b)].row(j));
      }
    }
  }
  return out;
}

double sup_norm(std::span<const double> values) noexcept {
  double best = 0.0;
  for (double x : values) best = std::max(best, std::abs(x));
  return best;
}

NormReport holder_norm_alpha(const TriangleGrid& grid, SliceView slice, const HolderConfig& cfg,
                             const SliceDerivatives* derivatives) {
  cfg.validate();
  NormReport r;
  r.sup = sup_norm(slice.values);
  const auto semi = seminorms(grid, slice, cfg);
  r.semi_s = semi.s;
  r.semi_y = semi.y;
  r.sampled = semi.sampled;
  r.c_alpha = r.sup + r.semi_s + r.semi_y;
  if (derivatives != nullptr) {
    double total = r.sup + c_alpha_of(grid, derivatives->ds, cfg, r.sampled);
    for (const auto& d : derivatives->dy) total += sup_norm(d.values);
    for (int a = 0; a < grid.dim(); ++a) {
      for (int b = 0; b < grid.dim(); ++b) {
        total += c_alpha_of(grid, derivatives->dyy[sym_index(a, b)], cfg, r.sampled);
      }
    }
    r.c_2alpha = total;
  }
  r.bracket = derivatives != nullptr ? r.c_2alpha : r.c_alpha;
  r.double_bracket = r.bracket;
  return r;
}

NormReport holder_norm(const TriangleGrid& grid, SliceView slice, const HolderConfig& cfg,
                       bool two_plus_alpha, const SliceDerivatives* derivatives) {
  if (two_plus_alpha) {
    if (derivatives == nullptr) {
      throw ArgumentError("holder norm: the 2+alpha variant needs derivative slices");
    }
    const auto expected = static_cast<std::size_t>(grid.dim());
    if (derivatives->dy.size() != expected ||
        derivatives->dyy.size() != static_cast<std::size_t>(grid.sym_size())) {
      throw ArgumentError("holder norm: derivative slices do not match the grid dimension");
    }
    return holder_norm_alpha(grid, slice, cfg, derivatives);
  }
  return holder_norm_alpha(grid, slice, cfg, nullptr);
}

namespace {

NormReport slice_report(const TriangleGrid& grid, SliceView view, const HolderConfig& cfg,
                        SliceOrder order) {
  if (order == SliceOrder::alpha) return holder_norm_alpha(grid, view, cfg, nullptr);
  const auto data = slice_derivatives(grid, view);
  const auto d = data.view();
  return holder_norm_alpha(grid, view, cfg, &d);
}

}  // namespace

NormReport tri_norms(const TriField& u, const TriField* v, const HolderConfig& cfg,
                     SliceOrder order, std::optional<Region> region) {
  cfg.validate();
  const auto& grid = u.grid();
  if (v != nullptr && !(v->grid() == grid)) throw ArgumentError("tri_norms: grid mismatch");
  const Region reg = region.value_or(Region::full(grid));
  if (reg.s_begin < 0 || reg.s_end < reg.s_begin || reg.t_end >= grid.n_time() ||
      reg.t_end < reg.s_begin) {
    throw IndexError("tri_norms: invalid region");
  }
  const std::size_t P = grid.points();
  auto view_for = [&](const TriField& f, int it) {
    const int rows = reg.last_row(it) - reg.s_begin + 1;
    return SliceView{f.t_slice(it).subspan(static_cast<std::size_t>(reg.s_begin) * P,
                                           static_cast<std::size_t>(rows) * P),
                     rows, P};
  };

  NormReport out;
  for (int it = reg.s_begin; it <= reg.t_end; ++it) {
    const auto ru = slice_report(grid, view_for(u, it), cfg, order);
    out.sup = std::max(out.sup, ru.sup);
    out.semi_s = std::max(out.semi_s, ru.semi_s);
    out.semi_y = std::max(out.semi_y, ru.semi_y);
    out.c_alpha = std::max(out.c_alpha, ru.c_alpha);
    out.c_2alpha = std::max(out.c_2alpha, ru.c_2alpha);
    out.sampled = out.sampled || ru.sampled;
    out.bracket = std::max(out.bracket, ru.bracket);
    double combined = ru.bracket;
    if (v != nullptr) {
      const auto rv = slice_report(grid, view_for(*v, it), cfg, order);
      out.sampled = out.sampled || rv.sampled;
      combined += rv.bracket;
    }
    out.double_bracket = std::max(out.double_bracket, combined);
  }
  return out;
}

}  // namespace nonlocal
