#pragma once

// Independent brute force over every node pair of one t-slice, with the
// library's distance conventions (row offset * dtau, wrapped lattice offset).

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "nonlocal/domain.hpp"

namespace oracle {

struct BruteForce {
  double sup = 0, semi_s = 0, semi_y = 0;
  [[nodiscard]] double c_alpha() const { return sup + semi_s + semi_y; }
};

inline BruteForce brute_force_slice(const nonlocal::TriField& u, int it, double alpha) {
  const auto& g = u.grid();
  const int n = g.n_space();
  BruteForce out;
  for (int j1 = 0; j1 <= it; ++j1) {
    for (std::size_t k1 = 0; k1 < g.points(); ++k1) {
      const double a = u.at(it, j1, k1);
      out.sup = std::max(out.sup, std::abs(a));
      for (int j2 = 0; j2 <= it; ++j2) {
        if (j2 == j1) continue;
        const double d = std::pow(static_cast<double>(std::abs(j2 - j1)) * g.dtau(), alpha / 2.0);
        out.semi_s = std::max(out.semi_s, std::abs(u.at(it, j2, k1) - a) / d);
      }
      for (std::size_t k2 = 0; k2 < g.points(); ++k2) {
        if (k2 == k1) continue;
        const auto m1 = g.multi_index(k1);
        const auto m2 = g.multi_index(k2);
        auto wrapped = [n](int x, int y) { return std::min(std::abs(x - y), n - std::abs(x - y)); };
        double dist = 0.0;
        if (g.dim() == 1) {
          dist = static_cast<double>(wrapped(m1[0], m2[0])) * g.dy();
        } else {
          const double p = static_cast<double>(wrapped(m1[0], m2[0])) * g.dy();
          const double q = static_cast<double>(wrapped(m1[1], m2[1])) * g.dy();
          dist = std::sqrt(p * p + q * q);
        }
        out.semi_y = std::max(out.semi_y, std::abs(u.at(it, j1, k2) - a) / std::pow(dist, alpha));
      }
    }
  }
  return out;
}

}  // namespace oracle
