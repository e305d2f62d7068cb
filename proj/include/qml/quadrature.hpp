#pragma once

#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

namespace qml {

/// Gauss-Legendre nodes and weights on [-1, 1].
struct GaussLegendre {
  std::vector<double> nodes;
  std::vector<double> weights;

  explicit GaussLegendre(int n) : nodes(n), weights(n) {
    for (int i = 0; i < n; ++i) {
      double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
      double dp = 1;
      for (int it = 0; it < 100; ++it) {
        double p0 = 1, p1 = x;
        for (int k = 2; k <= n; ++k) {
          const double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
          p0 = p1;
          p1 = p2;
        }
        dp = n * (x * p1 - p0) / (x * x - 1);
        const double step = p1 / dp;
        x -= step;
        if (std::abs(step) < 1e-16) break;
      }
      nodes[i] = x;
      weights[i] = 2 / ((1 - x * x) * dp * dp);
    }
  }

  /// Composite rule over [lo, hi] split into `panels` equal pieces.
  template <typename F>
  auto integrate(F&& f, double lo, double hi, int panels = 1) const {
    const double width = (hi - lo) / panels;
    decltype(f(lo)) acc{};
    for (int p = 0; p < panels; ++p) {
      const double mid = lo + (p + 0.5) * width;
      for (size_t i = 0; i < nodes.size(); ++i) acc += weights[i] * 0.5 * width * f(mid + 0.5 * width * nodes[i]);
    }
    return acc;
  }
};

}  // namespace qml
