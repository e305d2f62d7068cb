#include "qml/quasimodes.hpp"

#include <cmath>
#include <numbers>

namespace qml {
namespace {

/// 0 for t <= 0, 1 for t >= 1, C-infinity in between.
double smooth_step(double t) {
  if (t <= 0) return 0;
  if (t >= 1) return 1;
  const double a = std::exp(-1 / t);
  const double b = std::exp(-1 / (1 - t));
  return a / (a + b);
}

/// Indicator of distance-inside d > 0, or its smoothed version centered on the edge.
double edge(double inside, double width, bool smoothed) {
  if (!smoothed) return inside > 0 ? 1.0 : 0.0;
  return smooth_step(inside / width + 0.5);
}

}  // namespace

GridSpec t_alpha_grid(const TAlphaSpec& spec, double oversampling) {
  if (!(spec.h > 0 && spec.h <= 1)) throw InvalidInput("t_alpha_grid: h must lie in (0, 1]");
  const double arc = std::pow(spec.h, spec.alpha);
  // Support radius around omega0: the farthest corner of the polar rectangle.
  const double angle = std::min(arc, std::numbers::pi);
  const double radius = std::max((1 + spec.h) * std::sin(std::min(angle, std::numbers::pi / 2)),
                                 1 - (1 - spec.h) * std::cos(angle)) +
                        spec.h;
  const double half_width = 4 * std::numbers::pi;  // lattice spacing pi h / L = h / 4
  const double dxi = spec.h / 4;
  const auto points = next_fast_size(std::max<Index>(16, static_cast<Index>(std::ceil(2 * oversampling * radius / dxi))));
  return make_grid(half_width, points, spec.h, spec.omega0.normalized());
}

SpectralField2D t_alpha_spectrum(const TAlphaSpec& spec, const GridSpec& grid) {
  grid.validate();
  if (!(spec.alpha >= 0 && spec.alpha <= 1)) throw InvalidInput("build_t_alpha: alpha must lie in [0, 1]");
  if (std::abs(spec.h - grid.h) > 1e-15 * spec.h) throw InvalidInput("build_t_alpha: spec and grid disagree on h");
  if (grid.dxi() > spec.h / 4 * (1 + 1e-12))
    throw Refused("build_t_alpha: lattice spacing " + std::to_string(grid.dxi()) + " exceeds h/4");
  const double norm0 = spec.omega0.norm();
  if (!(norm0 > 0)) throw InvalidInput("build_t_alpha: omega0 must be nonzero");
  const Vec2 w0 = spec.omega0 / norm0;
  const double arc = std::pow(spec.h, spec.alpha);
  const double width = spec.h / 8;
  const Index n = grid.points_per_axis;
  SpectralField2D out{grid, ComplexMatrix<double>::Zero(n, n), {}};
  Index inside = 0;
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) {
      const Vec2 xi(grid.xi(0, i), grid.xi(1, j));
      const double r = xi.norm();
      const double angle = std::atan2(w0[0] * xi[1] - w0[1] * xi[0], w0.dot(xi));
      const double v = edge(spec.h - std::abs(r - 1), width, spec.smoothed_edges) *
                       edge(arc - std::abs(angle), width, spec.smoothed_edges);
      if (v > 0) {
        out.values(i, j) = v;
        ++inside;
      }
    }
  if (inside < 8)
    throw Refused("build_t_alpha: only " + std::to_string(inside) + " lattice points inside the polar rectangle");
  return out;
}

Field2D build_t_alpha(const TAlphaSpec& spec, const GridSpec& grid) {
  Field2D t = semiclassical_ifft(t_alpha_spectrum(spec, grid));
  if (spec.normalization == TNormalization::UnitL2) {
    t.values /= l2_norm(t);
  } else {
    // h^{-3/2-alpha} / (2 pi) times the integral of e^{i x.xi/h} over the rectangle; semiclassical_ifft
    // already carries (2 pi h)^{-1}.
    t.values *= std::pow(spec.h, -0.5 - spec.alpha);
  }
  return t;
}

DefectReport joint_defect(const SymbolSpec& p1, const SymbolSpec& p2, const Field2D& u, int m1, int m2,
                          const QuantizationOptions& options) {
  if (m1 < 0 || m2 < 0) throw InvalidInput("joint_defect: powers must be nonnegative");
  const double base = l2_norm(u);
  if (!(base > 0)) throw InvalidInput("defect: u must be nonzero");
  Field2D w = u;
  for (int i = 0; i < m2; ++i) w = apply_left_quantization(p2, w, options);
  for (int i = 0; i < m1; ++i) w = apply_left_quantization(p1, w, options);
  DefectReport r;
  r.label = p1.label() + "^" + std::to_string(m1) + " " + p2.label() + "^" + std::to_string(m2);
  r.m1 = m1;
  r.m2 = m2;
  r.h = u.grid.h;
  r.defect = l2_norm(w) / base;
  r.ratio_to_power = r.defect / std::pow(u.grid.h, m1 + m2);
  return r;
}

DefectReport defect(const SymbolSpec& op, const Field2D& u, int m, const QuantizationOptions& options) {
  if (m < 1) throw InvalidInput("defect: M must be >= 1");
  const double base = l2_norm(u);
  if (!(base > 0)) throw InvalidInput("defect: u must be nonzero");
  Field2D w = u;
  for (int i = 0; i < m; ++i) w = apply_left_quantization(op, w, options);
  DefectReport r;
  r.label = op.label() + "^" + std::to_string(m);
  r.m1 = m;
  r.h = u.grid.h;
  r.defect = l2_norm(w) / base;
  r.ratio_to_power = r.defect / std::pow(u.grid.h, m);
  return r;
}

LocalizationReport localization_check(const Field2D& u, double radius) {
  const auto& g = u.grid;
  if (!(radius > 0 && radius < g.half_width)) throw InvalidInput("localization_check: radius must lie in (0, L)");
  const Index n = g.points_per_axis;
  detail::CompensatedSum<double> total_x, out_x, total_xi, out_xi;
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) {
      const double m = std::norm(u.values(i, j));
      total_x.add(m);
      if (std::hypot(g.x(i), g.x(j)) > radius) out_x.add(m);
    }
  const SpectralField2D s = semiclassical_fft(u);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) {
      const double m = std::norm(s.values(i, j));
      total_xi.add(m);
      if (std::hypot(g.xi(0, i), g.xi(1, j)) > radius) out_xi.add(m);
    }
  LocalizationReport r;
  if (total_x.value() > 0) r.outside_x = out_x.value() / total_x.value();
  if (total_xi.value() > 0) r.outside_xi = out_xi.value() / total_xi.value();
  return r;
}

Field2D build_flat_model(const GridSpec& grid, int k, double x1_width) {
  grid.validate();
  if (k < 1) throw InvalidInput("build_flat_model: k must be >= 1");
  if (!(x1_width > 0)) throw InvalidInput("build_flat_model: x1 width must be positive");
  const double spread = std::pow(grid.h, 1.0 / (k + 1)) / 3;
  const double x2_width = grid.h / spread;
  Field2D v(grid);
  const Index n = grid.points_per_axis;
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) {
      const double a = grid.x(i) / x1_width;
      const double b = grid.x(j) / x2_width;
      v.values(i, j) = std::exp(-0.5 * (a * a + b * b));
    }
  v.values /= l2_norm(v);
  return v;
}

GridSpec flat_model_grid(double h, int k) {
  if (!(h > 0 && h <= 1)) throw InvalidInput("flat_model_grid: h must lie in (0, 1]");
  if (k < 1) throw InvalidInput("flat_model_grid: k must be >= 1");
  const double half_width = 8;
  // Need 2 dx < h^0.6 for the smallest wavelet scale, and a lattice reaching 12 spectral
  // standard deviations h^{1/(k+1)} / 3 of the x2 profile.
  const double dx_max = 0.5 * std::pow(h, 0.6);
  const Index by_scale = static_cast<Index>(std::ceil(2 * half_width / dx_max)) + 1;
  const double reach = 4 * std::pow(h, 1.0 / (k + 1));
  const Index by_content = static_cast<Index>(std::ceil(2 * reach * 2 * half_width / (std::numbers::pi * h))) + 2;
  return make_grid(half_width, next_fast_size(std::max<Index>({256, by_scale, by_content})), h);
}

}  // namespace qml
