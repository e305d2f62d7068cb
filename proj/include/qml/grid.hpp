#pragma once

#include "qml/errors.hpp"
#include "qml/parallel.hpp"

#include <Eigen/Core>
#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

namespace qml {

using Index = Eigen::Index;

/// Uniform N x N grid on the periodic box [-L, L)^2 with semiclassical parameter h.
///
/// The frequency lattice is center + pi h m / L for m in [-N/2, N/2) on each axis.
/// A nonzero center lets a fine lattice sit on a frequency region away from the origin
/// without paying for the whole disc; fields keep their true values at the sample points.
template <typename Scalar>
struct BasicGridSpec {
  using Vec2 = Eigen::Matrix<Scalar, 2, 1>;

  Scalar half_width = 8;
  Index points_per_axis = 256;
  Scalar h = Scalar(1) / 32;
  Vec2 center = Vec2::Zero();

  Scalar dx() const { return 2 * half_width / static_cast<Scalar>(points_per_axis); }
  Scalar dxi() const { return std::numbers::pi_v<Scalar> * h / half_width; }
  Scalar x(Index i) const { return -half_width + static_cast<Scalar>(i) * dx(); }

  /// Frequency of centered spectral index i (i = m + N/2) along axis 0 or 1.
  Scalar xi(int axis, Index i) const {
    return center[axis] + static_cast<Scalar>(i - points_per_axis / 2) * dxi();
  }

  Scalar lattice_half_extent() const { return static_cast<Scalar>(points_per_axis / 2) * dxi(); }

  /// True when both lattice axes contain [-2, 2].
  bool resolves_unit_band() const {
    const Scalar lo = -static_cast<Scalar>(points_per_axis / 2) * dxi();
    const Scalar hi = static_cast<Scalar>(points_per_axis / 2 - 1) * dxi();
    for (int a = 0; a < 2; ++a) {
      if (center[a] + lo > -2 || center[a] + hi < 2) return false;
    }
    return true;
  }

  void validate() const {
    if (points_per_axis < 16 || points_per_axis % 2 != 0)
      throw InvalidInput("grid: points_per_axis must be even and at least 16, got " +
                         std::to_string(points_per_axis));
    if (!(half_width > 0) || !std::isfinite(static_cast<double>(half_width)))
      throw InvalidInput("grid: half_width must be positive");
    if (!(h > 0 && h <= 1)) throw InvalidInput("grid: h must lie in (0, 1]");
    if (!center.allFinite()) throw InvalidInput("grid: lattice center must be finite");
  }

  bool operator==(const BasicGridSpec& other) const {
    return half_width == other.half_width && points_per_axis == other.points_per_axis &&
           h == other.h && center == other.center;
  }
};

template <typename Scalar>
using ComplexMatrix = Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, Eigen::Dynamic>;

/// Samples u(x_i, x_j); row index is x1, column index is x2.
template <typename Scalar>
struct BasicField2D {
  BasicGridSpec<Scalar> grid;
  ComplexMatrix<Scalar> values;

  BasicField2D() = default;
  explicit BasicField2D(const BasicGridSpec<Scalar>& g)
      : grid(g), values(ComplexMatrix<Scalar>::Zero(g.points_per_axis, g.points_per_axis)) {}
  BasicField2D(const BasicGridSpec<Scalar>& g, ComplexMatrix<Scalar> v) : grid(g), values(std::move(v)) {
    check_shape();
  }

  void check_shape() const {
    if (values.rows() != grid.points_per_axis || values.cols() != grid.points_per_axis)
      throw InvalidInput("field: value array does not match the grid");
  }
};

/// Semiclassical Fourier transform samples, centered: entry (i, j) sits at (grid.xi(0,i), grid.xi(1,j)).
template <typename Scalar>
struct BasicSpectralField2D {
  BasicGridSpec<Scalar> grid;
  ComplexMatrix<Scalar> values;
  Warnings warnings;
};

using GridSpec = BasicGridSpec<double>;
using Field2D = BasicField2D<double>;
using SpectralField2D = BasicSpectralField2D<double>;
using Vec2 = Eigen::Vector2d;

/// Builds a validated grid.
inline GridSpec make_grid(double half_width, Index points, double h, Vec2 center = Vec2::Zero()) {
  GridSpec g{half_width, points, h, center};
  g.validate();
  return g;
}

/// Smallest even integer >= n whose only prime factors are 2, 3 and 5.
Index next_fast_size(Index n);

namespace detail {

template <typename Scalar>
void require_finite(const ComplexMatrix<Scalar>& v, const char* what) {
  if (!v.allFinite()) throw InvalidInput(std::string(what) + ": non-finite entries");
}

/// In-place unnormalized DFT of every column (axis 0) or row (axis 1); inverse uses e^{+i}.
template <typename Scalar>
void dft_axis(ComplexMatrix<Scalar>& m, int axis, bool inverse) {
  using C = std::complex<Scalar>;
  const Index lines = axis == 0 ? m.cols() : m.rows();
  const Index len = axis == 0 ? m.rows() : m.cols();
  parallel_for(0, lines, [&](Index line) {
    Eigen::FFT<Scalar> fft;
    fft.SetFlag(Eigen::FFT<Scalar>::Unscaled);
    std::vector<C> in(len), out(len);
    for (Index t = 0; t < len; ++t) in[t] = axis == 0 ? m(t, line) : m(line, t);
    if (inverse)
      fft.inv(out, in);
    else
      fft.fwd(out, in);
    for (Index t = 0; t < len; ++t) (axis == 0 ? m(t, line) : m(line, t)) = out[t];
  });
}

/// Phase e^{-i x_j c / h} on axis samples, used to demodulate by the lattice center.
template <typename Scalar>
Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, 1> carrier(const BasicGridSpec<Scalar>& g, int axis,
                                                               Scalar sign) {
  const Index n = g.points_per_axis;
  Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, 1> c(n);
  for (Index i = 0; i < n; ++i) c[i] = std::polar(Scalar(1), sign * g.x(i) * g.center[axis] / g.h);
  return c;
}

}  // namespace detail

/// Discrete semiclassical Fourier transform (2 pi h)^{-1} sum e^{-i x.xi/h} u dx^2 on the grid lattice.
template <typename Scalar>
BasicSpectralField2D<Scalar> semiclassical_fft(const BasicField2D<Scalar>& u) {
  u.grid.validate();
  u.check_shape();
  detail::require_finite(u.values, "semiclassical_fft");
  const auto& g = u.grid;
  const Index n = g.points_per_axis;
  const Index half = n / 2;

  ComplexMatrix<Scalar> work = u.values;
  if (g.center[0] != 0) work = detail::carrier(g, 0, Scalar(-1)).asDiagonal() * work;
  if (g.center[1] != 0) work = work * detail::carrier(g, 1, Scalar(-1)).asDiagonal();
  detail::dft_axis(work, 0, false);
  detail::dft_axis(work, 1, false);

  // x_j xi_m / h = -pi m + 2 pi j m / N, so the sum is (-1)^m times the DFT at bin m mod N.
  const Scalar scale = g.dx() * g.dx() / (2 * std::numbers::pi_v<Scalar> * g.h);
  BasicSpectralField2D<Scalar> out{g, ComplexMatrix<Scalar>(n, n), {}};
  for (Index j = 0; j < n; ++j) {
    const Index mj = j - half;
    const Index bj = (mj + n) % n;
    for (Index i = 0; i < n; ++i) {
      const Index mi = i - half;
      const Index bi = (mi + n) % n;
      const Scalar sign = ((mi + mj) % 2 == 0) ? Scalar(1) : Scalar(-1);
      out.values(i, j) = sign * scale * work(bi, bj);
    }
  }
  if (!g.resolves_unit_band())
    out.warnings.push_back("frequency lattice does not cover [-2,2]^2");
  return out;
}

/// Inverse of semiclassical_fft: (2 pi h)^{-1} sum e^{i x.xi/h} U dxi^2.
template <typename Scalar>
BasicField2D<Scalar> semiclassical_ifft(const BasicSpectralField2D<Scalar>& spectrum) {
  const auto& g = spectrum.grid;
  g.validate();
  const Index n = g.points_per_axis;
  if (spectrum.values.rows() != n || spectrum.values.cols() != n)
    throw InvalidInput("semiclassical_ifft: value array does not match the grid");
  detail::require_finite(spectrum.values, "semiclassical_ifft");
  const Index half = n / 2;

  ComplexMatrix<Scalar> work(n, n);
  for (Index j = 0; j < n; ++j) {
    const Index mj = j - half;
    const Index bj = (mj + n) % n;
    for (Index i = 0; i < n; ++i) {
      const Index mi = i - half;
      const Index bi = (mi + n) % n;
      const Scalar sign = ((mi + mj) % 2 == 0) ? Scalar(1) : Scalar(-1);
      work(bi, bj) = sign * spectrum.values(i, j);
    }
  }
  detail::dft_axis(work, 0, true);
  detail::dft_axis(work, 1, true);
  const Scalar scale = g.dxi() * g.dxi() / (2 * std::numbers::pi_v<Scalar> * g.h);
  work *= scale;
  if (g.center[0] != 0) work = detail::carrier(g, 0, Scalar(1)).asDiagonal() * work;
  if (g.center[1] != 0) work = work * detail::carrier(g, 1, Scalar(1)).asDiagonal();
  return BasicField2D<Scalar>(g, std::move(work));
}

/// One-dimensional semiclassical transform (2 pi h)^{-1/2} sum e^{-i x xi/h} g dx, centered output.
/// `center` is the lattice center along this axis.
template <typename Scalar>
Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, 1> semiclassical_fft_1d(
    const Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, 1>& samples, Scalar half_width, Scalar h,
    Scalar center = 0, bool inverse = false) {
  using C = std::complex<Scalar>;
  const Index n = samples.size();
  const Index half = n / 2;
  const Scalar dx = 2 * half_width / static_cast<Scalar>(n);
  const Scalar dxi = std::numbers::pi_v<Scalar> * h / half_width;
  const Scalar pi2h = 2 * std::numbers::pi_v<Scalar> * h;
  std::vector<C> in(n), out(n);
  Eigen::FFT<Scalar> fft;
  fft.SetFlag(Eigen::FFT<Scalar>::Unscaled);
  Eigen::Matrix<C, Eigen::Dynamic, 1> result(n);
  if (!inverse) {
    for (Index j = 0; j < n; ++j) {
      const Scalar x = -half_width + static_cast<Scalar>(j) * dx;
      in[j] = center != 0 ? samples[j] * std::polar(Scalar(1), -x * center / h) : samples[j];
    }
    fft.fwd(out, in);
    const Scalar scale = dx / std::sqrt(pi2h);
    for (Index i = 0; i < n; ++i) {
      const Index m = i - half;
      result[i] = (m % 2 == 0 ? scale : -scale) * out[(m + n) % n];
    }
  } else {
    for (Index i = 0; i < n; ++i) {
      const Index m = i - half;
      in[(m + n) % n] = (m % 2 == 0 ? Scalar(1) : Scalar(-1)) * samples[i];
    }
    fft.inv(out, in);
    const Scalar scale = dxi / std::sqrt(pi2h);
    for (Index j = 0; j < n; ++j) {
      const Scalar x = -half_width + static_cast<Scalar>(j) * dx;
      result[j] = scale * out[j];
      if (center != 0) result[j] *= std::polar(Scalar(1), x * center / h);
    }
  }
  return result;
}

namespace detail {
/// Neumaier-compensated running sum; fixed order keeps results thread-count independent.
template <typename Scalar>
struct CompensatedSum {
  Scalar sum = 0;
  Scalar correction = 0;
  void add(Scalar v) {
    const Scalar t = sum + v;
    if (std::abs(sum) >= std::abs(v))
      correction += (sum - t) + v;
    else
      correction += (v - t) + sum;
    sum = t;
  }
  Scalar value() const { return sum + correction; }
};
}  // namespace detail

/// Riemann-sum L^p norm; p = infinity gives max |u|.
template <typename Scalar>
Scalar lp_norm(const BasicField2D<Scalar>& u, Scalar p) {
  if (std::isnan(p) || p < 1) throw DomainError("lp_norm: p must be >= 1");
  const auto& v = u.values;
  if (std::isinf(p)) return v.size() == 0 ? Scalar(0) : v.cwiseAbs().maxCoeff();
  const Scalar cell = u.grid.dx() * u.grid.dx();
  detail::CompensatedSum<Scalar> acc;
  if (p == 2) {
    for (Index j = 0; j < v.cols(); ++j)
      for (Index i = 0; i < v.rows(); ++i) acc.add(std::norm(v(i, j)));
    return std::sqrt(acc.value() * cell);
  }
  // Scale by the max to avoid overflow for large p.
  const Scalar peak = v.cwiseAbs().maxCoeff();
  if (peak == 0) return 0;
  for (Index j = 0; j < v.cols(); ++j)
    for (Index i = 0; i < v.rows(); ++i) acc.add(std::pow(std::abs(v(i, j)) / peak, p));
  return peak * std::pow(acc.value() * cell, 1 / p);
}

template <typename Scalar>
Scalar l2_norm(const BasicField2D<Scalar>& u) {
  return lp_norm(u, Scalar(2));
}

/// L^2 norm of a spectral field with the lattice cell dxi^2.
template <typename Scalar>
Scalar l2_norm(const BasicSpectralField2D<Scalar>& u) {
  detail::CompensatedSum<Scalar> acc;
  for (Index j = 0; j < u.values.cols(); ++j)
    for (Index i = 0; i < u.values.rows(); ++i) acc.add(std::norm(u.values(i, j)));
  return std::sqrt(acc.value()) * u.grid.dxi();
}

/// Half-open axis-aligned rectangle [x1_lo, x1_hi) x [x2_lo, x2_hi).
struct Rectangle {
  double x1_lo = 0, x1_hi = 0, x2_lo = 0, x2_hi = 0;
};

/// L^2 norm over the samples whose coordinates fall in the rectangle.
template <typename Scalar>
Scalar restrict_norm(const BasicField2D<Scalar>& u, const Rectangle& r, Warnings* warnings = nullptr) {
  const auto& g = u.grid;
  const Scalar slack = 1e-12 * g.half_width;
  if (r.x1_lo < -g.half_width - slack || r.x2_lo < -g.half_width - slack || r.x1_hi > g.half_width + slack ||
      r.x2_hi > g.half_width + slack)
    throw InvalidInput("restrict_norm: rectangle must lie inside the box");
  detail::CompensatedSum<Scalar> acc;
  Index count = 0;
  for (Index j = 0; j < g.points_per_axis; ++j) {
    const Scalar x2 = g.x(j);
    if (x2 < r.x2_lo || x2 >= r.x2_hi) continue;
    for (Index i = 0; i < g.points_per_axis; ++i) {
      const Scalar x1 = g.x(i);
      if (x1 < r.x1_lo || x1 >= r.x1_hi) continue;
      acc.add(std::norm(u.values(i, j)));
      ++count;
    }
  }
  if (count == 0) {
    warn(warnings, "restrict_norm: rectangle contains no grid samples");
    return 0;
  }
  return std::sqrt(acc.value() * g.dx() * g.dx());
}

}  // namespace qml
