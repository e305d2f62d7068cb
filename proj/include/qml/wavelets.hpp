#pragma once

#include "qml/grid.hpp"

#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace qml {

struct AdmissibilityOptions {
  /// Samples of the mother wavelet per unit length.
  int samples_per_unit = 512;
  /// Zero-padded period as a multiple of the support length 2R; sets the frequency spacing.
  int padding = 256;
};

/// C_f = integral of |f_hat(w)|^2 / |w| over the real line, f_hat(w) = integral f(t) e^{-i w t} dt.
/// Computed from an FFT of the zero-padded samples; the kink of the integrand at w = 0 gets
/// the trapezoid end correction from f_hat(w) ~ -i w m1, m1 = integral t f(t) dt.
double admissibility_constant(const std::function<double(double)>& f, double support_radius,
                              const AdmissibilityOptions& options = {});

/// Mother wavelet supported in [-support, support] with zero mean.
class WaveletSpec {
 public:
  /// f(t) = t (1 - t^2)^3 on [-1, 1], with antiderivative g(t) = -(1 - t^2)^4 / 8.
  static WaveletSpec polynomial_bump();
  /// Checks the mean and computes C_f; throws InvalidInput when the mean is not zero.
  static WaveletSpec from_function(std::string label, std::function<double(double)> f, double support,
                                   std::function<double(double)> antiderivative = {});

  const std::string& label() const { return label_; }
  double support() const { return support_; }
  double operator()(double t) const { return std::abs(t) >= support_ ? 0.0 : f_(t); }
  /// g with g' = f, when known.
  const std::function<double(double)>& antiderivative() const { return g_; }
  double admissibility() const { return c_f_; }
  /// integral of f(t) e^{-i w t} dt.
  std::complex<double> fourier(double w) const;
  /// |f_hat(w)|^2 interpolated from the sampled spectrum used for C_f; zero beyond its band.
  double power(double w) const;
  /// integral of f(t) f(t - tau) dt.
  double autocorrelation(double tau) const;

 private:
  std::string label_;
  std::function<double(double)> f_;
  std::function<double(double)> g_;
  double support_ = 1;
  double c_f_ = 0;
  double power_step_ = 0;
  std::shared_ptr<const std::vector<double>> power_;
};

/// `per_decade` log-spaced scales from a_min to a_max inclusive.
std::vector<double> log_scale_grid(double a_min, double a_max, int per_decade = 48);
/// [max(2 dx, h), 4] at 48 scales per decade.
std::vector<double> default_scale_grid(const GridSpec& grid);

enum class CoefficientDomain { Position, Spectral };

/// Coefficients at one scale: rows are translations b_start + i b_step, columns are x2 samples
/// (Position) or x2-lattice frequencies (Spectral).
struct CwtScale {
  double a = 1;
  double b_start = 0;
  double b_step = 0.25;
  Eigen::MatrixXcd values;

  double b(Index i) const { return b_start + static_cast<double>(i) * b_step; }
};

struct CwtCoefficients {
  GridSpec grid;
  std::vector<CwtScale> scales;
  CoefficientDomain domain = CoefficientDomain::Position;
  std::optional<int> band;
};

struct CwtOptions {
  /// Translation spacing as a fraction of the scale.
  double b_step_factor = 0.25;
};

/// X(a, b, x2) = a^{-1/2} integral f((y - b)/a) v(y, x2) dy for one scale, as a Riemann sum.
/// The sampled wavelet has its discrete mean removed so constants in x1 map to exactly zero.
CwtScale cwt_scale(const Field2D& v, const WaveletSpec& w, double a, const CwtOptions& options = {});
CwtCoefficients cwt_forward(const Field2D& v, const WaveletSpec& w, const std::vector<double>& a_grid,
                            const CwtOptions& options = {});

struct CwtReconstruction {
  Field2D field;
  /// Estimated relative L^2 error from scales outside the a-grid.
  double coverage_deficit = 0;
  Warnings warnings;
};

/// Synthesis (2 / C_f) integral a^{-5/2} X(a, b, x2) f((x1 - b)/a) da db over the positive scales of X
/// (trapezoid in log a, Riemann sum in b).
CwtReconstruction cwt_inverse(const CwtCoefficients& x, const WaveletSpec& w);

/// Scale-by-scale synthesis so only one scale of coefficients needs to be held at a time.
class CwtSynthesis {
 public:
  CwtSynthesis(const GridSpec& grid, const WaveletSpec& w, std::vector<double> a_grid);
  /// Adds the contribution of scale a_grid[index]; `s` must be in the position domain.
  void add(size_t index, const CwtScale& s);
  /// Reconstruction so far, with the coverage estimate computed from the full a-grid.
  CwtReconstruction finish() const;

 private:
  GridSpec grid_;
  const WaveletSpec* wavelet_;
  std::vector<double> a_grid_;
  std::vector<double> weights_;
  Field2D field_;
};

/// cwt_inverse(cwt_forward(v)) computed one scale at a time.
CwtReconstruction cwt_round_trip(const Field2D& v, const WaveletSpec& w, const std::vector<double>& a_grid,
                                 const CwtOptions& options = {});

/// Fraction of a frequency-w signal that the discrete a-grid synthesis reproduces.
double scale_coverage(const std::vector<double>& a_grid, const WaveletSpec& w, double frequency);

/// 1-D semiclassical transform in x2 of every (a, b) row.
CwtCoefficients spectral_coefficients(const CwtCoefficients& x);
CwtScale spectral_scale(const CwtScale& s, const GridSpec& grid);

/// Smooth frequency partition in xi2 adapted to h^{1/(k+1)}.
class DyadicPartition {
 public:
  DyadicPartition(double h, int k);

  double h() const { return h_; }
  int k() const { return k_; }
  /// Smallest J with 2^J h^{1/(k+1)} >= 1.
  int max_band() const { return j_max_; }

  /// 1 on |s| <= 1, 0 on |s| >= 3/2, smooth and monotone in between.
  static double plateau(double s);
  static double chi0(double s) { return plateau(s); }
  /// plateau(s) - plateau(2 s): supported in 1/2 <= |s| <= 3/2.
  static double chi(double s) { return plateau(s) - plateau(2 * s); }

  /// Weight of band j at xi2: chi0(h^{-1/(k+1)} xi2) for j = 0, chi(2^{-j} h^{-1/(k+1)} |xi2|) otherwise.
  double weight(int j, double xi2) const;

 private:
  double h_;
  int k_;
  int j_max_;
  double inv_scale_;
};

CwtCoefficients dyadic_project(const CwtCoefficients& x, const DyadicPartition& part, int j);
CwtScale dyadic_project(const CwtScale& s, const GridSpec& grid, const DyadicPartition& part, int j);

/// L^2_{b, x2 or xi2} norm at the given scale; an off-grid scale uses the nearest one with a warning.
double coefficient_norm(const CwtCoefficients& x, double fixed_a, Warnings* warnings = nullptr);
double coefficient_norm(const CwtScale& s, const GridSpec& grid, CoefficientDomain domain);

struct CoefficientSample {
  int j = 0;
  double a = 1;
  double norm = 0;
};

struct CoefficientDecayReport {
  double constant = 0;
  double reference_a = 1;
  /// Largest norm / (C * bound shape) over the samples.
  double worst_ratio = 0;
  int worst_j = 0;
  double worst_a = 0;
  bool pass = false;
};

/// Fits C at the sample nearest (a = 1, j = 0) and checks norm <= 2 C min(a, 1)^{3/2} 2^{-j m}
/// for every sample (a^{3/2} decay below a = 1, flat above).
CoefficientDecayReport check_coefficient_decay(const std::vector<CoefficientSample>& samples, int m = 1);

/// Binary container "QMC1": N, L, h, center, domain, band, scale count, then per scale
/// a, b_start, b_step, row count and the row-major complex values.
void write_coefficients(std::ostream& out, const CwtCoefficients& x);
CwtCoefficients read_coefficients(std::istream& in);

}  // namespace qml
