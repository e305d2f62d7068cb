#pragma once

#include "qml/propagator.hpp"
#include "qml/wavelets.hpp"

#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace qml {

/// Exact fraction with 64-bit parts, kept in lowest terms with a positive denominator.
class Rational {
 public:
  Rational(std::int64_t n = 0, std::int64_t d = 1);

  std::int64_t num() const { return num_; }
  std::int64_t den() const { return den_; }
  double to_double() const { return static_cast<double>(num_) / static_cast<double>(den_); }
  std::string str() const;

  friend Rational operator+(const Rational& a, const Rational& b);
  friend Rational operator-(const Rational& a, const Rational& b);
  friend Rational operator*(const Rational& a, const Rational& b);
  friend Rational operator/(const Rational& a, const Rational& b);
  friend Rational operator-(const Rational& a) { return Rational(-a.num_, a.den_); }
  friend bool operator==(const Rational& a, const Rational& b) { return a.num_ == b.num_ && a.den_ == b.den_; }
  friend bool operator<(const Rational& a, const Rational& b);
  friend bool operator<=(const Rational& a, const Rational& b) { return !(b < a); }

 private:
  std::int64_t num_;
  std::int64_t den_;
};

/// p in [2, inf], k >= 1, j >= 0.
struct ExponentQuery {
  double p = 2;
  int k = 1;
  int j = 0;
  void validate() const;
};

/// The exponents below are written in r = 1/p, so p = inf is r = 0 and rational p gives exact values.
/// Each has two branches meeting at p = 6; `high` is the 6 <= p <= inf formula, `low` the 2 <= p <= 6 one.
struct BranchValues {
  Rational high;
  Rational low;
};

/// (1/2 - 2/p) - (1/2 - 3/p) / (k + 1) for p >= 6, 1/4 - 1/(2p) for p <= 6.
BranchValues delta_branches(const Rational& inv_p, int k);
/// j (1/2 - 3/p) for p >= 6, 0 for p <= 6.
BranchValues mu_branches(const Rational& inv_p, int j);
/// 1/2 - 2/p for p >= 6, 1/4 - 1/(2p) for p <= 6.
BranchValues sogge_branches(const Rational& inv_p);

Rational delta_exact(const Rational& inv_p, int k);
Rational mu_exact(const Rational& inv_p, int j);
Rational sogge_exact(const Rational& inv_p);
/// Growth exponent 1/2 - 2/p - (1/2 - 3/p) / (k + 1) of the T^h_alpha example at alpha = 1 - 2/(k+1); p >= 6.
Rational t_alpha_lower_exact(const Rational& inv_p, int k);

/// Floating versions; p may be +infinity. p < 2 (or p < 6 for t_alpha_lower_exponent) throws DomainError.
double delta_p_k(double p, int k);
double mu_p_j(double p, int j);
double sogge_delta(double p);
double t_alpha_lower_exponent(double p, int k);

struct ExponentFit {
  double slope = 0;
  double intercept = 0;
  /// max |log value - (intercept + slope log h)|.
  double residual = 0;
  std::vector<double> h_values;
  double p = std::numeric_limits<double>::quiet_NaN();
  std::string quantity;
};

/// Least-squares line through (log h, log value). Needs >= 3 rows with distinct h and positive values.
ExponentFit fit_power_law(const std::vector<std::pair<double, double>>& rows, std::string quantity = {},
                          double p = std::numeric_limits<double>::quiet_NaN());

enum class KernelRegime { SmallSeparation, LargeSeparation };
std::string to_string(KernelRegime r);

/// 2^{-2j} h^{1 - 2/(k+1)}: separations at or below it are in the small-separation regime.
double kernel_threshold(double h, int k, int j);
/// a 2^j h^{-1 + 1/(k+1)} below the threshold, a h^{-1/2} t^{-1/2} above.
double kernel_bound(double h, int k, int j, double a, double t);

struct KernelSample {
  int j = 0;
  double a = 1;
  /// x1 - z1.
  double t = 0;
  double h = 0;
  int k = 1;
  /// sup over the sampled (x2, z2) of |K_j|.
  double sup = 0;
  KernelRegime regime = KernelRegime::SmallSeparation;
};

struct KernelOptions {
  /// Quadrature points per local period 2 pi h / |d_xi phase| of the xi2 integrand; below 8 is refused.
  int points_per_period = 16;
  /// General tables: the kernel uses slices x1 = z1 + t; z1 defaults to the first tabulated slice.
  std::optional<double> z1;
  /// General tables: at most this many x2 (and z2) points per axis.
  Index max_points = 48;
};

/// sup_{x2, z2} |K_j| with K_j = (2 pi h)^{-1} integral e^{i(psi(x1, x2, xi) - psi(z1, z2, xi))/h}
/// f((x1 - b)/a) f((z1 - b)/a) w_j(xi)^2 dxi db and w_j the band weight of `part`. The b integral is
/// a R_f(t / a) with R_f the wavelet autocorrelation. Translation-invariant tables integrate in xi
/// with an adaptive trapezoid rule and take the sup over s = x2 - z2; General tables use the
/// tabulated lattice and refuse when it has fewer than 8 points per period. Requires 0 <= t <= 1.
KernelSample kernel_sample(const PhaseTable& phase, const WaveletSpec& w, const DyadicPartition& part, int j,
                           double a, double t, const KernelOptions& options = {});

struct KernelRegimeFit {
  KernelRegime regime = KernelRegime::SmallSeparation;
  Index count = 0;
  /// Geometric mean of sup / bound.
  double constant = 0;
  double min_ratio = 0;
  double max_ratio = 0;
};

struct KernelBoundReport {
  std::vector<KernelRegimeFit> regimes;
  /// No samples at all, or one regime has no samples.
  bool inconclusive = false;
  /// Every sample ratio lies within a factor 2 of its regime constant.
  bool pass = false;
  std::string detail;
};

/// Fits one constant per regime (geometric mean of sup / bound, samples with sup = 0 skipped) and passes
/// when every ratio is within [C/2, 2C]. With `require_both_regimes` an empty regime makes the report
/// inconclusive (and not passing).
KernelBoundReport kernel_bound_check(const std::vector<KernelSample>& samples, bool require_both_regimes = true);

}  // namespace qml
