#include "qml/wavelets.hpp"

#include "qml/container_io.hpp"
#include "qml/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <memory>
#include <numbers>
#include <ostream>

namespace qml {
namespace {

const GaussLegendre& gauss10() {
  static const GaussLegendre rule(10);
  return rule;
}

struct SampledSpectrum {
  double c_f = 0;
  double d_omega = 0;
  std::vector<double> power;  // |f_hat(k d_omega)|^2 for k >= 0
};

SampledSpectrum sample_spectrum(const std::function<double(double)>& f, double radius,
                                const AdmissibilityOptions& options) {
  if (!(radius > 0)) throw InvalidInput("admissibility_constant: support radius must be positive");
  if (options.samples_per_unit < 8 || options.padding < 2)
    throw InvalidInput("admissibility_constant: resolution too coarse");
  const Index n_support = static_cast<Index>(std::ceil(2 * radius * options.samples_per_unit));
  const double dt = 2 * radius / static_cast<double>(n_support);
  const Index m = next_fast_size(static_cast<Index>(options.padding) * n_support);
  std::vector<std::complex<double>> in(m, 0.0), out(m);
  double m1 = 0;
  for (Index j = 0; j <= n_support; ++j) {
    const double t = -radius + static_cast<double>(j) * dt;
    const double weight = (j == 0 || j == n_support) ? 0.5 : 1.0;
    const double v = weight * f(t);
    in[j] = v;
    m1 += t * v * dt;
  }
  Eigen::FFT<double> fft;
  fft.fwd(out, in);
  const double d_omega = 2 * std::numbers::pi / (static_cast<double>(m) * dt);
  SampledSpectrum s;
  s.d_omega = d_omega;
  s.power.resize(m / 2);
  double acc = 0;
  for (Index k = 0; k < m / 2; ++k) {
    s.power[k] = std::norm(out[k]) * dt * dt;
    if (k > 0) {
      // |f_hat| is even for real f: positive and negative frequencies contribute equally.
      const double neg = std::norm(out[m - k]) * dt * dt;
      acc += (s.power[k] + neg) / (static_cast<double>(k) * d_omega);
    }
  }
  acc *= d_omega;
  // Trapezoid end correction for the kink |w| m1^2 at w = 0, one per side.
  acc += 2 * d_omega * d_omega / 12 * m1 * m1;
  s.c_f = acc;
  return s;
}

double plain_mean(const std::function<double(double)>& f, double radius, double* abs_integral) {
  const auto& rule = gauss10();
  *abs_integral = rule.integrate([&](double t) { return std::abs(f(t)); }, -radius, radius, 64);
  return rule.integrate(f, -radius, radius, 64);
}

}  // namespace

double admissibility_constant(const std::function<double(double)>& f, double support_radius,
                              const AdmissibilityOptions& options) {
  double abs_integral = 0;
  const double mean = plain_mean(f, support_radius, &abs_integral);
  if (std::abs(mean) > 1e-12 * std::max(abs_integral, 1e-300))
    throw InvalidInput("admissibility_constant: wavelet mean is not zero");
  return sample_spectrum(f, support_radius, options).c_f;
}

WaveletSpec WaveletSpec::from_function(std::string label, std::function<double(double)> f, double support,
                                       std::function<double(double)> antiderivative) {
  if (!f) throw InvalidInput("wavelet: mother function missing");
  double abs_integral = 0;
  const double mean = plain_mean(f, support, &abs_integral);
  if (!(abs_integral > 0)) throw InvalidInput("wavelet: mother function vanishes identically");
  if (std::abs(mean) > 1e-12 * abs_integral) throw InvalidInput("wavelet: mother function must have zero mean");
  WaveletSpec w;
  w.label_ = std::move(label);
  w.f_ = std::move(f);
  w.g_ = std::move(antiderivative);
  w.support_ = support;
  SampledSpectrum spectrum = sample_spectrum(w.f_, support, {});
  w.c_f_ = spectrum.c_f;
  w.power_step_ = spectrum.d_omega;
  w.power_ = std::make_shared<const std::vector<double>>(std::move(spectrum.power));
  if (!(w.c_f_ > 0) || !std::isfinite(w.c_f_)) throw InvalidInput("wavelet: admissibility constant not positive");
  return w;
}

WaveletSpec WaveletSpec::polynomial_bump() {
  return from_function(
      "t(1-t^2)^3",
      [](double t) {
        const double s = 1 - t * t;
        return t * s * s * s;
      },
      1.0,
      [](double t) {
        if (std::abs(t) >= 1) return 0.0;
        const double s = 1 - t * t;
        return -s * s * s * s / 8;
      });
}

std::complex<double> WaveletSpec::fourier(double w) const {
  const int panels = 8 + static_cast<int>(std::ceil(std::abs(w) * support_ / 2));
  return gauss10().integrate([&](double t) { return f_(t) * std::polar(1.0, -w * t); }, -support_, support_, panels);
}

double WaveletSpec::power(double w) const {
  const double pos = std::abs(w) / power_step_;
  const auto k = static_cast<size_t>(pos);
  if (k + 1 >= power_->size()) return 0.0;
  const double t = pos - static_cast<double>(k);
  return (1 - t) * (*power_)[k] + t * (*power_)[k + 1];
}

double WaveletSpec::autocorrelation(double tau) const {
  const double lo = std::max(-support_, tau - support_);
  const double hi = std::min(support_, tau + support_);
  if (hi <= lo) return 0.0;
  return gauss10().integrate([&](double t) { return f_(t) * f_(t - tau); }, lo, hi, 16);
}

std::vector<double> log_scale_grid(double a_min, double a_max, int per_decade) {
  if (!(a_min > 0) || !(a_max >= a_min)) throw InvalidInput("log_scale_grid: need 0 < a_min <= a_max");
  if (per_decade < 1) throw InvalidInput("log_scale_grid: per_decade must be positive");
  const double decades = std::log10(a_max / a_min);
  const int n = static_cast<int>(std::ceil(per_decade * decades - 1e-9));
  std::vector<double> grid;
  if (n == 0) return {a_min};
  for (int i = 0; i <= n; ++i) grid.push_back(a_min * std::pow(a_max / a_min, static_cast<double>(i) / n));
  grid.back() = a_max;
  return grid;
}

std::vector<double> default_scale_grid(const GridSpec& grid) {
  return log_scale_grid(std::max(2 * grid.dx(), grid.h), 4.0, 48);
}

CwtScale cwt_scale(const Field2D& v, const WaveletSpec& w, double a, const CwtOptions& options) {
  const auto& g = v.grid;
  const double dx = g.dx();
  if (!(a >= 2 * dx * (1 - 1e-12)))
    throw Refused("cwt_forward: scale " + std::to_string(a) + " is below 2 dx = " + std::to_string(2 * dx));
  if (!(options.b_step_factor > 0)) throw InvalidInput("cwt_forward: b_step_factor must be positive");
  const double half_width = g.half_width;
  const Index n = g.points_per_axis;
  CwtScale s;
  s.a = a;
  s.b_step = options.b_step_factor * a;
  s.b_start = -half_width;
  const Index rows = static_cast<Index>(std::floor(2 * half_width / s.b_step + 1e-9)) + 1;
  s.values = Eigen::MatrixXcd::Zero(rows, n);
  const double radius = w.support() * a;
  const double scale = dx / std::sqrt(a);
  parallel_for(0, rows, [&](Index r) {
    const double b = s.b(r);
    const Index lo = std::max<Index>(0, static_cast<Index>(std::ceil((b - radius + half_width) / dx)));
    const Index hi = std::min<Index>(n - 1, static_cast<Index>(std::floor((b + radius + half_width) / dx)));
    if (hi < lo) return;
    Eigen::VectorXd weights(hi - lo + 1);
    for (Index j = lo; j <= hi; ++j) weights[j - lo] = w((g.x(j) - b) / a);
    weights.array() -= weights.mean();
    s.values.row(r) = scale * (weights.transpose().cast<std::complex<double>>() * v.values.middleRows(lo, hi - lo + 1));
  });
  return s;
}

CwtCoefficients cwt_forward(const Field2D& v, const WaveletSpec& w, const std::vector<double>& a_grid,
                            const CwtOptions& options) {
  v.check_shape();
  if (a_grid.empty()) throw InvalidInput("cwt_forward: empty scale grid");
  if (!std::is_sorted(a_grid.begin(), a_grid.end())) throw InvalidInput("cwt_forward: scale grid must be increasing");
  CwtCoefficients x;
  x.grid = v.grid;
  for (double a : a_grid) x.scales.push_back(cwt_scale(v, w, a, options));
  return x;
}

namespace {

std::vector<double> log_trapezoid_weights(const std::vector<double>& a) {
  const size_t n = a.size();
  std::vector<double> wts(n, 0.0);
  for (size_t i = 0; i + 1 < n; ++i) {
    const double d = std::log(a[i + 1] / a[i]);
    wts[i] += 0.5 * d;
    wts[i + 1] += 0.5 * d;
  }
  return wts;
}

std::vector<double> scales_of(const CwtCoefficients& x) {
  std::vector<double> a;
  for (const auto& s : x.scales) a.push_back(s.a);
  return a;
}

}  // namespace

double scale_coverage(const std::vector<double>& a_grid, const WaveletSpec& w, double frequency) {
  if (a_grid.size() < 2) return 0.0;
  const auto wts = log_trapezoid_weights(a_grid);
  double acc = 0;
  for (size_t i = 0; i < a_grid.size(); ++i) acc += wts[i] * w.power(a_grid[i] * frequency);
  return 2 * acc / w.admissibility();
}

CwtSynthesis::CwtSynthesis(const GridSpec& grid, const WaveletSpec& w, std::vector<double> a_grid)
    : grid_(grid), wavelet_(&w), a_grid_(std::move(a_grid)), field_(grid) {
  if (a_grid_.size() < 2) throw InvalidInput("cwt_inverse: needs at least two scales");
  if (!std::is_sorted(a_grid_.begin(), a_grid_.end())) throw InvalidInput("cwt_inverse: scales must be increasing");
  weights_ = log_trapezoid_weights(a_grid_);
}

void CwtSynthesis::add(size_t index, const CwtScale& s) {
  if (index >= a_grid_.size() || std::abs(s.a - a_grid_[index]) > 1e-12 * s.a)
    throw InvalidInput("cwt_inverse: scale does not match the a-grid");
  const auto& w = *wavelet_;
  const Index n = grid_.points_per_axis;
  if (s.values.cols() != n) throw InvalidInput("cwt_inverse: coefficient width does not match the grid");
  const double radius = w.support() * s.a;
  const double coef = 2 / w.admissibility() * weights_[index] * std::pow(s.a, -1.5) * s.b_step;
  auto& out = field_.values;
  parallel_for(0, n, [&](Index i) {
    const double x1 = grid_.x(i);
    const Index lo = std::max<Index>(0, static_cast<Index>(std::ceil((x1 - radius - s.b_start) / s.b_step)));
    const Index hi =
        std::min<Index>(s.values.rows() - 1, static_cast<Index>(std::floor((x1 + radius - s.b_start) / s.b_step)));
    for (Index r = lo; r <= hi; ++r) {
      const double f = w((x1 - s.b(r)) / s.a);
      if (f != 0.0) out.row(i) += (coef * f) * s.values.row(r);
    }
  });
}

CwtReconstruction CwtSynthesis::finish() const {
  CwtReconstruction result{field_, 0.0, {}};
  const Index n = grid_.points_per_axis;
  // The discrete synthesis multiplies x1-frequency w by m(w); undo it on the output to estimate the loss.
  Eigen::VectorXd coverage(n);
  for (Index k = 0; k < n; ++k) {
    const Index signed_k = k < n / 2 ? k : k - n;
    coverage[k] = scale_coverage(a_grid_, *wavelet_, std::numbers::pi * static_cast<double>(signed_k) / grid_.half_width);
  }
  double missing = 0, total = 0;
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> col(n), spec(n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < n; ++i) col[i] = field_.values(i, j);
    fft.fwd(spec, col);
    for (Index k = 0; k < n; ++k) {
      // Bins with almost no coverage (the x1-constant mode, near-Nyquist) are not amplified.
      const std::complex<double> estimate = coverage[k] >= 0.05 ? spec[k] / coverage[k] : spec[k];
      missing += std::norm((1 - coverage[k]) * estimate);
      total += std::norm(estimate);
    }
  }
  result.coverage_deficit = total > 0 ? std::sqrt(missing / total) : 0.0;
  if (result.coverage_deficit > 1e-3)
    result.warnings.push_back("cwt_inverse: scale grid misses an estimated " +
                              std::to_string(result.coverage_deficit) + " of the signal (relative L2)");
  return result;
}

CwtReconstruction cwt_inverse(const CwtCoefficients& coefficients, const WaveletSpec& w) {
  const auto& g = coefficients.grid;
  CwtSynthesis synthesis(g, w, scales_of(coefficients));
  for (size_t i = 0; i < coefficients.scales.size(); ++i) {
    if (coefficients.domain == CoefficientDomain::Position) {
      synthesis.add(i, coefficients.scales[i]);
      continue;
    }
    CwtScale s = coefficients.scales[i];
    for (Index r = 0; r < s.values.rows(); ++r) {
      const Eigen::VectorXcd row = s.values.row(r).transpose();
      s.values.row(r) = semiclassical_fft_1d<double>(row, g.half_width, g.h, g.center[1], true).transpose();
    }
    synthesis.add(i, s);
  }
  return synthesis.finish();
}

CwtReconstruction cwt_round_trip(const Field2D& v, const WaveletSpec& w, const std::vector<double>& a_grid,
                                 const CwtOptions& options) {
  CwtSynthesis synthesis(v.grid, w, a_grid);
  for (size_t i = 0; i < a_grid.size(); ++i) synthesis.add(i, cwt_scale(v, w, a_grid[i], options));
  return synthesis.finish();
}

CwtScale spectral_scale(const CwtScale& s, const GridSpec& grid) {
  CwtScale out = s;
  parallel_for(0, s.values.rows(), [&](Index r) {
    const Eigen::VectorXcd row = s.values.row(r).transpose();
    out.values.row(r) = semiclassical_fft_1d<double>(row, grid.half_width, grid.h, grid.center[1]).transpose();
  });
  return out;
}

CwtCoefficients spectral_coefficients(const CwtCoefficients& x) {
  if (x.domain == CoefficientDomain::Spectral) return x;
  CwtCoefficients out = x;
  out.domain = CoefficientDomain::Spectral;
  for (auto& s : out.scales) s = spectral_scale(s, x.grid);
  return out;
}

namespace {
double smooth_step(double t) {
  if (t <= 0) return 0;
  if (t >= 1) return 1;
  const double a = std::exp(-1 / t);
  const double b = std::exp(-1 / (1 - t));
  return a / (a + b);
}
}  // namespace

double DyadicPartition::plateau(double s) { return 1 - smooth_step((std::abs(s) - 1) / 0.5); }

DyadicPartition::DyadicPartition(double h, int k) : h_(h), k_(k) {
  if (!(h > 0 && h <= 1)) throw InvalidInput("DyadicPartition: h must lie in (0, 1]");
  if (k < 1) throw InvalidInput("DyadicPartition: k must be >= 1");
  const double base = std::pow(h, 1.0 / (k + 1));
  inv_scale_ = 1 / base;
  j_max_ = 0;
  while (std::ldexp(base, j_max_) < 1) ++j_max_;
}

double DyadicPartition::weight(int j, double xi2) const {
  if (j < 0) throw InvalidInput("DyadicPartition: band index must be nonnegative");
  const double s = inv_scale_ * std::abs(xi2);
  return j == 0 ? chi0(s) : chi(std::ldexp(s, -j));
}

CwtScale dyadic_project(const CwtScale& s, const GridSpec& grid, const DyadicPartition& part, int j) {
  if (j < 0 || j > part.max_band())
    throw InvalidInput("dyadic_project: band " + std::to_string(j) + " outside [0, " + std::to_string(part.max_band()) + "]");
  CwtScale out = s;
  for (Index m = 0; m < s.values.cols(); ++m) out.values.col(m) *= part.weight(j, grid.xi(1, m));
  return out;
}

CwtCoefficients dyadic_project(const CwtCoefficients& x, const DyadicPartition& part, int j) {
  if (x.domain != CoefficientDomain::Spectral) throw InvalidInput("dyadic_project: coefficients must be spectral");
  CwtCoefficients out = x;
  out.band = j;
  for (auto& s : out.scales) s = dyadic_project(s, x.grid, part, j);
  return out;
}

double coefficient_norm(const CwtScale& s, const GridSpec& grid, CoefficientDomain domain) {
  const double cell = domain == CoefficientDomain::Spectral ? grid.dxi() : grid.dx();
  detail::CompensatedSum<double> acc;
  for (Index c = 0; c < s.values.cols(); ++c)
    for (Index r = 0; r < s.values.rows(); ++r) acc.add(std::norm(s.values(r, c)));
  return std::sqrt(acc.value() * s.b_step * cell);
}

double coefficient_norm(const CwtCoefficients& x, double fixed_a, Warnings* warnings) {
  if (x.scales.empty()) throw InvalidInput("coefficient_norm: no scales");
  size_t best = 0;
  for (size_t i = 1; i < x.scales.size(); ++i)
    if (std::abs(std::log(x.scales[i].a / fixed_a)) < std::abs(std::log(x.scales[best].a / fixed_a))) best = i;
  if (std::abs(x.scales[best].a - fixed_a) > 1e-9 * fixed_a)
    warn(warnings, "coefficient_norm: scale " + std::to_string(fixed_a) + " not on the grid, using " +
                       std::to_string(x.scales[best].a));
  return coefficient_norm(x.scales[best], x.grid, x.domain);
}

CoefficientDecayReport check_coefficient_decay(const std::vector<CoefficientSample>& samples, int m) {
  CoefficientDecayReport report;
  const CoefficientSample* ref = nullptr;
  for (const auto& s : samples)
    if (s.j == 0 && (ref == nullptr || std::abs(std::log(s.a)) < std::abs(std::log(ref->a)))) ref = &s;
  if (ref == nullptr) throw InvalidInput("check_coefficient_decay: no j = 0 sample");
  const auto shape = [m](const CoefficientSample& s) {
    return std::pow(std::min(s.a, 1.0), 1.5) * std::ldexp(1.0, -m * s.j);
  };
  report.reference_a = ref->a;
  report.constant = ref->norm / shape(*ref);
  if (!(report.constant > 0)) return report;
  for (const auto& s : samples) {
    const double ratio = s.norm / (report.constant * shape(s));
    if (ratio > report.worst_ratio) {
      report.worst_ratio = ratio;
      report.worst_a = s.a;
      report.worst_j = s.j;
    }
  }
  report.pass = report.worst_ratio <= 2.0;
  return report;
}

void write_coefficients(std::ostream& out, const CwtCoefficients& x) {
  io::write_magic(out, "QMC1");
  io::write_i64(out, x.grid.points_per_axis);
  io::write_f64(out, x.grid.half_width);
  io::write_f64(out, x.grid.h);
  io::write_f64(out, x.grid.center[0]);
  io::write_f64(out, x.grid.center[1]);
  io::write_i64(out, x.domain == CoefficientDomain::Spectral ? 1 : 0);
  io::write_i64(out, x.band ? *x.band : -1);
  io::write_i64(out, static_cast<std::int64_t>(x.scales.size()));
  for (const auto& s : x.scales) {
    io::write_f64(out, s.a);
    io::write_f64(out, s.b_start);
    io::write_f64(out, s.b_step);
    io::write_i64(out, s.values.rows());
    for (Index r = 0; r < s.values.rows(); ++r)
      for (Index c = 0; c < s.values.cols(); ++c) io::write_complex(out, s.values(r, c));
  }
  if (!out) throw Error("write_coefficients: stream failure");
}

CwtCoefficients read_coefficients(std::istream& in) {
  io::expect_magic(in, "QMC1");
  CwtCoefficients x;
  const auto n = io::read_i64(in);
  if (n < 16 || n > (1 << 16)) throw InvalidInput("read_coefficients: implausible grid size");
  x.grid.points_per_axis = n;
  x.grid.half_width = io::read_f64(in);
  x.grid.h = io::read_f64(in);
  x.grid.center[0] = io::read_f64(in);
  x.grid.center[1] = io::read_f64(in);
  x.grid.validate();
  x.domain = io::read_i64(in) == 1 ? CoefficientDomain::Spectral : CoefficientDomain::Position;
  const auto band = io::read_i64(in);
  if (band >= 0) x.band = static_cast<int>(band);
  const auto count = io::read_i64(in);
  if (count < 0 || count > 100000) throw InvalidInput("read_coefficients: implausible scale count");
  for (std::int64_t i = 0; i < count; ++i) {
    CwtScale s;
    s.a = io::read_f64(in);
    s.b_start = io::read_f64(in);
    s.b_step = io::read_f64(in);
    const auto rows = io::read_i64(in);
    if (rows < 0 || rows > (1 << 24)) throw InvalidInput("read_coefficients: implausible row count");
    s.values.resize(rows, n);
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < n; ++c) s.values(r, c) = io::read_complex(in);
    x.scales.push_back(std::move(s));
  }
  return x;
}

}  // namespace qml
