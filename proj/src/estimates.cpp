#include "qml/estimates.hpp"

#include "qml/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace qml {

namespace {

using Wide = __int128;

Rational reduce(Wide n, Wide d) {
  if (d == 0) throw DomainError("rational division by zero");
  if (d < 0) {
    n = -n;
    d = -d;
  }
  Wide a = n < 0 ? -n : n, b = d;
  while (b != 0) {
    const Wide r = a % b;
    a = b;
    b = r;
  }
  if (a > 1) {
    n /= a;
    d /= a;
  }
  constexpr Wide lim = std::numeric_limits<std::int64_t>::max();
  if (n > lim || n < -lim || d > lim) throw DomainError("rational overflow");
  return Rational(static_cast<std::int64_t>(n), static_cast<std::int64_t>(d));
}

void check_inv_p(const Rational& r) {
  if (r < Rational(0) || Rational(1, 2) < r) throw DomainError("exponent: p must lie in [2, inf]");
}

void check_order(int k) {
  if (k < 1) throw InvalidInput("exponent: k must be >= 1");
}

Rational inv(double p) {
  if (std::isnan(p) || p < 2) throw DomainError("exponent: p must lie in [2, inf]");
  if (std::isinf(p)) return Rational(0);
  // Integers and halves are exact; other p go through double arithmetic anyway.
  if (p == std::floor(p) && p < 1e15) return Rational(1, static_cast<std::int64_t>(p));
  if (2 * p == std::floor(2 * p) && p < 1e15) return Rational(2, static_cast<std::int64_t>(2 * p));
  return Rational(0);
}

bool exact_p(double p) { return std::isinf(p) || ((2 * p == std::floor(2 * p)) && p < 1e15); }

}  // namespace

Rational::Rational(std::int64_t n, std::int64_t d) : num_(n), den_(d) {
  if (d == 0) throw DomainError("rational with zero denominator");
  if (d < 0 || std::gcd(n, d) != 1) *this = reduce(n, d);
}

std::string Rational::str() const { return den_ == 1 ? std::to_string(num_) : std::to_string(num_) + "/" + std::to_string(den_); }

Rational operator+(const Rational& a, const Rational& b) {
  return reduce(Wide(a.num_) * b.den_ + Wide(b.num_) * a.den_, Wide(a.den_) * b.den_);
}
Rational operator-(const Rational& a, const Rational& b) { return a + (-b); }
Rational operator*(const Rational& a, const Rational& b) { return reduce(Wide(a.num_) * b.num_, Wide(a.den_) * b.den_); }
Rational operator/(const Rational& a, const Rational& b) {
  if (b.num_ == 0) throw DomainError("rational division by zero");
  return reduce(Wide(a.num_) * b.den_, Wide(a.den_) * b.num_);
}
bool operator<(const Rational& a, const Rational& b) { return Wide(a.num_) * b.den_ < Wide(b.num_) * a.den_; }

void ExponentQuery::validate() const {
  if (std::isnan(p) || p < 2) throw DomainError("ExponentQuery: p must lie in [2, inf]");
  check_order(k);
  if (j < 0) throw InvalidInput("ExponentQuery: j must be >= 0");
}

BranchValues delta_branches(const Rational& r, int k) {
  check_inv_p(r);
  check_order(k);
  const Rational half(1, 2);
  return {(half - Rational(2) * r) - (half - Rational(3) * r) / Rational(k + 1), Rational(1, 4) - r / Rational(2)};
}

BranchValues mu_branches(const Rational& r, int j) {
  check_inv_p(r);
  if (j < 0) throw InvalidInput("exponent: j must be >= 0");
  return {Rational(j) * (Rational(1, 2) - Rational(3) * r), Rational(0)};
}

BranchValues sogge_branches(const Rational& r) {
  check_inv_p(r);
  return {Rational(1, 2) - Rational(2) * r, Rational(1, 4) - r / Rational(2)};
}

namespace {
bool high_branch(const Rational& r) { return r <= Rational(1, 6); }
}  // namespace

Rational delta_exact(const Rational& r, int k) {
  const auto b = delta_branches(r, k);
  return high_branch(r) ? b.high : b.low;
}
Rational mu_exact(const Rational& r, int j) {
  const auto b = mu_branches(r, j);
  return high_branch(r) ? b.high : b.low;
}
Rational sogge_exact(const Rational& r) {
  const auto b = sogge_branches(r);
  return high_branch(r) ? b.high : b.low;
}
Rational t_alpha_lower_exact(const Rational& r, int k) {
  check_inv_p(r);
  check_order(k);
  if (Rational(1, 6) < r) throw DomainError("t_alpha_lower_exponent: p must be >= 6");
  const Rational half(1, 2);
  return half - Rational(2) * r - (half - Rational(3) * r) / Rational(k + 1);
}

double delta_p_k(double p, int k) {
  check_order(k);
  if (exact_p(p)) return delta_exact(inv(p), k).to_double();
  inv(p);
  const double r = 1 / p;
  return p >= 6 ? (0.5 - 2 * r) - (0.5 - 3 * r) / (k + 1) : 0.25 - r / 2;
}

double mu_p_j(double p, int j) {
  if (j < 0) throw InvalidInput("exponent: j must be >= 0");
  if (exact_p(p)) return mu_exact(inv(p), j).to_double();
  inv(p);
  return p >= 6 ? j * (0.5 - 3 / p) : 0.0;
}

double sogge_delta(double p) {
  if (exact_p(p)) return sogge_exact(inv(p)).to_double();
  inv(p);
  return p >= 6 ? 0.5 - 2 / p : 0.25 - 0.5 / p;
}

double t_alpha_lower_exponent(double p, int k) {
  check_order(k);
  if (std::isnan(p) || p < 6) throw DomainError("t_alpha_lower_exponent: p must be >= 6");
  if (exact_p(p)) return t_alpha_lower_exact(inv(p), k).to_double();
  const double r = 1 / p;
  return 0.5 - 2 * r - (0.5 - 3 * r) / (k + 1);
}

ExponentFit fit_power_law(const std::vector<std::pair<double, double>>& rows, std::string quantity, double p) {
  if (rows.size() < 3) throw InvalidInput("fit_power_law: need at least 3 rows");
  ExponentFit fit;
  fit.quantity = std::move(quantity);
  fit.p = p;
  double mx = 0, my = 0;
  const double n = static_cast<double>(rows.size());
  for (const auto& [h, v] : rows) {
    if (!(h > 0) || !std::isfinite(h)) throw InvalidInput("fit_power_law: h must be positive");
    if (!(v > 0) || !std::isfinite(v)) throw DomainError("fit_power_law: values must be positive and finite");
    fit.h_values.push_back(h);
    mx += std::log(h) / n;
    my += std::log(v) / n;
  }
  double sxx = 0, sxy = 0;
  for (const auto& [h, v] : rows) {
    sxx += (std::log(h) - mx) * (std::log(h) - mx);
    sxy += (std::log(h) - mx) * (std::log(v) - my);
  }
  if (!(sxx > 0)) throw InvalidInput("fit_power_law: h values must not all coincide");
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  for (const auto& [h, v] : rows)
    fit.residual = std::max(fit.residual, std::abs(std::log(v) - fit.intercept - fit.slope * std::log(h)));
  return fit;
}

std::string to_string(KernelRegime r) { return r == KernelRegime::SmallSeparation ? "small_sep" : "large_sep"; }

double kernel_threshold(double h, int k, int j) { return std::ldexp(std::pow(h, 1.0 - 2.0 / (k + 1)), -2 * j); }

double kernel_bound(double h, int k, int j, double a, double t) {
  if (t <= kernel_threshold(h, k, j)) return a * std::ldexp(std::pow(h, -1.0 + 1.0 / (k + 1)), j);
  return a / std::sqrt(h * t);
}

namespace {

struct Interval {
  double lo, hi;
};

// Support of w_j^2 in xi2.
std::vector<Interval> band_support(const DyadicPartition& part, int j) {
  const double s = std::pow(part.h(), 1.0 / (part.k() + 1));
  if (j == 0) return {{-1.5 * s, 1.5 * s}};
  const double c = std::ldexp(s, j);
  return {{-1.5 * c, -0.5 * c}, {0.5 * c, 1.5 * c}};
}

double ti_kernel_sup(const GraphFunction& a, const DyadicPartition& part, int j, double t, int ppp) {
  const double h = part.h();
  const auto support = band_support(part, j);
  double xi_abs = 0, width = 0, slope_lo = std::numeric_limits<double>::infinity(), slope_hi = -slope_lo;
  for (const auto& iv : support) {
    xi_abs = std::max({xi_abs, std::abs(iv.lo), std::abs(iv.hi)});
    width += iv.hi - iv.lo;
    for (int i = 0; i <= 200; ++i) {
      const double d = a.d_xi(0.0, 0.0, iv.lo + (iv.hi - iv.lo) * i / 200);
      slope_lo = std::min(slope_lo, d);
      slope_hi = std::max(slope_hi, d);
    }
  }
  // |I(s)| peaks near the stationary values s = -t a'(xi); I has s-bandwidth xi_abs / h.
  const double pad = 8 * M_PI * h / width;
  const double s_lo = -t * slope_hi - pad, s_hi = -t * slope_lo + pad;
  const double ds = M_PI * h / (4 * xi_abs);
  const auto ns = static_cast<Index>(std::ceil((s_hi - s_lo) / ds)) + 1;
  const double s_abs = std::max(std::abs(s_lo), std::abs(s_hi));
  const double dxi = 2 * M_PI * h / (ppp * (s_abs + t * std::max(std::abs(slope_lo), std::abs(slope_hi)) + 1e-300));

  std::vector<double> xs;
  std::vector<std::complex<double>> g;
  for (const auto& iv : support) {
    const auto n = static_cast<Index>(std::ceil((iv.hi - iv.lo) / dxi));
    const double step = (iv.hi - iv.lo) / static_cast<double>(n);
    for (Index m = 1; m < n; ++m) {
      const double xi = iv.lo + step * static_cast<double>(m);
      const double w = part.weight(j, xi);
      if (w == 0) continue;
      xs.push_back(xi);
      g.push_back(step * w * w * std::polar(1.0, t * a(0.0, 0.0, xi) / h) / (2 * M_PI * h));
    }
  }
  const auto value = [&](double s) {
    std::complex<double> acc = 0;
    for (size_t m = 0; m < xs.size(); ++m) acc += g[m] * std::polar(1.0, s * xs[m] / h);
    return std::abs(acc);
  };
  std::vector<double> vals(ns);
  parallel_for(0, ns, [&](Index i) { vals[i] = value(s_lo + ds * static_cast<double>(i)); });
  // Golden-section refinement around the largest grid values.
  std::vector<Index> order(ns);
  std::iota(order.begin(), order.end(), 0);
  const Index top = std::min<Index>(5, ns);
  std::partial_sort(order.begin(), order.begin() + top, order.end(), [&](Index p, Index q) { return vals[p] > vals[q]; });
  std::vector<double> best(top);
  parallel_for(0, top, [&](Index r) {
    double lo = s_lo + ds * static_cast<double>(order[r] - 1), hi = lo + 2 * ds;
    const double phi = (std::sqrt(5.0) - 1) / 2;
    double c = hi - phi * (hi - lo), d = lo + phi * (hi - lo), fc = value(c), fd = value(d);
    for (int it = 0; it < 40; ++it) {
      if (fc > fd) {
        hi = d;
        d = c;
        fd = fc;
        c = hi - phi * (hi - lo);
        fc = value(c);
      } else {
        lo = c;
        c = d;
        fc = fd;
        d = lo + phi * (hi - lo);
        fd = value(d);
      }
    }
    best[r] = std::max({vals[order[r]], fc, fd});
  });
  return *std::max_element(best.begin(), best.end());
}

double general_kernel_sup(const PhaseTable& table, const DyadicPartition& part, int j, double t,
                          const KernelOptions& options) {
  const double h = part.h();
  const GridSpec& g = table.grid();
  const double z1 = options.z1 ? *options.z1 : table.slices().front();
  const size_t nz = table.slice_index(z1), nx = table.slice_index(z1 + t);
  const IndexRange yw = table.y_window(), xw = table.xi_window();
  const Index stride = std::max<Index>(1, (yw.size() + options.max_points - 1) / options.max_points);
  std::vector<Index> ys;
  for (Index j2 = yw.begin; j2 < yw.end; j2 += stride) ys.push_back(j2);
  const double dxi = g.dxi();
  const auto ny = static_cast<Index>(ys.size());
  std::vector<double> sup(ny * ny, 0.0);
  std::vector<char> under(ny * ny, 0);
  parallel_for(0, ny * ny, [&](Index q) {
    const Index x2 = ys[q / ny], z2 = ys[q % ny];
    std::complex<double> acc = 0;
    double prev = 0;
    bool have_prev = false;
    for (Index m = xw.begin; m < xw.end; ++m) {
      const double w = part.weight(j, g.xi(1, m));
      const double b = table.amplitude(nx, x2, m) * table.amplitude(nz, z2, m);
      const double d = table.phase(nx, x2, m) - table.phase(nz, z2, m);
      if (have_prev && w != 0 && std::abs(d - prev) > 2 * M_PI * h / 8) under[q] = 1;
      prev = d;
      have_prev = true;
      if (w == 0 || b == 0) continue;
      acc += dxi * w * w * b * std::polar(1.0, d / h);
    }
    sup[q] = std::abs(acc) / (2 * M_PI * h);
  });
  if (std::any_of(under.begin(), under.end(), [](char c) { return c != 0; }))
    throw Refused("kernel_sample: the xi2 lattice has fewer than 8 points per period of the phase");
  return *std::max_element(sup.begin(), sup.end());
}

}  // namespace

KernelSample kernel_sample(const PhaseTable& phase, const WaveletSpec& w, const DyadicPartition& part, int j, double a,
                           double t, const KernelOptions& options) {
  if (j < 0 || j > part.max_band()) throw InvalidInput("kernel_sample: band index outside the partition");
  if (!(a > 0)) throw InvalidInput("kernel_sample: scale must be positive");
  if (!(t >= 0 && t <= 1)) throw InvalidInput("kernel_sample: separation must lie in [0, 1]");
  if (options.points_per_period < 8) throw Refused("kernel_sample: fewer than 8 quadrature points per period");
  if (std::abs(part.h() - phase.grid().h) > 1e-15 * part.h()) throw InvalidInput("kernel_sample: partition and table use different h");
  KernelSample s;
  s.j = j;
  s.a = a;
  s.t = t;
  s.h = part.h();
  s.k = part.k();
  s.regime = t <= kernel_threshold(s.h, s.k, j) ? KernelRegime::SmallSeparation : KernelRegime::LargeSeparation;
  const double b_factor = std::abs(a * w.autocorrelation(t / a));
  if (b_factor == 0) return s;
  const double xi_sup = phase.kind() == PhaseKind::TranslationInvariant
                            ? ti_kernel_sup(phase.symbol(), part, j, t, options.points_per_period)
                            : general_kernel_sup(phase, part, j, t, options);
  s.sup = b_factor * xi_sup;
  return s;
}

KernelBoundReport kernel_bound_check(const std::vector<KernelSample>& samples, bool require_both_regimes) {
  KernelBoundReport r;
  bool ok = true;
  for (KernelRegime regime : {KernelRegime::SmallSeparation, KernelRegime::LargeSeparation}) {
    KernelRegimeFit fit;
    fit.regime = regime;
    std::vector<double> ratios;
    for (const auto& s : samples) {
      if (s.regime != regime || !(s.sup > 0)) continue;
      ratios.push_back(s.sup / kernel_bound(s.h, s.k, s.j, s.a, s.t));
    }
    fit.count = static_cast<Index>(ratios.size());
    if (!ratios.empty()) {
      double mean = 0;
      for (double q : ratios) mean += std::log(q) / static_cast<double>(ratios.size());
      fit.constant = std::exp(mean);
      fit.min_ratio = *std::min_element(ratios.begin(), ratios.end());
      fit.max_ratio = *std::max_element(ratios.begin(), ratios.end());
      if (fit.max_ratio > 2 * fit.constant || fit.min_ratio < fit.constant / 2) {
        ok = false;
        r.detail += to_string(regime) + ": ratios [" + std::to_string(fit.min_ratio) + ", " +
                    std::to_string(fit.max_ratio) + "] not within a factor 2 of C = " + std::to_string(fit.constant) +
                    "; ";
      }
    } else if (require_both_regimes) {
      r.inconclusive = true;
      r.detail += to_string(regime) + ": no samples; ";
    }
    r.regimes.push_back(fit);
  }
  if (r.regimes[0].count + r.regimes[1].count == 0) r.inconclusive = true;
  r.pass = ok && !r.inconclusive;
  return r;
}

}  // namespace qml
