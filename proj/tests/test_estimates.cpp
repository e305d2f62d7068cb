#include "qml/estimates.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace qml;

namespace {

const double kInf = std::numeric_limits<double>::infinity();

struct FreeFn {
  template <typename T>
  T operator()(const T&, const T&, const T& xi) const {
    return 0.5 * xi * xi;
  }
};

Rational inv_p(int p) { return p == 0 ? Rational(0) : Rational(1, p); }

// Dense Riemann sum for |(2 pi h)^{-1} int e^{i(s xi + t xi^2/2)/h} w_j(xi)^2 dxi|, maximized over a fine s grid.
double brute_free_sup(const DyadicPartition& part, int j, double t) {
  const double h = part.h();
  const double top = 1.5 * std::ldexp(std::pow(h, 1.0 / (part.k() + 1)), j);
  const int n = 40000;
  const double dxi = 2 * top / n;
  double best = 0;
  const double s_span = t * top + 0.05;
  for (int i = 0; i <= 1200; ++i) {
    const double s = -s_span + 2 * s_span * i / 1200;
    std::complex<double> acc = 0;
    for (int m = 0; m <= n; ++m) {
      const double xi = -top + dxi * m;
      const double wv = part.weight(j, xi);
      if (wv != 0) acc += wv * wv * std::polar(1.0, (s * xi + 0.5 * t * xi * xi) / h);
    }
    best = std::max(best, std::abs(acc) * dxi / (2 * M_PI * h));
  }
  return best;
}

}  // namespace

TEST_CASE("rational arithmetic stays reduced") {
  const Rational a(6, -8);
  CHECK(a.num() == -3);
  CHECK(a.den() == 4);
  CHECK(a + Rational(3, 4) == Rational(0));
  CHECK(Rational(1, 3) * Rational(3, 5) == Rational(1, 5));
  CHECK(Rational(1, 2) / Rational(1, 4) == Rational(2));
  CHECK(Rational(1, 3) < Rational(1, 2));
  CHECK(Rational(7, 12).str() == "7/12");
  CHECK_THROWS_AS(Rational(1, 0), DomainError);
  CHECK_THROWS_AS(Rational(1) / Rational(0), DomainError);
}

TEST_CASE("branches agree at p = 6 exactly") {
  const Rational r(1, 6);
  for (int k = 1; k <= 8; ++k) {
    const auto d = delta_branches(r, k);
    CHECK(d.high == d.low);
    CHECK(d.high == Rational(1, 6));
  }
  for (int j = 0; j <= 8; ++j) {
    const auto m = mu_branches(r, j);
    CHECK(m.high == m.low);
    CHECK(m.high == Rational(0));
  }
  const auto s = sogge_branches(r);
  CHECK(s.high == s.low);
  CHECK(s.high == Rational(1, 6));
}

TEST_CASE("t_alpha lower exponent equals delta for p >= 6") {
  for (int p : {6, 7, 8, 12, 0}) {
    for (int k = 1; k <= 5; ++k) {
      CHECK(t_alpha_lower_exact(inv_p(p), k) == delta_exact(inv_p(p), k));
      const double pd = p == 0 ? kInf : p;
      CHECK(t_alpha_lower_exponent(pd, k) == delta_p_k(pd, k));
    }
  }
  CHECK(t_alpha_lower_exponent(kInf, 1) == doctest::Approx(0.25));
  CHECK(t_alpha_lower_exponent(6, 2) == doctest::Approx(1.0 / 6));
  CHECK_THROWS_AS(t_alpha_lower_exponent(5.5, 1), DomainError);
}

TEST_CASE("exponent values") {
  CHECK(delta_exact(Rational(0), 1) == Rational(1, 4));
  CHECK(delta_p_k(kInf, 1) == 0.25);
  CHECK(delta_p_k(2, 3) == 0.0);
  CHECK(delta_p_k(6, 4) == doctest::Approx(1.0 / 6).epsilon(1e-15));
  CHECK(sogge_delta(kInf) == 0.5);
  CHECK(sogge_delta(6) == doctest::Approx(1.0 / 6).epsilon(1e-15));
  CHECK(mu_exact(Rational(0), 3) == Rational(3, 2));
  CHECK(mu_p_j(kInf, 3) == 1.5);
  CHECK(mu_p_j(6, 5) == 0.0);
  CHECK(mu_p_j(4, 2) == 0.0);
  // Non-half-integer p goes through the double formula.
  CHECK(delta_p_k(6.3, 2) == doctest::Approx(0.5 - 2 / 6.3 - (0.5 - 3 / 6.3) / 3).epsilon(1e-14));
  CHECK(sogge_delta(3.3) == doctest::Approx(0.25 - 0.5 / 3.3).epsilon(1e-14));
  CHECK_THROWS_AS(delta_p_k(1.5, 1), DomainError);
  CHECK_THROWS_AS(sogge_delta(1.99), DomainError);
  CHECK_THROWS_AS(mu_p_j(std::nan(""), 1), DomainError);
  CHECK_THROWS_AS(delta_p_k(4, 0), InvalidInput);
  CHECK_THROWS_AS((ExponentQuery{1.0, 1, 0}.validate()), DomainError);
  CHECK_NOTHROW((ExponentQuery{kInf, 2, 3}.validate()));
}

TEST_CASE("delta is below the Sogge exponent and nondecreasing in k for p > 6") {
  for (int p : {6, 7, 8, 10, 12, 20, 100, 0}) {
    const Rational r = inv_p(p);
    for (int k = 1; k <= 5; ++k) {
      CHECK(delta_exact(r, k) <= sogge_exact(r));
      if (p != 6) {
        CHECK(delta_exact(r, k) <= delta_exact(r, k + 1));
        CHECK(delta_exact(r, k) < delta_exact(r, k + 1));
      } else {
        CHECK(delta_exact(r, k) == delta_exact(r, k + 1));
      }
    }
  }
}

TEST_CASE("large k approaches 1/2 - 2/p") {
  for (double p : {6.0, 8.0, 12.0, kInf}) CHECK(std::abs(delta_p_k(p, 1000000) - (0.5 - 2 / p)) <= 1e-5);
}

TEST_CASE("power-law fits") {
  std::vector<std::pair<double, double>> rows;
  for (int e = 4; e <= 9; ++e) rows.emplace_back(std::ldexp(1.0, -e), std::pow(std::ldexp(1.0, -e), -0.25));
  auto f = fit_power_law(rows, "linf", kInf);
  CHECK(f.slope == doctest::Approx(-0.25).epsilon(1e-13));
  CHECK(f.residual <= 1e-13);
  CHECK(f.h_values.size() == 6);
  CHECK(f.quantity == "linf");

  rows.clear();
  for (int e = 3; e <= 8; ++e) rows.emplace_back(std::ldexp(1.0, -e), 7 * std::pow(std::ldexp(1.0, -e), -1.0 / 6));
  f = fit_power_law(rows);
  CHECK(std::abs(f.slope + 1.0 / 6) <= 1e-12);
  CHECK(f.intercept == doctest::Approx(std::log(7.0)).epsilon(1e-12));

  rows[2].second = 0;
  CHECK_THROWS_AS(fit_power_law(rows), DomainError);
  rows.resize(2);
  CHECK_THROWS_AS(fit_power_law(rows), InvalidInput);
}

TEST_CASE("kernel regimes and bound") {
  const double h = std::ldexp(1.0, -8);
  CHECK(kernel_threshold(h, 1, 0) == 1.0);
  CHECK(kernel_threshold(h, 1, 2) == 1.0 / 16);
  CHECK(kernel_threshold(h, 3, 1) == doctest::Approx(std::pow(h, 0.5) / 4));
  CHECK(kernel_bound(h, 1, 2, 0.5, 0.01) == doctest::Approx(0.5 * 4 * std::pow(h, -0.5)));
  CHECK(kernel_bound(h, 1, 4, 0.5, 0.1) == doctest::Approx(0.5 / std::sqrt(h * 0.1)));
}

TEST_CASE("kernel sample: disjoint supports and argument checks") {
  const double h = std::ldexp(1.0, -6);
  const auto grid = make_grid(1.0, 64, h);
  const auto table = build_phase(graphs::free(), grid, {0.0});
  const auto w = WaveletSpec::polynomial_bump();
  const DyadicPartition part(h, 1);
  const double a = 0.2;
  const auto s = kernel_sample(table, w, part, 0, a, 2 * a * w.support() + 1e-3);
  CHECK(s.sup == 0.0);
  CHECK(s.regime == KernelRegime::SmallSeparation);
  CHECK_THROWS_AS(kernel_sample(table, w, part, 0, a, 1.5), InvalidInput);
  CHECK_THROWS_AS(kernel_sample(table, w, part, 0, -a, 0.1), InvalidInput);
  CHECK_THROWS_AS(kernel_sample(table, w, part, part.max_band() + 1, a, 0.1), InvalidInput);
  KernelOptions coarse;
  coarse.points_per_period = 4;
  CHECK_THROWS_AS(kernel_sample(table, w, part, 0, a, 0.1, coarse), Refused);
  const DyadicPartition other(h / 2, 1);
  CHECK_THROWS_AS(kernel_sample(table, w, other, 0, a, 0.1), InvalidInput);
}

TEST_CASE("kernel sample at t = 0 equals the direct size of the integration region") {
  // |K_0| at t = 0 is a R_f(0) (2 pi h)^{-1} int w_0^2 dxi, attained at x2 = z2.
  const auto w = WaveletSpec::polynomial_bump();
  for (int k : {1, 2}) {
    const double h = std::ldexp(1.0, -7);
    const auto table = build_phase(graphs::free(), make_grid(1.0, 64, h), {0.0});
    const DyadicPartition part(h, k);
    const double sigma = std::pow(h, 1.0 / (k + 1));
    double integral = 0;
    const int n = 200000;
    for (int i = 0; i <= n; ++i) {
      const double xi = -1.5 * sigma + 3 * sigma * i / n;
      const double v = part.weight(0, xi);
      integral += (i == 0 || i == n ? 0.5 : 1.0) * v * v * 3 * sigma / n;
    }
    const double a = 0.3;
    const double expect = a * w.autocorrelation(0) * integral / (2 * M_PI * h);
    const auto s = kernel_sample(table, w, part, 0, a, 0.0);
    CHECK(s.sup == doctest::Approx(expect).epsilon(1e-6));
    // Trivial bound: integrand modulus times the measure 3 h^{1/(k+1)} of the band.
    CHECK(s.sup <= a * w.autocorrelation(0) * 3 * sigma / (2 * M_PI * h));
    CHECK(s.sup / kernel_bound(h, k, 0, a, 0.0) <= 3 * w.autocorrelation(0) / (2 * M_PI));
  }
}

TEST_CASE("kernel quadrature agrees with a dense brute-force sum") {
  const double h = std::ldexp(1.0, -7);
  const auto table = build_phase(graphs::free(), make_grid(1.0, 64, h), {0.0});
  const auto w = WaveletSpec::polynomial_bump();
  const DyadicPartition part(h, 1);
  for (auto [j, t] : {std::pair{0, 0.02}, std::pair{2, 0.05}, std::pair{3, 0.1}}) {
    const double a = 0.5;
    const auto s = kernel_sample(table, w, part, j, a, t);
    const double expect = a * w.autocorrelation(t / a) * brute_free_sup(part, j, t);
    CHECK(s.sup == doctest::Approx(expect).epsilon(2e-3));
  }
}

TEST_CASE("large-separation constant fitted at one point holds at eight others") {
  const auto w = WaveletSpec::polynomial_bump();
  const int k = 2, j = 3;
  const double a = 0.5;
  std::vector<KernelSample> samples;
  for (int e : {10, 12, 14}) {
    const double h = std::ldexp(1.0, -e);
    const auto table = build_phase(graphs::free(), make_grid(1.0, 64, h), {0.0});
    const DyadicPartition part(h, k);
    for (double t : {0.02, 0.05, 0.1}) {
      samples.push_back(kernel_sample(table, w, part, j, a, t));
      CHECK(samples.back().regime == KernelRegime::LargeSeparation);
    }
  }
  const auto ratio = [](const KernelSample& s) { return s.sup / kernel_bound(s.h, s.k, s.j, s.a, s.t); };
  const double c = ratio(samples.front());
  for (const auto& s : samples) {
    CHECK(ratio(s) <= 2 * c);
    CHECK(ratio(s) >= c / 2);
  }
}

TEST_CASE("general tables agree with the translation-invariant kernel") {
  const double h = std::ldexp(1.0, -6);
  const Index n = 256;
  const auto grid = make_grid(2.0, n, h);
  const auto a = GraphFunction::closed_form("free_flagged", FreeFn{}, true);
  const auto ti = build_phase(graphs::free(), grid, {0.0});
  PhaseOptions o;
  o.y_window = IndexRange{n / 2 - n / 16, n / 2 + n / 16};
  const auto w = WaveletSpec::polynomial_bump();
  const DyadicPartition part(h, 1);
  for (double t : {0.0, 0.02}) {
    const auto gen = build_phase(a, grid, {0.0, t}, o);
    REQUIRE(gen.kind() == PhaseKind::General);
    for (int j : {0, 2}) {
      const double s_ti = kernel_sample(ti, w, part, j, 0.5, t).sup;
      const double s_gen = kernel_sample(gen, w, part, j, 0.5, t).sup;
      // The general path maximizes over lattice separations only.
      CHECK(s_gen <= s_ti * (1 + 1e-6));
      CHECK(s_gen >= s_ti * 0.99);
    }
  }
  const auto gen = build_phase(a, grid, {0.0, 0.05}, o);
  CHECK_THROWS_AS(kernel_sample(gen, w, part, 2, 0.5, 0.05), Refused);
  CHECK_THROWS_AS(kernel_sample(gen, w, part, 0, 0.5, 0.03), InvalidInput);
}

TEST_CASE("kernel bound check") {
  std::vector<KernelSample> synthetic;
  for (double h : {1.0 / 64, 1.0 / 256}) {
    for (double t : {0.001, 0.01, 0.3}) {
      KernelSample s;
      s.h = h;
      s.k = 1;
      s.j = 2;
      s.a = 0.5;
      s.t = t;
      s.regime = t <= kernel_threshold(h, 1, 2) ? KernelRegime::SmallSeparation : KernelRegime::LargeSeparation;
      s.sup = kernel_bound(h, 1, 2, s.a, t);
      synthetic.push_back(s);
    }
  }
  auto r = kernel_bound_check(synthetic);
  REQUIRE(r.regimes.size() == 2);
  CHECK(r.pass);
  CHECK_FALSE(r.inconclusive);
  CHECK(r.regimes[0].constant == doctest::Approx(1.0));
  CHECK(r.regimes[1].constant == doctest::Approx(1.0));

  auto bad = synthetic;
  bad.back().sup *= 10;
  r = kernel_bound_check(bad);
  CHECK_FALSE(r.pass);
  CHECK(r.detail.find("large_sep") != std::string::npos);

  std::vector<KernelSample> only_small;
  for (const auto& s : synthetic)
    if (s.regime == KernelRegime::SmallSeparation) only_small.push_back(s);
  r = kernel_bound_check(only_small);
  CHECK(r.inconclusive);
  CHECK_FALSE(r.pass);
  CHECK(kernel_bound_check(only_small, false).pass);
  CHECK(kernel_bound_check({}).inconclusive);
}

TEST_CASE("kernel samples for k = 1 pass the two-regime check") {
  const auto w = WaveletSpec::polynomial_bump();
  std::vector<KernelSample> samples;
  for (int e : {6, 8}) {
    const double h = std::ldexp(1.0, -e);
    const auto table = build_phase(graphs::free(), make_grid(1.0, 64, h), {0.0});
    const DyadicPartition part(h, 1);
    for (int j : {0, 2, 4}) {
      if (j > part.max_band()) continue;
      for (double a : {std::pow(h, 0.3), 0.5})
        for (double f : {0.0, 0.02, 0.05, 0.1}) samples.push_back(kernel_sample(table, w, part, j, a, f * a));
    }
  }
  const auto r = kernel_bound_check(samples);
  CHECK(r.pass);
  CHECK(r.regimes[0].count > 0);
  CHECK(r.regimes[1].count > 0);
}
