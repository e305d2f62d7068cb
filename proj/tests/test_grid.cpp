#include "qml/container_io.hpp"
#include "qml/grid.hpp"

#include <doctest.h>

#include <numbers>
#include <random>
#include <sstream>

using namespace qml;

namespace {

Field2D random_field(const GridSpec& g, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  Field2D u(g);
  for (Index j = 0; j < g.points_per_axis; ++j)
    for (Index i = 0; i < g.points_per_axis; ++i) u.values(i, j) = {nd(rng), nd(rng)};
  return u;
}

// Direct O(N^4) quadrature of (2 pi h)^{-1} sum e^{-i x.xi/h} u dx^2.
ComplexMatrix<double> direct_transform(const Field2D& u) {
  const auto& g = u.grid;
  const Index n = g.points_per_axis;
  ComplexMatrix<double> out(n, n);
  for (Index a = 0; a < n; ++a)
    for (Index b = 0; b < n; ++b) {
      std::complex<double> acc = 0;
      for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j)
          acc += std::polar(1.0, -(g.x(i) * g.xi(0, a) + g.x(j) * g.xi(1, b)) / g.h) * u.values(i, j);
      out(a, b) = acc * g.dx() * g.dx() / (2 * std::numbers::pi * g.h);
    }
  return out;
}

double rel_error(const ComplexMatrix<double>& a, const ComplexMatrix<double>& b) {
  return (a - b).norm() / b.norm();
}

}  // namespace

TEST_CASE("zero field has zero spectrum and inverse") {
  const GridSpec g = make_grid(2, 32, 0.125);
  const Field2D u(g);
  CHECK(semiclassical_fft(u).values.norm() == 0);
  CHECK(semiclassical_ifft(semiclassical_fft(u)).values.norm() == 0);
}

TEST_CASE("fast transform matches the direct sum on N = 32") {
  for (const Vec2 center : {Vec2(0, 0), Vec2(1.0, -0.25)}) {
    const GridSpec g = make_grid(2.0, 32, 0.1, center);
    const Field2D u = random_field(g, 3);
    CHECK(rel_error(semiclassical_fft(u).values, direct_transform(u)) < 1e-12);
  }
}

TEST_CASE("lattice plane wave transforms to a single spike") {
  const GridSpec g = make_grid(2.0, 32, 0.1);
  const Index a = 20, b = 9;
  const Vec2 xi0(g.xi(0, a), g.xi(1, b));
  Field2D u(g);
  for (Index i = 0; i < 32; ++i)
    for (Index j = 0; j < 32; ++j) u.values(i, j) = std::polar(1.0, (g.x(i) * xi0[0] + g.x(j) * xi0[1]) / g.h);
  const auto s = semiclassical_fft(u);
  const auto oracle = direct_transform(u);
  CHECK(std::abs(s.values(a, b) - oracle(a, b)) < 1e-12 * std::abs(oracle(a, b)));
  CHECK(std::abs(s.values(a, b)) == doctest::Approx(16.0 / (2 * std::numbers::pi * 0.1)).epsilon(1e-12));
  ComplexMatrix<double> rest = s.values;
  rest(a, b) = 0;
  CHECK(rest.cwiseAbs().maxCoeff() < 1e-12 * std::abs(s.values(a, b)));

  // Spike back to a plane wave.
  SpectralField2D spike{g, ComplexMatrix<double>::Zero(32, 32), {}};
  spike.values(a, b) = 1.0;
  const Field2D w = semiclassical_ifft(spike);
  const double amp = g.dxi() * g.dxi() / (2 * std::numbers::pi * g.h);
  CHECK((w.values / amp - u.values).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("Gaussian maps to Gaussian") {
  const GridSpec g = make_grid(8, 256, 1.0 / 32);
  Field2D u(g);
  SpectralField2D expected{g, ComplexMatrix<double>(256, 256), {}};
  for (Index i = 0; i < 256; ++i)
    for (Index j = 0; j < 256; ++j) {
      u.values(i, j) = std::exp(-(g.x(i) * g.x(i) + g.x(j) * g.x(j)) / (2 * g.h));
      const double r2 = g.xi(0, i) * g.xi(0, i) + g.xi(1, j) * g.xi(1, j);
      expected.values(i, j) = std::exp(-r2 / (2 * g.h));
    }
  CHECK(rel_error(semiclassical_fft(u).values, expected.values) < 1e-6);
}

TEST_CASE("round trip and Plancherel") {
  for (Index n : {64, 128, 256}) {
    const GridSpec g = make_grid(4, n, 0.05, Vec2(0.5, 0));
    const Field2D u = random_field(g, static_cast<unsigned>(n));
    const auto s = semiclassical_fft(u);
    CHECK(std::abs(l2_norm(s) - l2_norm(u)) / l2_norm(u) < 1e-10);
    CHECK(rel_error(semiclassical_ifft(s).values, u.values) < 1e-12);
  }
}

TEST_CASE("one-dimensional transform round trip and Plancherel") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  Eigen::VectorXcd v(96);
  for (auto& z : v) z = {nd(rng), nd(rng)};
  const double L = 3, h = 0.07;
  const auto s = semiclassical_fft_1d<double>(v, L, h, 0.3);
  const auto back = semiclassical_fft_1d<double>(s, L, h, 0.3, true);
  CHECK((back - v).norm() / v.norm() < 1e-12);
  const double dx = 2 * L / 96, dxi = std::numbers::pi * h / L;
  CHECK(std::abs(s.norm() * std::sqrt(dxi) - v.norm() * std::sqrt(dx)) < 1e-10 * v.norm());
}

TEST_CASE("unit band flag and warning") {
  CHECK(make_grid(8, 512, 1.0 / 32).resolves_unit_band());
  const GridSpec coarse = make_grid(8, 32, 1.0 / 32);
  CHECK_FALSE(coarse.resolves_unit_band());
  CHECK(semiclassical_fft(Field2D(coarse)).warnings.size() == 1);
}

TEST_CASE("invalid grids and inputs are rejected") {
  CHECK_THROWS_AS(make_grid(1, 15, 0.1), InvalidInput);
  CHECK_THROWS_AS(make_grid(1, 8, 0.1), InvalidInput);
  CHECK_THROWS_AS(make_grid(0, 16, 0.1), InvalidInput);
  CHECK_THROWS_AS(make_grid(1, 16, 1.5), InvalidInput);
  Field2D u(make_grid(1, 16, 0.5));
  u.values(2, 3) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(semiclassical_fft(u), InvalidInput);
}

TEST_CASE("lp norms") {
  const GridSpec g = make_grid(1, 32, 0.5);
  Field2D one(g);
  one.values.setConstant(1.0);
  for (double p : {1.0, 2.0, 3.5, 8.0}) CHECK(lp_norm(one, p) == doctest::Approx(std::pow(4.0, 1 / p)).epsilon(1e-14));
  CHECK(lp_norm(one, std::numeric_limits<double>::infinity()) == 1.0);
  const Field2D zero(g);
  for (double p : {1.0, 2.0, 6.0, std::numeric_limits<double>::infinity()}) CHECK(lp_norm(zero, p) == 0.0);
  CHECK_THROWS_AS(lp_norm(one, 0.5), DomainError);

  const Field2D r = random_field(g, 11);
  const double inf = std::numeric_limits<double>::infinity();
  CHECK(lp_norm(r, 2.0) * lp_norm(r, 2.0) <= lp_norm(r, inf) * lp_norm(r, 1.0));
}

TEST_CASE("restricted norms") {
  const GridSpec g = make_grid(4, 64, 0.25);
  const Field2D r = random_field(g, 2);
  CHECK(restrict_norm(r, {-4, 4, -4, 4}) == doctest::Approx(l2_norm(r)).epsilon(1e-14));
  Warnings w;
  CHECK(restrict_norm(r, {1, 1, -2, 2}, &w) == 0.0);
  CHECK(w.size() == 1);
  CHECK(restrict_norm(r, {-1, 1, -1, 0.5}) <= restrict_norm(r, {-2, 1, -1, 3}));
  CHECK_THROWS_AS(restrict_norm(r, {-5, 0, 0, 1}), InvalidInput);

  // Even in x1 and vanishing on the x1 = 0 column: each half carries exactly half the mass.
  Field2D even(g);
  for (Index i = 0; i < 64; ++i)
    for (Index j = 0; j < 64; ++j) {
      const double x1 = g.x(i), x2 = g.x(j);
      even.values(i, j) = x1 * x1 * std::exp(-(x1 * x1 + x2 * x2));
    }
  const double total = l2_norm(even);
  const double half = restrict_norm(even, {0, 4, -4, 4});
  CHECK(half * half == doctest::Approx(0.5 * total * total).epsilon(1e-12));
}

TEST_CASE("results do not depend on the worker count") {
  const GridSpec g = make_grid(4, 128, 0.05, Vec2(1, 0));
  const Field2D u = random_field(g, 9);
  set_thread_count(1);
  const auto a = semiclassical_fft(u);
  set_thread_count(3);
  const auto b = semiclassical_fft(u);
  set_thread_count(0);
  CHECK(a.values == b.values);
}

TEST_CASE("field container round trip") {
  const GridSpec g = make_grid(3, 32, 0.2, Vec2(1, 0));
  const Field2D u = random_field(g, 4);
  std::stringstream buf;
  write_field(buf, u);
  const std::string bytes = buf.str();
  CHECK(bytes.substr(0, 4) == "QML1");
  CHECK(bytes.size() == 4 + 24 + 32 * 32 * 16 + 4 + 16);
  const Field2D back = read_field(buf);
  CHECK(back.grid == g);
  CHECK(back.values == u.values);

  std::stringstream bad("XXXX");
  CHECK_THROWS_AS(read_field(bad), InvalidInput);

  std::ostringstream csv;
  write_abs_slice_csv(csv, u, 0, 5);
  CHECK(csv.str().rfind("x2,abs_u\n", 0) == 0);
}
