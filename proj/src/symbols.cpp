#include "qml/symbols.hpp"

#include <algorithm>
#include <cstdio>
#include <optional>
#include <cmath>
#include <numbers>

namespace qml {

double richardson_derivative(const std::function<double(double)>& f, double x, int order, double step, int levels) {
  if (order < 0) throw InvalidInput("richardson_derivative: negative order");
  if (order == 0) return f(x);
  // Binomial central stencil of order r has an error expansion in even powers of the step.
  std::vector<double> coeff(order + 1);
  double binom = 1;
  for (int i = 0; i <= order; ++i) {
    coeff[i] = (i % 2 == 0 ? 1.0 : -1.0) * binom;
    binom = binom * (order - i) / (i + 1);
  }
  auto stencil = [&](double s) {
    double acc = 0;
    for (int i = 0; i <= order; ++i) acc += coeff[i] * f(x + (0.5 * order - i) * s);
    return acc / std::pow(s, order);
  };
  std::vector<double> table(levels);
  for (int l = 0; l < levels; ++l) table[l] = stencil(step / std::pow(2.0, l));
  for (int m = 1; m < levels; ++m) {
    const double factor = std::pow(4.0, m);
    for (int l = levels - 1; l >= m; --l) table[l] = (factor * table[l] - table[l - 1]) / (factor - 1);
  }
  return table[levels - 1];
}

GraphFunction GraphFunction::from_callable(std::string name, std::function<double(double, double, double)> f,
                                           bool x_dependent) {
  GraphFunction g;
  g.name_ = std::move(name);
  g.x_dependent_ = x_dependent;
  g.value_ = std::move(f);
  return g;
}

double GraphFunction::directional(double x1, double x2, double xi, double d_x2, double d_xi, int order) const {
  if (taylor_) {
    const auto c = taylor_(x1, x2, xi, d_x2, d_xi, order);
    double f = 1;
    for (int i = 2; i <= order; ++i) f *= i;
    return f * c[order];
  }
  const auto line = [&](double t) { return value_(x1, x2 + d_x2 * t, xi + d_xi * t); };
  return richardson_derivative(line, 0.0, order, 0.05);
}

double GraphFunction::d_xi(double x1, double x2, double xi) const { return directional(x1, x2, xi, 0, 1, 1); }
double GraphFunction::d_x2(double x1, double x2, double xi) const {
  return x_dependent_ ? directional(x1, x2, xi, 1, 0, 1) : 0.0;
}
double GraphFunction::d_xi_xi(double x1, double x2, double xi) const { return directional(x1, x2, xi, 0, 1, 2); }
double GraphFunction::d_x2_x2(double x1, double x2, double xi) const {
  return x_dependent_ ? directional(x1, x2, xi, 1, 0, 2) : 0.0;
}
double GraphFunction::d_x2_xi(double x1, double x2, double xi) const {
  if (!x_dependent_) return 0.0;
  // Polarization: D^2 along (1,1) = a_x2x2 + 2 a_x2xi + a_xixi.
  const double diag = directional(x1, x2, xi, 1, 1, 2);
  return 0.5 * (diag - d_x2_x2(x1, x2, xi) - d_xi_xi(x1, x2, xi));
}
GraphDerivatives GraphFunction::derivatives(double x1, double x2, double xi) const {
  GraphDerivatives d;
  if (!taylor_) {
    d.value = value_(x1, x2, xi);
    d.d_xi = d_xi(x1, x2, xi);
    d.d_xi_xi = d_xi_xi(x1, x2, xi);
    if (x_dependent_) {
      d.d_x2 = d_x2(x1, x2, xi);
      d.d_x2_x2 = d_x2_x2(x1, x2, xi);
      d.d_x2_xi = d_x2_xi(x1, x2, xi);
    }
    return d;
  }
  if (hessian_) {
    d = hessian_(x1, x2, xi);
    if (!x_dependent_) d.d_x2 = d.d_x2_x2 = d.d_x2_xi = 0;
    return d;
  }
  const auto along_xi = taylor_(x1, x2, xi, 0, 1, 2);
  d.value = along_xi[0];
  d.d_xi = along_xi[1];
  d.d_xi_xi = 2 * along_xi[2];
  if (x_dependent_) {
    const auto along_x2 = taylor_(x1, x2, xi, 1, 0, 2);
    const auto diag = taylor_(x1, x2, xi, 1, 1, 2);
    d.d_x2 = along_x2[1];
    d.d_x2_x2 = 2 * along_x2[2];
    d.d_x2_xi = 0.5 * (2 * diag[2] - d.d_x2_x2 - d.d_xi_xi);
  }
  return d;
}

double GraphFunction::xi_derivative(double x1, double x2, double xi, int order) const {
  if (order == 0) return value_(x1, x2, xi);
  return directional(x1, x2, xi, 0, 1, order);
}

namespace graphs {
namespace {
using std::sqrt;

struct Circle {
  template <typename T>
  T operator()(const T&, const T&, const T& xi) const {
    return clamped_sqrt(1.0 - xi * xi);
  }
};
struct Free {
  template <typename T>
  T operator()(const T&, const T&, const T& xi) const {
    return 0.5 * (xi * xi);
  }
};
struct Dilation {
  template <typename T>
  T operator()(const T&, const T& x2, const T& xi) const {
    return x2 * xi;
  }
};
struct Translation {
  template <typename T>
  T operator()(const T&, const T&, const T& xi) const {
    return xi;
  }
};
struct Zero {
  template <typename T>
  T operator()(const T&, const T&, const T& xi) const {
    return xi * 0.0;
  }
};
struct ContactCircle {
  int k;
  double c;
  template <typename T>
  T operator()(const T&, const T&, const T& xi) const {
    return clamped_sqrt(1.0 - xi * xi) + c * ipow(xi, k + 1);
  }
};
struct FlatContact {
  int k;
  double c;
  template <typename T>
  T operator()(const T&, const T&, const T& xi) const {
    return c * ipow(xi, k + 1);
  }
};
struct CurvedDrift {
  template <typename T>
  T operator()(const T&, const T& x2, const T& xi) const {
    return clamped_sqrt(1.0 - xi * xi) + (x2 * (xi * xi)) * 0.1;
  }
};
struct VariableMetric {
  template <typename T>
  T operator()(const T&, const T& x2, const T& xi) const {
    const T r = x2 * x2;
    return (1.0 + 0.5 * r / (1.0 + r)) * (xi * xi) * 0.5;
  }
};
struct CurvedDriftContact {
  int k;
  template <typename T>
  T operator()(const T& x1, const T& x2, const T& xi) const {
    return CurvedDrift{}(x1, x2, xi) + ipow(xi, k + 1);
  }
};

void check_contact_params(int k, double c) {
  if (k < 1) throw InvalidInput("contact order k must be >= 1");
  if (c == 0 || !std::isfinite(c)) throw InvalidInput("contact coefficient c must be finite and nonzero");
}
}  // namespace

static std::string with_params(const std::string& name, int k, std::optional<double> c) {
  std::string out = name + "(k=" + std::to_string(k);
  if (c) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", *c);
    out += std::string(", c=") + buf;
  }
  return out + ")";
}

GraphFunction circle() { return GraphFunction::closed_form("circle_graph", Circle{}, false); }
GraphFunction free() { return GraphFunction::closed_form("free", Free{}, false); }
GraphFunction dilation() { return GraphFunction::closed_form("dilation", Dilation{}, true); }
GraphFunction translation() { return GraphFunction::closed_form("translation", Translation{}, false); }
GraphFunction zero() { return GraphFunction::closed_form("zero", Zero{}, false); }
GraphFunction contact_circle(int k, double c) {
  check_contact_params(k, c);
  return GraphFunction::closed_form(with_params("contact_circle_graph", k, c), ContactCircle{k, c}, false);
}
GraphFunction flat_contact(int k, double c) {
  check_contact_params(k, c);
  return GraphFunction::closed_form(with_params("flat_contact_graph", k, c), FlatContact{k, c}, false);
}
GraphFunction curved_drift() { return GraphFunction::closed_form("curved_drift", CurvedDrift{}, true); }
GraphFunction variable_metric() { return GraphFunction::closed_form("variable_metric", VariableMetric{}, true); }
GraphFunction curved_drift_contact(int k) {
  check_contact_params(k, 1.0);
  return GraphFunction::closed_form(with_params("curved_drift_contact", k, std::nullopt), CurvedDriftContact{k}, true);
}
}  // namespace graphs

std::string to_string(SymbolFamily family) {
  switch (family) {
    case SymbolFamily::CircleMinusOne: return "CircleMinusOne";
    case SymbolFamily::GraphSymbol: return "GraphSymbol";
    case SymbolFamily::ContactPerturbedCircle: return "ContactPerturbedCircle";
    case SymbolFamily::FlatContact: return "FlatContact";
    case SymbolFamily::Custom: return "Custom";
  }
  return "unknown";
}

double Graph1D::nth_derivative(double xi2, int order) const {
  if (order == 0) return value(xi2);
  if (derivative) return derivative(xi2, order);
  return richardson_derivative(value, xi2, order, 0.1);
}

SymbolSpec SymbolSpec::circle_minus_one() {
  SymbolSpec s;
  s.family_ = SymbolFamily::CircleMinusOne;
  s.label_ = "circle";
  s.branch_seed_ = 1.0;
  return s;
}

SymbolSpec SymbolSpec::contact_perturbed_circle(int k, double c) {
  SymbolSpec s;
  s.family_ = SymbolFamily::ContactPerturbedCircle;
  s.params_ = {static_cast<double>(k), c};
  s.graph_ = graphs::contact_circle(k, c);
  s.label_ = "contact_circle(k=" + std::to_string(k) + ")";
  s.branch_seed_ = 1.0;
  return s;
}

SymbolSpec SymbolSpec::flat_contact(int k, double c) {
  SymbolSpec s;
  s.family_ = SymbolFamily::FlatContact;
  s.params_ = {static_cast<double>(k), c};
  s.graph_ = graphs::flat_contact(k, c);
  s.label_ = "flat_contact(k=" + std::to_string(k) + ")";
  return s;
}

SymbolSpec SymbolSpec::graph(GraphFunction a) {
  if (!a) throw InvalidInput("graph symbol needs a graph function");
  SymbolSpec s;
  s.family_ = SymbolFamily::GraphSymbol;
  s.x_dependent_ = a.x_dependent();
  s.label_ = "graph(" + a.name() + ")";
  s.graph_ = std::move(a);
  return s;
}

SymbolSpec SymbolSpec::custom(std::string label, Evaluator p, bool x_dependent, double branch_seed) {
  if (!p) throw InvalidInput("custom symbol needs an evaluator");
  SymbolSpec s;
  s.family_ = SymbolFamily::Custom;
  s.label_ = std::move(label);
  s.custom_ = std::move(p);
  s.x_dependent_ = x_dependent;
  s.branch_seed_ = branch_seed;
  return s;
}

double SymbolSpec::value(const Vec2& x, const Vec2& xi) const {
  switch (family_) {
    case SymbolFamily::CircleMinusOne: return xi.squaredNorm() - 1.0;
    case SymbolFamily::Custom: return custom_(x, xi);
    default: return xi[0] - graph_(x[0], x[1], xi[1]);
  }
}

Vec2 SymbolSpec::gradient_xi(const Vec2& x, const Vec2& xi) const {
  switch (family_) {
    case SymbolFamily::CircleMinusOne: return 2.0 * xi;
    case SymbolFamily::Custom: {
      Vec2 g;
      for (int a = 0; a < 2; ++a) {
        g[a] = richardson_derivative(
            [&](double t) {
              Vec2 e = xi;
              e[a] = t;
              return custom_(x, e);
            },
            xi[a], 1, 0.01);
      }
      return g;
    }
    default: return Vec2(1.0, -graph_.d_xi(x[0], x[1], xi[1]));
  }
}

std::vector<double> SymbolSpec::xi2_derivatives(const Vec2& x, const Vec2& xi, int max_order) const {
  std::vector<double> d(max_order + 1, 0.0);
  d[0] = value(x, xi);
  for (int r = 1; r <= max_order; ++r) {
    switch (family_) {
      case SymbolFamily::CircleMinusOne: d[r] = r == 1 ? 2 * xi[1] : (r == 2 ? 2.0 : 0.0); break;
      case SymbolFamily::Custom:
        d[r] = richardson_derivative(
            [&](double t) { return custom_(x, Vec2(xi[0], t)); }, xi[1], r, 0.05);
        break;
      default: d[r] = -graph_.xi_derivative(x[0], x[1], xi[1], r);
    }
  }
  return d;
}

namespace {

/// Newton on xi1 -> p(x, (xi1, xi2)) from a fixed seed.
double newton_branch(const SymbolSpec::Evaluator& p, const Vec2& x, double xi2, double seed) {
  double xi1 = seed;
  for (int it = 0; it < 100; ++it) {
    const double f = p(x, Vec2(xi1, xi2));
    const double step_h = 1e-6 * (1 + std::abs(xi1));
    const double df = (p(x, Vec2(xi1 + step_h, xi2)) - p(x, Vec2(xi1 - step_h, xi2))) / (2 * step_h);
    if (!std::isfinite(f) || !std::isfinite(df) || df == 0) break;
    const double step = f / df;
    xi1 -= step;
    if (std::abs(step) <= 1e-15 * (1 + std::abs(xi1))) break;
  }
  const double residual = p(x, Vec2(xi1, xi2));
  if (!(std::abs(residual) <= 1e-12))
    throw DomainError("graph_of: Newton found no real branch at xi2 = " + std::to_string(xi2));
  return xi1;
}

}  // namespace

Graph1D graph_of(const SymbolSpec& sym, const Vec2& x) {
  switch (sym.family()) {
    case SymbolFamily::CircleMinusOne: {
      const double sign = sym.branch_seed() < 0 ? -1.0 : 1.0;
      const GraphFunction circle = graphs::circle();
      Graph1D g;
      g.value = [sign](double xi2) {
        if (std::abs(xi2) > 1) throw DomainError("graph_of: |xi2| > 1 has no point on the unit circle");
        return sign * std::sqrt(1 - xi2 * xi2);
      };
      g.derivative = [sign, circle](double xi2, int r) {
        if (std::abs(xi2) >= 1) throw DomainError("graph_of: derivative requires |xi2| < 1");
        return sign * circle.xi_derivative(0, 0, xi2, r);
      };
      return g;
    }
    case SymbolFamily::Custom: {
      const SymbolSpec copy = sym;
      Graph1D g;
      g.value = [copy, x](double xi2) {
        return newton_branch([&](const Vec2& y, const Vec2& xi) { return copy.value(y, xi); }, x, xi2,
                             copy.branch_seed());
      };
      return g;
    }
    default: {
      const GraphFunction a = *sym.graph_function();
      Graph1D g;
      g.value = [a, x](double xi2) { return a(x[0], x[1], xi2); };
      if (a.has_closed_derivatives())
        g.derivative = [a, x](double xi2, int r) { return a.xi_derivative(x[0], x[1], xi2, r); };
      return g;
    }
  }
}

ContactReport contact_order(const Graph1D& g1, const Graph1D& g2, double xi2_0, int max_order) {
  if (max_order < 1) throw InvalidInput("contact_order: max_order must be >= 1");
  ContactReport report;
  const double v1 = g1(xi2_0);
  const double v2 = g2(xi2_0);
  double scale = std::max(std::abs(v1), std::abs(v2));
  if (std::abs(v1 - v2) > 1e-8 * (1 + scale))
    throw DomainError("contact_order: the graphs do not meet at xi2 = " + std::to_string(xi2_0));
  report.intersection = Vec2(v1, xi2_0);
  report.curvature_first = std::abs(g1.nth_derivative(xi2_0, 2));
  report.curvature_second = std::abs(g2.nth_derivative(xi2_0, 2));
  for (int r = 1; r <= max_order + 1; ++r) {
    const double d1 = g1.nth_derivative(xi2_0, r);
    const double d2 = g2.nth_derivative(xi2_0, r);
    scale = std::max({scale, std::abs(d1), std::abs(d2)});
    const double tol = 1e-8 * (1 + scale);
    const double diff = d1 - d2;
    report.derivative_table.push_back(diff);
    if (std::abs(diff) > tol) {
      report.order = r - 1;
      report.first_nonzero_derivative = diff;
      return report;
    }
    if (std::abs(diff) >= tol / 10) report.inconclusive = true;
  }
  return report;
}

ContactReport contact_order(const SymbolSpec& a_sym, const SymbolSpec& q_sym, const Vec2& xi0, int max_order,
                            const Vec2& x) {
  return contact_order(graph_of(a_sym, x), graph_of(q_sym, x), xi0[1], max_order);
}

Field2D apply_left_quantization(const SymbolSpec& sym, const Field2D& u, const QuantizationOptions& options) {
  const auto& g = u.grid;
  const Index n = g.points_per_axis;
  SpectralField2D spectrum = semiclassical_fft(u);
  if (!sym.x_dependent()) {
    parallel_for(0, n, [&](Index j) {
      for (Index i = 0; i < n; ++i)
        spectrum.values(i, j) *= sym.value(Vec2::Zero(), Vec2(g.xi(0, i), g.xi(1, j)));
    });
    return semiclassical_ifft(spectrum);
  }
  if (n > 128 && !options.allow_large)
    throw Refused("apply_left_quantization: x-dependent symbol on N = " + std::to_string(n) +
                  " exceeds the N <= 128 direct-quadrature limit");
  // Direct quadrature (2 pi h)^{-1} sum_xi e^{i x.xi/h} p(x, xi) FT[u](xi) dxi^2.
  ComplexMatrix<double> e1(n, n), e2(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index m = 0; m < n; ++m) {
      e1(i, m) = std::polar(1.0, g.x(i) * g.xi(0, m) / g.h);
      e2(i, m) = std::polar(1.0, g.x(i) * g.xi(1, m) / g.h);
    }
  const double scale = g.dxi() * g.dxi() / (2 * std::numbers::pi * g.h);
  Field2D out(g);
  parallel_for(0, n, [&](Index i) {
    for (Index j = 0; j < n; ++j) {
      const Vec2 x(g.x(i), g.x(j));
      std::complex<double> acc = 0;
      for (Index m2 = 0; m2 < n; ++m2) {
        std::complex<double> inner = 0;
        for (Index m1 = 0; m1 < n; ++m1)
          inner += e1(i, m1) * sym.value(x, Vec2(g.xi(0, m1), g.xi(1, m2))) * spectrum.values(m1, m2);
        acc += e2(j, m2) * inner;
      }
      out.values(i, j) = scale * acc;
    }
  });
  return out;
}

}  // namespace qml
