#pragma once

#include "qml/grid.hpp"
#include "qml/jet.hpp"

#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace qml {

/// Central-difference derivative of order r at x, Richardson-extrapolated over step, step/2, step/4, ...
double richardson_derivative(const std::function<double(double)>& f, double x, int order, double step = 0.1,
                             int levels = 4);

/// Value, gradient and Hessian of a(x1, ., .) in (x2, xi2).
struct GraphDerivatives {
  double value = 0;
  double d_x2 = 0;
  double d_xi = 0;
  double d_x2_x2 = 0;
  double d_x2_xi = 0;
  double d_xi_xi = 0;
};

/// a(x1, x2, xi2): the function whose graph xi1 = a(x, xi2) is a characteristic curve.
///
/// Catalog entries are built from a template functor so values and every partial derivative come
/// from the same closed form (via Taylor jets); entries built from a plain callable fall back to
/// Richardson finite differences.
class GraphFunction {
 public:
  GraphFunction() = default;

  template <typename F>
  static GraphFunction closed_form(std::string name, F f, bool x_dependent) {
    GraphFunction g;
    g.name_ = std::move(name);
    g.x_dependent_ = x_dependent;
    g.value_ = [f](double x1, double x2, double xi) { return f(x1, x2, xi); };
    g.taylor_ = [f](double x1, double x2, double xi, double d_x2, double d_xi, int order) {
      const Jet t = Jet::variable(0.0, order);
      const Jet r = f(Jet(x1, order), x2 + d_x2 * t, xi + d_xi * t);
      std::vector<double> c(order + 1);
      for (int i = 0; i <= order; ++i) c[i] = r[i];
      return c;
    };
    g.hessian_ = [f](double x1, double x2, double xi) {
      const Hessian2 r = f(Hessian2(x1), Hessian2::variable(x2, 0), Hessian2::variable(xi, 1));
      return GraphDerivatives{r.value(),         r.gradient(0),     r.gradient(1),
                              r.hessian(0, 0), r.hessian(0, 1), r.hessian(1, 1)};
    };
    return g;
  }

  static GraphFunction from_callable(std::string name, std::function<double(double, double, double)> f,
                                     bool x_dependent);

  const std::string& name() const { return name_; }
  bool x_dependent() const { return x_dependent_; }
  bool has_closed_derivatives() const { return static_cast<bool>(taylor_); }
  explicit operator bool() const { return static_cast<bool>(value_); }

  double operator()(double x1, double x2, double xi) const { return value_(x1, x2, xi); }
  double d_xi(double x1, double x2, double xi) const;
  double d_x2(double x1, double x2, double xi) const;
  double d_xi_xi(double x1, double x2, double xi) const;
  double d_x2_x2(double x1, double x2, double xi) const;
  double d_x2_xi(double x1, double x2, double xi) const;
  /// All first and second (x2, xi2) derivatives in one pass for closed forms.
  GraphDerivatives derivatives(double x1, double x2, double xi) const;
  /// d^r/dxi^r at fixed x.
  double xi_derivative(double x1, double x2, double xi, int order) const;

 private:
  double directional(double x1, double x2, double xi, double d_x2, double d_xi, int order) const;

  std::string name_;
  bool x_dependent_ = false;
  std::function<double(double, double, double)> value_;
  std::function<std::vector<double>(double, double, double, double, double, int)> taylor_;
  std::function<GraphDerivatives(double, double, double)> hessian_;
};

/// Fixed catalog of graph functions a(x, xi2).
namespace graphs {
GraphFunction circle();                               // sqrt(1 - xi^2)
GraphFunction free();                                 // xi^2 / 2
GraphFunction dilation();                             // x2 xi
GraphFunction translation();                          // xi
GraphFunction zero();                                 // 0
GraphFunction contact_circle(int k, double c);        // sqrt(1 - xi^2) + c xi^(k+1)
GraphFunction flat_contact(int k, double c);          // c xi^(k+1)
GraphFunction curved_drift();                         // sqrt(1 - xi^2) + x2 xi^2 / 10
GraphFunction curved_drift_contact(int k);            // curved_drift + xi^(k+1)
GraphFunction variable_metric();                      // (1 + x2^2 / (2 (1 + x2^2))) xi^2 / 2
}  // namespace graphs

enum class SymbolFamily { CircleMinusOne, GraphSymbol, ContactPerturbedCircle, FlatContact, Custom };

std::string to_string(SymbolFamily family);

/// A one-variable branch xi1 = g(xi2) of a characteristic set at fixed x.
struct Graph1D {
  std::function<double(double)> value;
  /// r-th derivative; empty when only values are available.
  std::function<double(double, int)> derivative;

  double operator()(double xi2) const { return value(xi2); }
  double nth_derivative(double xi2, int order) const;
};

/// A named symbol p(x, xi) with value and xi-derivative evaluators.
class SymbolSpec {
 public:
  using Evaluator = std::function<double(const Vec2& x, const Vec2& xi)>;

  static SymbolSpec circle_minus_one();
  static SymbolSpec contact_perturbed_circle(int k, double c);
  static SymbolSpec flat_contact(int k, double c);
  static SymbolSpec graph(GraphFunction a);
  /// `branch_seed` is the Newton starting value for the xi1 branch of {p = 0}.
  static SymbolSpec custom(std::string label, Evaluator p, bool x_dependent, double branch_seed = 0.0);

  SymbolFamily family() const { return family_; }
  const std::vector<double>& params() const { return params_; }
  const std::string& label() const { return label_; }
  bool x_dependent() const { return x_dependent_; }
  /// The graph function a for families of the form xi1 - a(x, xi2).
  const GraphFunction* graph_function() const { return graph_ ? &graph_ : nullptr; }
  double branch_seed() const { return branch_seed_; }

  double value(const Vec2& x, const Vec2& xi) const;
  Vec2 gradient_xi(const Vec2& x, const Vec2& xi) const;
  /// d^r p / d xi2^r for r = 0..max_order.
  std::vector<double> xi2_derivatives(const Vec2& x, const Vec2& xi, int max_order) const;

 private:
  SymbolFamily family_ = SymbolFamily::Custom;
  std::vector<double> params_;
  std::string label_;
  bool x_dependent_ = false;
  GraphFunction graph_;
  Evaluator custom_;
  double branch_seed_ = 0.0;
};

/// Branch xi1 = g(xi2) of {p(x, .) = 0}: closed form for the named families, Newton (tolerance 1e-12) for Custom.
/// Evaluating where no real solution exists throws DomainError.
Graph1D graph_of(const SymbolSpec& sym, const Vec2& x);

struct ContactReport {
  Vec2 intersection = Vec2::Zero();
  /// Empty means no derivative up to max_order + 1 separated the graphs.
  std::optional<int> order;
  double first_nonzero_derivative = 0.0;
  /// Derivatives of g1 - g2 of orders 1, 2, ... up to the deciding order.
  std::vector<double> derivative_table;
  /// Some derivative fell inside the ambiguity band [tol/10, tol] and was counted as zero.
  bool inconclusive = false;
  double curvature_first = 0.0;
  double curvature_second = 0.0;
};

ContactReport contact_order(const Graph1D& g1, const Graph1D& g2, double xi2_0, int max_order);
ContactReport contact_order(const SymbolSpec& a_sym, const SymbolSpec& q_sym, const Vec2& xi0, int max_order,
                            const Vec2& x = Vec2::Zero());

struct QuantizationOptions {
  /// Permit the O(N^4) quadrature for x-dependent symbols above N = 128.
  bool allow_large = false;
};

/// Left quantization p(x, hD) u on the grid lattice.
Field2D apply_left_quantization(const SymbolSpec& sym, const Field2D& u, const QuantizationOptions& options = {});

/// Parses `name` or `name(key=value, ...)` into a symbol; see README for the names.
SymbolSpec parse_symbol(const std::string& text);
/// Parses a graph-function catalog name such as `circle_graph` or `contact_circle_graph(k=2, c=1)`.
GraphFunction parse_graph(const std::string& text);

}  // namespace qml
