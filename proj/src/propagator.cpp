#include "qml/propagator.hpp"

#include "qml/container_io.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <memory>
#include <ostream>

namespace qml {
namespace {

// One characteristic: position y, momentum eta, phase psi and d(y, eta)/d(y0, eta0).
struct CharState {
  double y = 0;
  double eta = 0;
  double psi = 0;
  Eigen::Matrix2d jac = Eigen::Matrix2d::Identity();
};

CharState axpy(const CharState& z, const CharState& k, double c) {
  return {z.y + c * k.y, z.eta + c * k.eta, z.psi + c * k.psi, z.jac + c * k.jac};
}

bool finite(const CharState& z) { return std::isfinite(z.y) && std::isfinite(z.eta) && std::isfinite(z.psi) && z.jac.allFinite(); }

CharState rhs(const GraphFunction& a, int s, double t, const CharState& z) {
  const GraphDerivatives d = a.derivatives(t, z.y, z.eta);
  CharState r;
  r.y = s * d.d_xi;
  r.eta = -s * d.d_x2;
  r.psi = s * (z.eta * d.d_xi - d.value);
  Eigen::Matrix2d m;
  m << d.d_x2_xi, d.d_xi_xi, -d.d_x2_x2, -d.d_x2_xi;
  r.jac = s * m * z.jac;
  return r;
}

CharState rk4(const GraphFunction& a, int s, double t, const CharState& z, double dt) {
  const CharState k1 = rhs(a, s, t, z);
  const CharState k2 = rhs(a, s, t + dt / 2, axpy(z, k1, dt / 2));
  const CharState k3 = rhs(a, s, t + dt / 2, axpy(z, k2, dt / 2));
  const CharState k4 = rhs(a, s, t + dt, axpy(z, k3, dt));
  CharState out = z;
  out.y += dt / 6 * (k1.y + 2 * k2.y + 2 * k3.y + k4.y);
  out.eta += dt / 6 * (k1.eta + 2 * k2.eta + 2 * k3.eta + k4.eta);
  out.psi += dt / 6 * (k1.psi + 2 * k2.psi + 2 * k3.psi + k4.psi);
  out.jac += dt / 6 * (k1.jac + 2 * k2.jac + 2 * k3.jac + k4.jac);
  return out;
}

// Uniform steps of size at most dt_max from t to target; false on failure (domain error or non-finite).
bool advance(const GraphFunction& a, int s, double t, double target, double dt_max, CharState& z) {
  const double span = target - t;
  if (span == 0) return true;
  const auto steps = static_cast<long>(std::ceil(std::abs(span) / dt_max - 1e-9));
  const double step = span / static_cast<double>(steps);
  try {
    for (long n = 0; n < steps; ++n) {
      z = rk4(a, s, t + static_cast<double>(n) * step, z, step);
      if (!finite(z)) return false;
    }
  } catch (const DomainError&) {
    return false;
  }
  return true;
}

double default_dt(double extent, double dt) {
  if (dt > 0) return dt;
  return extent > 0 ? std::min(1e-3, extent / 100) : 1e-3;
}

std::complex<double> phase_factor(double phase, double h) { return std::polar(1.0, phase / h); }

}  // namespace

FlowState HamiltonianFlow::state(Index i, size_t n) const {
  if (i < 0 || i >= size()) throw InvalidInput("HamiltonianFlow: trajectory index out of range");
  if (n >= valid_steps_[i]) throw DomainError("HamiltonianFlow: trajectory truncated before the requested time");
  return states_[i][n];
}

FlowState HamiltonianFlow::evaluate(const Vec2& p, double x1) const {
  const Vec2 slack = 1e-12 * (Vec2::Ones() + box_lo_.cwiseAbs().cwiseMax(box_hi_.cwiseAbs()));
  if ((p.array() < (box_lo_ - slack).array()).any() || (p.array() > (box_hi_ + slack).array()).any())
    throw DomainError("HamiltonianFlow: point outside the initial-data box of the flow");
  const double end = x1_max();
  if (end == 0 ? x1 != 0 : (x1 / end < -1e-12 || x1 / end > 1 + 1e-12))
    throw DomainError("HamiltonianFlow: x1 outside the integrated range");
  CharState z{p[0], p[1], 0.0, Eigen::Matrix2d::Identity()};
  if (times_.size() > 1) {
    const double step = times_[1];
    const auto full = std::min<long>(static_cast<long>(std::floor(x1 / step + 1e-9)), static_cast<long>(times_.size()) - 1);
    double t = 0;
    try {
      for (long n = 0; n < full; ++n) {
        z = rk4(a_, direction_, t, z, step);
        t = times_[n + 1];
      }
      if (x1 != t) z = rk4(a_, direction_, t, z, x1 - t);
    } catch (const DomainError&) {
      throw DomainError("HamiltonianFlow: symbol undefined along the trajectory");
    }
    if (!finite(z) || std::abs(z.y) > x2_limit_) throw DomainError("HamiltonianFlow: trajectory left the region");
  }
  return {z.y, z.eta, z.jac};
}

double HamiltonianFlow::conservation_error() const {
  double worst = 0;
  for (Index i = 0; i < size(); ++i) {
    if (truncated(i)) continue;
    const auto& end = states_[i].back();
    worst = std::max(worst, std::abs(a_(x1_max(), end.x2, end.xi2) - a_(0.0, initial_[i][0], initial_[i][1])));
  }
  return worst;
}

double HamiltonianFlow::symplectic_error() const {
  double worst = 0;
  for (Index i = 0; i < size(); ++i)
    for (size_t n = 0; n < valid_steps_[i]; ++n) worst = std::max(worst, std::abs(states_[i][n].jacobian.determinant() - 1));
  return worst;
}

HamiltonianFlow integrate_flow(const GraphFunction& a, const std::vector<Vec2>& initial, double x1_max,
                               const FlowOptions& options) {
  if (!a) throw InvalidInput("integrate_flow: symbol missing");
  if (initial.empty()) throw InvalidInput("integrate_flow: no initial data");
  if (options.direction != 1 && options.direction != -1) throw InvalidInput("integrate_flow: direction must be +1 or -1");
  if (!std::isfinite(x1_max)) throw InvalidInput("integrate_flow: x1_max must be finite");
  HamiltonianFlow f;
  f.a_ = a;
  f.direction_ = options.direction;
  f.x2_limit_ = options.x2_limit;
  f.initial_ = initial;
  f.box_lo_ = f.box_hi_ = initial.front();
  for (const auto& p : initial) {
    if (!p.allFinite()) throw InvalidInput("integrate_flow: non-finite initial datum");
    f.box_lo_ = f.box_lo_.cwiseMin(p);
    f.box_hi_ = f.box_hi_.cwiseMax(p);
  }
  const double dt = default_dt(std::abs(x1_max), options.dt);
  const long steps = x1_max == 0 ? 0 : static_cast<long>(std::ceil(std::abs(x1_max) / dt - 1e-9));
  const double step = steps == 0 ? 0.0 : x1_max / static_cast<double>(steps);
  f.dt_ = std::abs(step);
  f.times_.resize(steps + 1);
  for (long n = 0; n <= steps; ++n) f.times_[n] = static_cast<double>(n) * step;
  f.times_.back() = x1_max;
  f.states_.resize(initial.size());
  f.valid_steps_.assign(initial.size(), 0);
  parallel_for(0, static_cast<Index>(initial.size()), [&](Index i) {
    auto& out = f.states_[i];
    out.reserve(steps + 1);
    CharState z{initial[i][0], initial[i][1], 0.0, Eigen::Matrix2d::Identity()};
    out.push_back({z.y, z.eta, z.jac});
    try {
      for (long n = 0; n < steps; ++n) {
        z = rk4(a, options.direction, f.times_[n], z, step);
        if (!finite(z) || std::abs(z.y) > options.x2_limit) break;
        out.push_back({z.y, z.eta, z.jac});
      }
    } catch (const DomainError&) {
    }
    f.valid_steps_[i] = out.size();
  });
  return f;
}

HamiltonianFlow integrate_flow(const SymbolSpec& a, const std::vector<Vec2>& initial, double x1_max,
                               const FlowOptions& options) {
  const GraphFunction* g = a.graph_function();
  if (g == nullptr) throw InvalidInput("integrate_flow: symbol " + a.label() + " is not of the form xi1 - a(x, xi2)");
  return integrate_flow(*g, initial, x1_max, options);
}

/// Characteristics for every (y0, xi) pair of a General table, advanced in one x1 direction at a time.
class PhaseBuilder {
 public:
  PhaseBuilder(const GraphFunction& a, const GridSpec& grid, IndexRange yw, IndexRange xw, const PhaseOptions& options,
               double extent)
      : a_(a), grid_(grid), yw_(yw), xw_(xw), options_(options), dt_(default_dt(extent, options.dt)) {
    const double dy = grid.dx();
    // Margin of initial points so the images still cover the window after drifting for |x1| <= extent.
    double drift = 0;
    const Index ystep = std::max<Index>(1, yw.size() / 32), xstep = std::max<Index>(1, xw.size() / 32);
    for (Index j = yw.begin; j < yw.end + ystep; j += ystep)
      for (Index m = xw.begin; m < xw.end + xstep; m += xstep) {
        try {
          const double v = a.d_xi(0.0, grid.x(std::min(j, yw.end - 1)), grid.xi(1, std::min(m, xw.end - 1)));
          if (std::isfinite(v)) drift = std::max(drift, std::abs(v));
        } catch (const DomainError&) {
        }
      }
    const auto margin = std::min<Index>(static_cast<Index>(std::ceil(2 * drift * extent / dy)) + 4, 4 * grid.points_per_axis);
    for (Index j = yw.begin - margin; j < yw.end + margin; ++j) y0_.push_back(grid.x(j));
    for (Index m = xw.begin; m < xw.end; ++m) xi_.push_back(grid.xi(1, m));
    reset();
  }

  void reset() {
    t_ = 0;
    z_.assign(xi_.size(), {});
    ok_.assign(xi_.size(), 1);
    for (size_t m = 0; m < xi_.size(); ++m) {
      z_[m].resize(y0_.size());
      for (size_t k = 0; k < y0_.size(); ++k) z_[m][k] = {y0_[k], xi_[m], y0_[k] * xi_[m], Eigen::Matrix2d::Identity()};
    }
  }

  double time() const { return t_; }

  /// Advances to `target` one step at a time; stops at the first step where dy/dy0 falls below the caustic
  /// threshold and returns false with time() at the last safe step.
  bool advance(double target) {
    const double span = target - t_;
    if (span == 0) return true;
    const auto steps = static_cast<long>(std::ceil(std::abs(span) / dt_ - 1e-9));
    const double step = span / static_cast<double>(steps);
    const double t0 = t_;
    for (long n = 0; n < steps; ++n) {
      const double t = t0 + static_cast<double>(n) * step;
      std::vector<std::vector<CharState>> next = z_;
      std::vector<double> min_j(xi_.size(), std::numeric_limits<double>::infinity());
      parallel_for(0, static_cast<Index>(xi_.size()), [&](Index m) {
        if (!ok_[m]) return;
        for (size_t k = 0; k < y0_.size(); ++k) {
          CharState z = z_[m][k];
          if (!qml::advance(a_, -1, t, t + step, std::abs(step) * (1 + 1e-12), z)) {
            ok_[m] = 0;
            return;
          }
          next[m][k] = z;
          min_j[m] = std::min(min_j[m], z.jac(0, 0));
        }
      });
      double worst = std::numeric_limits<double>::infinity();
      for (size_t m = 0; m < xi_.size(); ++m)
        if (ok_[m]) worst = std::min(worst, min_j[m]);
      if (worst < options_.caustic_threshold) return false;
      z_ = std::move(next);
      t_ = n + 1 == steps ? target : t0 + static_cast<double>(n + 1) * step;
    }
    return true;
  }

  /// Phase and amplitude at the current time on the window, by Hermite interpolation in y of psi with
  /// slope eta. Uncovered points get amplitude 0.
  void slice(Eigen::MatrixXd& phase, Eigen::MatrixXd& amp, Warnings* warnings) const {
    const Index ny = yw_.size(), nx = xw_.size();
    phase.resize(ny, nx);
    amp.resize(ny, nx);
    std::vector<Index> uncovered(nx, 0);
    parallel_for(0, nx, [&](Index m) {
      const double xi = xi_[m];
      if (!ok_[m]) {
        for (Index j = 0; j < ny; ++j) {
          phase(j, m) = grid_.x(yw_.begin + j) * xi;
          amp(j, m) = 0;
        }
        uncovered[m] = ny;
        return;
      }
      const auto& z = z_[m];
      for (Index j = 0; j < ny; ++j) {
        const double y = grid_.x(yw_.begin + j);
        const auto it = std::upper_bound(z.begin(), z.end(), y, [](double v, const CharState& c) { return v < c.y; });
        if (it == z.begin() || it == z.end()) {
          phase(j, m) = y * xi;
          amp(j, m) = 0;
          ++uncovered[m];
          continue;
        }
        const CharState& lo = *(it - 1);
        const CharState& hi = *it;
        const double w = hi.y - lo.y;
        const double s = (y - lo.y) / w;
        const double s2 = s * s, s3 = s2 * s;
        phase(j, m) = (2 * s3 - 3 * s2 + 1) * lo.psi + (s3 - 2 * s2 + s) * w * lo.eta + (-2 * s3 + 3 * s2) * hi.psi +
                      (s3 - s2) * w * hi.eta;
        const double jac = (1 - s) * lo.jac(0, 0) + s * hi.jac(0, 0);
        amp(j, m) = options_.transport_correction ? 1 / std::sqrt(jac) : 1.0;
      }
    });
    Index bad_columns = 0, holes = 0;
    for (Index m = 0; m < nx; ++m) {
      if (!ok_[m]) ++bad_columns;
      else holes += uncovered[m];
    }
    if (bad_columns > 0)
      warn(warnings, "build_phase: symbol undefined along the characteristics of " + std::to_string(bad_columns) +
                         " lattice frequencies; their amplitude is set to 0");
    if (holes > 0)
      warn(warnings, "build_phase: " + std::to_string(holes) + " table points not reached by the characteristics");
  }

 private:
  const GraphFunction& a_;
  GridSpec grid_;
  IndexRange yw_, xw_;
  PhaseOptions options_;
  double dt_;
  double t_ = 0;
  std::vector<double> y0_;
  std::vector<double> xi_;
  std::vector<std::vector<CharState>> z_;
  std::vector<char> ok_;
};

size_t PhaseTable::slice_index(double x1) const {
  for (size_t n = 0; n < x1_.size(); ++n)
    if (std::abs(x1_[n] - x1) <= 1e-12 * std::max(1.0, std::abs(x1))) return n;
  if (x1 > horizon_forward_ || x1 < horizon_backward_)
    throw Refused("phase table: x1 = " + std::to_string(x1) + " is past the caustic horizon [" +
                  std::to_string(horizon_backward_) + ", " + std::to_string(horizon_forward_) + "]");
  throw InvalidInput("phase table: no slice at x1 = " + std::to_string(x1));
}

double PhaseTable::phase(size_t n, Index j, Index m) const {
  const double y = grid_.x(j), xi = grid_.xi(1, m);
  if (kind_ == PhaseKind::TranslationInvariant) return y * xi + x1_.at(n) * a_(0.0, 0.0, xi);
  if (!y_window_.contains(j) || !xi_window_.contains(m)) throw InvalidInput("phase table: point outside the windows");
  return phase_.at(n)(j - y_window_.begin, m - xi_window_.begin);
}

double PhaseTable::amplitude(size_t n, Index j, Index m) const {
  if (kind_ == PhaseKind::TranslationInvariant) return 1.0;
  if (!y_window_.contains(j) || !xi_window_.contains(m)) return 0.0;
  return amplitude_.at(n)(j - y_window_.begin, m - xi_window_.begin);
}

namespace {

IndexRange full_range(const GridSpec& g) { return {0, g.points_per_axis}; }

void check_window(const IndexRange& w, const GridSpec& g, const char* what) {
  if (w.begin < 0 || w.end > g.points_per_axis || w.size() < 2)
    throw InvalidInput(std::string("build_phase: ") + what + " window must be a sub-range of the grid with at least 2 points");
}

// Builds General slices for the given x1 values of one sign, in order of increasing |x1|.
// Returns the slices that were reached before a caustic.
std::map<double, std::pair<Eigen::MatrixXd, Eigen::MatrixXd>> build_direction(PhaseBuilder& builder,
                                                                                std::vector<double> xs, int sign,
                                                                                double* horizon, Warnings* warnings) {
  std::map<double, std::pair<Eigen::MatrixXd, Eigen::MatrixXd>> out;
  std::sort(xs.begin(), xs.end(), [sign](double p, double q) { return sign * p < sign * q; });
  builder.reset();
  for (double x : xs) {
    if (!builder.advance(x)) {
      *horizon = builder.time();
      warn(warnings, "build_phase: caustic (dy/dy0 below threshold) after x1 = " + std::to_string(builder.time()) +
                         "; slices beyond it dropped");
      break;
    }
    Eigen::MatrixXd p, b;
    builder.slice(p, b, out.empty() ? warnings : nullptr);
    out.emplace(x, std::make_pair(std::move(p), std::move(b)));
  }
  return out;
}

}  // namespace

PhaseTable build_phase(const GraphFunction& a, const GridSpec& grid, const std::vector<double>& x1_slices,
                       const PhaseOptions& options) {
  if (!a) throw InvalidInput("build_phase: symbol missing");
  grid.validate();
  if (x1_slices.empty()) throw InvalidInput("build_phase: no x1 slices");
  for (double x : x1_slices)
    if (!std::isfinite(x)) throw InvalidInput("build_phase: non-finite x1");
  if (!(options.caustic_threshold > 0 && options.caustic_threshold < 1))
    throw InvalidInput("build_phase: caustic threshold must lie in (0, 1)");
  PhaseTable t;
  t.grid_ = grid;
  t.a_ = a;
  t.y_window_ = full_range(grid);
  t.xi_window_ = full_range(grid);
  if (!a.x_dependent()) {
    t.kind_ = PhaseKind::TranslationInvariant;
    t.x1_ = x1_slices;
    return t;
  }
  t.kind_ = PhaseKind::General;
  if (options.y_window) t.y_window_ = *options.y_window;
  if (options.xi_window) t.xi_window_ = *options.xi_window;
  check_window(t.y_window_, grid, "y");
  check_window(t.xi_window_, grid, "xi");
  double extent = 0;
  std::vector<double> forward, backward;
  for (double x : x1_slices) {
    extent = std::max(extent, std::abs(x));
    (x >= 0 ? forward : backward).push_back(x);
  }
  PhaseBuilder builder(a, grid, t.y_window_, t.xi_window_, options, extent);
  auto fwd = build_direction(builder, forward, 1, &t.horizon_forward_, &t.warnings_);
  auto bwd = build_direction(builder, backward, -1, &t.horizon_backward_, &t.warnings_);
  for (double x : x1_slices) {
    auto& source = x >= 0 ? fwd : bwd;
    auto it = source.find(x);
    if (it == source.end()) continue;
    t.x1_.push_back(x);
    t.phase_.push_back(it->second.first);
    t.amplitude_.push_back(it->second.second);
  }
  return t;
}

double eikonal_residual(const GraphFunction& a, const GridSpec& grid, double x1, double dx1, const PhaseOptions& options) {
  if (!(dx1 > 0)) throw InvalidInput("eikonal_residual: dx1 must be positive");
  const PhaseTable t = build_phase(a, grid, {x1 - dx1, x1, x1 + dx1}, options);
  const size_t lo = t.slice_index(x1 - dx1), mid = t.slice_index(x1), hi = t.slice_index(x1 + dx1);
  const double dy = grid.dx();
  const IndexRange yw = t.y_window(), xw = t.xi_window();
  std::vector<double> worst(xw.size(), 0.0);
  parallel_for(0, xw.size(), [&](Index c) {
    const Index m = xw.begin + c;
    for (Index j = yw.begin + 1; j + 1 < yw.end; ++j) {
      bool covered = true;
      for (size_t n : {lo, mid, hi})
        for (Index jj : {j - 1, j, j + 1}) covered = covered && t.amplitude(n, jj, m) > 0;
      if (!covered) continue;
      const double d_x1 = (t.phase(hi, j, m) - t.phase(lo, j, m)) / (2 * dx1);
      const double d_y = (t.phase(mid, j + 1, m) - t.phase(mid, j - 1, m)) / (2 * dy);
      try {
        const double r = std::abs(d_x1 - a(x1, grid.x(j), d_y));
        if (std::isfinite(r)) worst[c] = std::max(worst[c], r);
      } catch (const DomainError&) {
      }
    }
  });
  return worst.empty() ? 0.0 : *std::max_element(worst.begin(), worst.end());
}

IndexRange position_window(const Eigen::VectorXcd& g, double tol, Index pad) {
  const Index n = g.size();
  const double peak = g.cwiseAbs().maxCoeff();
  if (!(peak > 0)) return {0, std::min<Index>(2, n)};
  Index lo = n, hi = -1;
  for (Index j = 0; j < n; ++j)
    if (std::abs(g[j]) > tol * peak) {
      lo = std::min(lo, j);
      hi = j;
    }
  return {std::max<Index>(0, lo - pad), std::min<Index>(n, hi + 1 + pad)};
}

IndexRange frequency_window(const Eigen::VectorXcd& g, const GridSpec& grid, double tol, Index pad) {
  return position_window(semiclassical_fft_1d<double>(g, grid.half_width, grid.h, grid.center[1]), tol, pad);
}

namespace {

// Output frequencies reached at time x1 from input positions yw and frequencies fw.
IndexRange transported_window(const GraphFunction& a, const GridSpec& grid, const IndexRange& yw, const IndexRange& fw,
                              double x1, Index pad, double dt_option = 0) {
  const IndexRange unchanged{std::max<Index>(0, fw.begin - pad), std::min(grid.points_per_axis, fw.end + pad)};
  if (!a.x_dependent() || x1 == 0) return unchanged;
  const double dt = default_dt(std::abs(x1), dt_option);
  const Index ny = std::min<Index>(yw.size(), 64), nf = std::min<Index>(fw.size(), 16);
  std::vector<double> los(ny, std::numeric_limits<double>::infinity()), his(ny, -std::numeric_limits<double>::infinity());
  parallel_for(0, ny, [&](Index r) {
    const Index j = yw.begin + (ny == 1 ? 0 : r * (yw.size() - 1) / (ny - 1));
    for (Index c = 0; c < nf; ++c) {
      const Index m = fw.begin + (nf == 1 ? 0 : c * (fw.size() - 1) / (nf - 1));
      // (y, eta) is where a characteristic started at (y0, xi) sits at time x1; run it back to 0.
      CharState z{grid.x(j), grid.xi(1, m), 0.0, Eigen::Matrix2d::Identity()};
      if (!advance(a, -1, x1, 0.0, dt, z)) continue;
      los[r] = std::min(los[r], z.eta);
      his[r] = std::max(his[r], z.eta);
    }
  });
  const double lo = *std::min_element(los.begin(), los.end());
  const double hi = *std::max_element(his.begin(), his.end());
  if (!(lo <= hi)) return unchanged;
  // Keep the input window's width around the transported range.
  const double spread = 0.5 * static_cast<double>(fw.size()) * grid.dxi();
  const auto index_of = [&](double xi) { return static_cast<Index>(std::floor((xi - grid.xi(1, 0)) / grid.dxi())); };
  return {std::max<Index>(0, index_of(lo - spread) - pad), std::min(grid.points_per_axis, index_of(hi + spread) + 1 + pad)};
}

IndexRange hull(const IndexRange& p, const IndexRange& q) { return {std::min(p.begin, q.begin), std::max(p.end, q.end)}; }

}  // namespace

IndexRange output_frequency_window(const GraphFunction& a, const GridSpec& grid, const Eigen::VectorXcd& g, double x1,
                                   double tol, Index pad) {
  return transported_window(a, grid, position_window(g, tol, 0), frequency_window(g, grid, tol, 0), x1, pad);
}

namespace {

void check_line(const PhaseTable& t, const Eigen::VectorXcd& g) {
  if (g.size() != t.grid().points_per_axis) throw InvalidInput("apply_w: field length does not match the grid");
  if (!g.allFinite()) throw InvalidInput("apply_w: non-finite input");
}

Eigen::VectorXcd multiplier(const PhaseTable& t, const Eigen::VectorXcd& g, double x1, double sign) {
  const GridSpec& grid = t.grid();
  Eigen::VectorXcd spec = semiclassical_fft_1d<double>(g, grid.half_width, grid.h, grid.center[1]);
  for (Index m = 0; m < spec.size(); ++m) {
    const double xi = grid.xi(1, m);
    spec[m] *= phase_factor(-sign * x1 * t.symbol()(0.0, 0.0, xi), grid.h);
  }
  return semiclassical_fft_1d<double>(spec, grid.half_width, grid.h, grid.center[1], true);
}

double outside_fraction(const Eigen::VectorXcd& v, const IndexRange& w) {
  double in = 0, all = 0;
  for (Index i = 0; i < v.size(); ++i) {
    const double e = std::norm(v[i]);
    all += e;
    if (w.contains(i)) in += e;
  }
  return all > 0 ? std::sqrt(std::max(0.0, all - in) / all) : 0.0;
}

void check_windows(const PhaseTable& t, const Eigen::VectorXcd& g, Warnings* warnings) {
  const double pos = outside_fraction(g, t.y_window());
  if (pos > 1e-10) warn(warnings, "apply_w: " + std::to_string(pos) + " of the input lies outside the y-window");
}

Eigen::VectorXcd general_w(const GridSpec& grid, const IndexRange& yw, const IndexRange& xw, const Eigen::MatrixXd& phase,
                           const Eigen::MatrixXd& amp, const Eigen::VectorXcd& g) {
  const double h = grid.h;
  const Index n = grid.points_per_axis;
  Eigen::VectorXcd coef(xw.size());
  parallel_for(0, xw.size(), [&](Index c) {
    std::complex<double> acc = 0;
    for (Index r = 0; r < yw.size(); ++r)
      if (amp(r, c) != 0.0) acc += phase_factor(-phase(r, c), h) * amp(r, c) * g[yw.begin + r];
    coef[c] = acc;
  });
  Eigen::VectorXcd out(n);
  parallel_for(0, n, [&](Index i) {
    const double x = grid.x(i);
    std::complex<double> acc = 0;
    for (Index c = 0; c < xw.size(); ++c) acc += phase_factor(x * grid.xi(1, xw.begin + c), h) * coef[c];
    out[i] = acc / static_cast<double>(n);
  });
  return out;
}

Eigen::VectorXcd general_w_star(const GridSpec& grid, const IndexRange& yw, const IndexRange& xw,
                                const Eigen::MatrixXd& phase, const Eigen::MatrixXd& amp, const Eigen::VectorXcd& f) {
  const double h = grid.h;
  const Index n = grid.points_per_axis;
  Eigen::VectorXcd coef(xw.size());
  parallel_for(0, xw.size(), [&](Index c) {
    const double xi = grid.xi(1, xw.begin + c);
    std::complex<double> acc = 0;
    for (Index i = 0; i < n; ++i) acc += phase_factor(-grid.x(i) * xi, h) * f[i];
    coef[c] = acc;
  });
  Eigen::VectorXcd out = Eigen::VectorXcd::Zero(n);
  parallel_for(0, yw.size(), [&](Index r) {
    std::complex<double> acc = 0;
    for (Index c = 0; c < xw.size(); ++c)
      if (amp(r, c) != 0.0) acc += phase_factor(phase(r, c), h) * amp(r, c) * coef[c];
    out[yw.begin + r] = acc / static_cast<double>(n);
  });
  return out;
}

}  // namespace

Eigen::VectorXcd apply_w(const PhaseTable& t, const Eigen::VectorXcd& g, double x1, Warnings* warnings) {
  check_line(t, g);
  if (t.kind() == PhaseKind::TranslationInvariant) return multiplier(t, g, x1, 1.0);
  const size_t n = t.slice_index(x1);
  check_windows(t, g, warnings);
  return general_w(t.grid(), t.y_window(), t.xi_window(), t.phase_matrix(n), t.amplitude_matrix(n), g);
}

Eigen::VectorXcd apply_w_star(const PhaseTable& t, const Eigen::VectorXcd& g, double x1, Warnings*) {
  check_line(t, g);
  if (t.kind() == PhaseKind::TranslationInvariant) return multiplier(t, g, x1, -1.0);
  const size_t n = t.slice_index(x1);
  return general_w_star(t.grid(), t.y_window(), t.xi_window(), t.phase_matrix(n), t.amplitude_matrix(n), g);
}

ConjugatedSymbols conjugated_symbol(const GraphFunction& a, const GraphFunction& q, const HamiltonianFlow& flow, double x1) {
  if (!a || !q) throw InvalidInput("conjugated_symbol: symbol missing");
  ConjugatedSymbols out;
  out.x1 = x1;
  const bool x_dep = a.x_dependent() || q.x_dependent();
  const auto shared = std::make_shared<const HamiltonianFlow>(flow);
  auto pull = [shared, x1](const GraphFunction& f) {
    return [shared, f, x1](double, double x2, double xi) {
      if (x1 == 0) return f(0.0, x2, xi);
      const FlowState s = shared->evaluate(Vec2(x2, xi), x1);
      return f(x1, s.x2, s.xi2);
    };
  };
  out.a_tilde = GraphFunction::from_callable("pullback(" + a.name() + ")", pull(a), x_dep);
  out.q_tilde = GraphFunction::from_callable("pullback(" + q.name() + ")", pull(q), x_dep);
  const GraphFunction at = out.a_tilde, qt = out.q_tilde;
  out.p2_tilde = SymbolSpec::custom(
      "xi1 + pullback(" + a.name() + ") - pullback(" + q.name() + ")",
      [at, qt](const Vec2& x, const Vec2& xi) { return xi[0] + at(x[0], x[1], xi[1]) - qt(x[0], x[1], xi[1]); }, x_dep);
  return out;
}

Field2D quasimode_pushforward(const GraphFunction& a, const Field2D& u, const PhaseOptions& options, Warnings* warnings) {
  if (!a) throw InvalidInput("quasimode_pushforward: symbol missing");
  u.check_shape();
  detail::require_finite(u.values, "quasimode_pushforward");
  const GridSpec& grid = u.grid;
  const Index n = grid.points_per_axis;
  Field2D v(grid);
  try {
    v.grid.center[0] = grid.center[0] - a(0.0, 0.0, grid.center[1]);
  } catch (const DomainError&) {
  }
  if (!std::isfinite(v.grid.center[0])) v.grid.center[0] = grid.center[0];

  if (!a.x_dependent()) {
    const PhaseTable t = build_phase(a, grid, {0.0}, options);
    parallel_for(0, n, [&](Index i) {
      const Eigen::VectorXcd row = u.values.row(i).transpose();
      v.values.row(i) = multiplier(t, row, grid.x(i), 1.0).transpose();
    });
    return v;
  }

  // Rows that matter, and windows covering the support of u in x2 and in xi2.
  Eigen::VectorXd row_norm = u.values.rowwise().norm();
  const double peak = row_norm.maxCoeff();
  if (!(peak > 0)) return v;
  Eigen::VectorXcd col_peak = Eigen::VectorXcd::Zero(n), freq_peak = Eigen::VectorXcd::Zero(n);
  std::vector<Index> rows;
  for (Index i = 0; i < n; ++i) {
    if (row_norm[i] < 1e-12 * peak) continue;
    rows.push_back(i);
    const Eigen::VectorXcd row = u.values.row(i).transpose();
    const Eigen::VectorXcd spec = semiclassical_fft_1d<double>(row, grid.half_width, grid.h, grid.center[1]);
    for (Index j = 0; j < n; ++j) {
      col_peak[j] = std::max(std::abs(col_peak[j]), std::abs(row[j]));
      freq_peak[j] = std::max(std::abs(freq_peak[j]), std::abs(spec[j]));
    }
  }
  double lo_x = 0, hi_x = 0;
  for (Index i : rows) {
    lo_x = std::min(lo_x, grid.x(i));
    hi_x = std::max(hi_x, grid.x(i));
  }
  const double extent = std::max(-lo_x, hi_x);
  PhaseOptions opts = options;
  if (!opts.y_window) opts.y_window = position_window(col_peak);
  if (!opts.xi_window) {
    // Output frequencies over the whole x1 range of u, sampled at a few times in each direction.
    const IndexRange fw = position_window(freq_peak, 1e-12, 0);
    IndexRange w = transported_window(a, grid, *opts.y_window, fw, 0.0, 4);
    for (int s = 1; s <= 8; ++s) {
      w = hull(w, transported_window(a, grid, *opts.y_window, fw, hi_x * s / 8, 4, opts.dt));
      w = hull(w, transported_window(a, grid, *opts.y_window, fw, lo_x * s / 8, 4, opts.dt));
    }
    opts.xi_window = w;
  }
  check_window(*opts.y_window, grid, "y");
  check_window(*opts.xi_window, grid, "xi");
  PhaseBuilder builder(a, grid, *opts.y_window, *opts.xi_window, opts, extent);
  for (int sign : {1, -1}) {
    std::vector<Index> these;
    for (Index i : rows)
      if ((grid.x(i) >= 0) == (sign > 0)) these.push_back(i);
    std::sort(these.begin(), these.end(), [&](Index p, Index q) { return sign * grid.x(p) < sign * grid.x(q); });
    builder.reset();
    bool first = true;
    for (Index i : these) {
      if (!builder.advance(grid.x(i)))
        throw Refused("quasimode_pushforward: caustic after x1 = " + std::to_string(builder.time()) +
                      " inside the support of u");
      Eigen::MatrixXd p, b;
      builder.slice(p, b, first ? warnings : nullptr);
      first = false;
      const Eigen::VectorXcd row = u.values.row(i).transpose();
      v.values.row(i) = general_w(grid, *opts.y_window, *opts.xi_window, p, b, row).transpose();
    }
  }
  return v;
}

void write_phase_table(std::ostream& out, const PhaseTable& t) {
  const GridSpec& g = t.grid();
  io::write_magic(out, "QMP1");
  io::write_i64(out, g.points_per_axis);
  io::write_f64(out, g.half_width);
  io::write_f64(out, g.h);
  io::write_f64(out, g.center[0]);
  io::write_f64(out, g.center[1]);
  io::write_i64(out, t.kind() == PhaseKind::General ? 1 : 0);
  const std::string& name = t.symbol().name();
  io::write_i64(out, static_cast<std::int64_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  io::write_i64(out, t.y_window().begin);
  io::write_i64(out, t.y_window().end);
  io::write_i64(out, t.xi_window().begin);
  io::write_i64(out, t.xi_window().end);
  io::write_f64(out, t.horizon_forward());
  io::write_f64(out, t.horizon_backward());
  io::write_i64(out, static_cast<std::int64_t>(t.slices().size()));
  for (size_t n = 0; n < t.slices().size(); ++n) {
    io::write_f64(out, t.slices()[n]);
    if (t.kind() != PhaseKind::General) continue;
    const auto& p = t.phase_matrix(n);
    const auto& b = t.amplitude_matrix(n);
    for (Index r = 0; r < p.rows(); ++r)
      for (Index c = 0; c < p.cols(); ++c) {
        io::write_f64(out, p(r, c));
        io::write_f64(out, b(r, c));
      }
  }
  if (!out) throw Error("write_phase_table: stream failure");
}

PhaseTable read_phase_table(std::istream& in) {
  io::expect_magic(in, "QMP1");
  PhaseTable t;
  const auto n = io::read_i64(in);
  if (n < 16 || n > (1 << 16)) throw InvalidInput("read_phase_table: implausible grid size");
  t.grid_.points_per_axis = n;
  t.grid_.half_width = io::read_f64(in);
  t.grid_.h = io::read_f64(in);
  t.grid_.center[0] = io::read_f64(in);
  t.grid_.center[1] = io::read_f64(in);
  t.grid_.validate();
  t.kind_ = io::read_i64(in) == 1 ? PhaseKind::General : PhaseKind::TranslationInvariant;
  const auto len = io::read_i64(in);
  if (len < 0 || len > 4096) throw InvalidInput("read_phase_table: implausible symbol name length");
  std::string name(static_cast<size_t>(len), '\0');
  in.read(name.data(), len);
  if (!in) throw InvalidInput("read_phase_table: truncated input");
  t.a_ = parse_graph(name);
  t.y_window_ = {io::read_i64(in), io::read_i64(in)};
  t.xi_window_ = {io::read_i64(in), io::read_i64(in)};
  check_window(t.y_window_, t.grid_, "y");
  check_window(t.xi_window_, t.grid_, "xi");
  t.horizon_forward_ = io::read_f64(in);
  t.horizon_backward_ = io::read_f64(in);
  const auto count = io::read_i64(in);
  if (count < 0 || count > 100000) throw InvalidInput("read_phase_table: implausible slice count");
  for (std::int64_t s = 0; s < count; ++s) {
    t.x1_.push_back(io::read_f64(in));
    if (t.kind_ != PhaseKind::General) continue;
    Eigen::MatrixXd p(t.y_window_.size(), t.xi_window_.size()), b(p.rows(), p.cols());
    for (Index r = 0; r < p.rows(); ++r)
      for (Index c = 0; c < p.cols(); ++c) {
        p(r, c) = io::read_f64(in);
        b(r, c) = io::read_f64(in);
      }
    t.phase_.push_back(std::move(p));
    t.amplitude_.push_back(std::move(b));
  }
  return t;
}

}  // namespace qml
