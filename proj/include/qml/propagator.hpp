#pragma once

#include "qml/grid.hpp"
#include "qml/symbols.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace qml {

/// Position and momentum along one characteristic, with d(x2, xi2) / d(x2_0, xi2_0).
struct FlowState {
  double x2 = 0;
  double xi2 = 0;
  Eigen::Matrix2d jacobian = Eigen::Matrix2d::Identity();
};

struct FlowOptions {
  /// RK4 step; 0 picks min(1e-3, |x1_max| / 100).
  double dt = 0;
  /// +1: dx2/dx1 = d_xi a, dxi2/dx1 = -d_x2 a.  -1 runs the same vector field reversed, which is
  /// the flow of the eikonal characteristics and of the Egorov pullback for W(x1) = exp(-i x1 a / h).
  int direction = 1;
  /// Trajectories with |x2| beyond this are truncated.
  double x2_limit = std::numeric_limits<double>::infinity();
};

/// Characteristics of a(x1, x2, xi2) from a set of initial data, recorded at every step.
class HamiltonianFlow {
 public:
  HamiltonianFlow() = default;

  const GraphFunction& symbol() const { return a_; }
  int direction() const { return direction_; }
  double dt() const { return dt_; }
  double x1_max() const { return times_.empty() ? 0.0 : times_.back(); }
  const std::vector<double>& times() const { return times_; }
  Index size() const { return static_cast<Index>(initial_.size()); }
  const Vec2& initial(Index i) const { return initial_[i]; }
  /// State of trajectory i at times()[n].
  FlowState state(Index i, size_t n) const;
  bool truncated(Index i) const { return valid_steps_[i] < times_.size(); }
  /// Number of recorded times before the trajectory was truncated.
  size_t valid_steps(Index i) const { return valid_steps_[i]; }

  /// Integrates from an arbitrary (x2_0, xi2_0) inside the bounding box of the initial data,
  /// with the same step rule. Throws DomainError outside the box or past the recorded range.
  FlowState evaluate(const Vec2& x2_xi2, double x1) const;

  /// max |a(end) - a(start)| over untruncated trajectories; meaningful for x1-independent a.
  double conservation_error() const;
  /// max |det jacobian - 1| over all recorded states.
  double symplectic_error() const;

 private:
  friend HamiltonianFlow integrate_flow(const GraphFunction&, const std::vector<Vec2>&, double, const FlowOptions&);

  GraphFunction a_;
  int direction_ = 1;
  double dt_ = 1e-3;
  double x2_limit_ = std::numeric_limits<double>::infinity();
  std::vector<double> times_;
  std::vector<Vec2> initial_;
  std::vector<std::vector<FlowState>> states_;
  std::vector<size_t> valid_steps_;
  Vec2 box_lo_ = Vec2::Zero(), box_hi_ = Vec2::Zero();
};

/// Classical RK4 integration of the Hamiltonian system of a over [0, x1_max] (x1_max may be negative).
HamiltonianFlow integrate_flow(const GraphFunction& a, const std::vector<Vec2>& initial, double x1_max,
                               const FlowOptions& options = {});
/// Same, for a graph symbol xi1 - a.
HamiltonianFlow integrate_flow(const SymbolSpec& a, const std::vector<Vec2>& initial, double x1_max,
                               const FlowOptions& options = {});

/// Half-open index range [begin, end).
struct IndexRange {
  Index begin = 0;
  Index end = 0;
  Index size() const { return end - begin; }
  bool contains(Index i) const { return i >= begin && i < end; }
  bool operator==(const IndexRange&) const = default;
};

enum class PhaseKind {
  /// x-independent a: the phase is y xi + x1 a(xi) and W(x1) is the multiplier exp(-i x1 a(hD) / h).
  TranslationInvariant,
  /// Phase and amplitude tabulated on a y-window times xi-window from the characteristics.
  General
};

struct PhaseOptions {
  /// Amplitude |dy/dy_0|^{-1/2} instead of 1.
  bool transport_correction = true;
  /// Caustic when dy/dy_0 drops below this.
  double caustic_threshold = 0.1;
  /// RK4 step; 0 picks min(1e-3, max |x1| / 100).
  double dt = 0;
  /// Input positions and output lattice frequencies covered by a General table; full grid when empty.
  std::optional<IndexRange> y_window;
  std::optional<IndexRange> xi_window;
};

/// Eikonal phase psi(x1, y, xi) and amplitude b of W(x1) g(x2) = (2 pi h)^{-1} integral
/// exp(i (x2 xi - psi) / h) b g(y) dy dxi, where d_x1 psi = a(x1, y, d_y psi) and psi(0) = y xi.
class PhaseTable {
 public:
  PhaseKind kind() const { return kind_; }
  const GridSpec& grid() const { return grid_; }
  const GraphFunction& symbol() const { return a_; }
  const std::vector<double>& slices() const { return x1_; }
  const IndexRange& y_window() const { return y_window_; }
  const IndexRange& xi_window() const { return xi_window_; }
  /// Slices with x1 in [horizon_backward, horizon_forward] are free of caustics.
  double horizon_forward() const { return horizon_forward_; }
  double horizon_backward() const { return horizon_backward_; }
  const Warnings& warnings() const { return warnings_; }

  /// Index of the slice at x1; Refused past a caustic horizon, InvalidInput when not tabulated.
  size_t slice_index(double x1) const;
  /// psi at slice n, input index j (grid x2 index), lattice index m.
  double phase(size_t n, Index j, Index m) const;
  double amplitude(size_t n, Index j, Index m) const;

  /// Raw General-table storage: rows are the y-window, columns the xi-window.
  const Eigen::MatrixXd& phase_matrix(size_t n) const { return phase_[n]; }
  const Eigen::MatrixXd& amplitude_matrix(size_t n) const { return amplitude_[n]; }

 private:
  friend PhaseTable build_phase(const GraphFunction&, const GridSpec&, const std::vector<double>&,
                                const PhaseOptions&);
  friend PhaseTable read_phase_table(std::istream&);
  friend class PhaseBuilder;

  PhaseKind kind_ = PhaseKind::TranslationInvariant;
  GridSpec grid_;
  GraphFunction a_;
  std::vector<double> x1_;
  IndexRange y_window_;
  IndexRange xi_window_;
  double horizon_forward_ = std::numeric_limits<double>::infinity();
  double horizon_backward_ = -std::numeric_limits<double>::infinity();
  Warnings warnings_;
  std::vector<Eigen::MatrixXd> phase_;
  std::vector<Eigen::MatrixXd> amplitude_;
};

/// Tabulates the phase at the given x1 slices on the x2 axis of `grid`. x-independent a gives a
/// TranslationInvariant table; otherwise slices past a caustic are dropped and the horizon recorded.
PhaseTable build_phase(const GraphFunction& a, const GridSpec& grid, const std::vector<double>& x1_slices,
                       const PhaseOptions& options = {});

/// max over interior (y, xi) of |d_x1 psi - a(x1, y, d_y psi)| with central differences of step
/// dx1 in x1 and the grid spacing in y.
double eikonal_residual(const GraphFunction& a, const GridSpec& grid, double x1, double dx1,
                        const PhaseOptions& options = {});

/// Index windows outside which g and its semiclassical transform fall below tol * max.
IndexRange position_window(const Eigen::VectorXcd& g, double tol = 1e-12, Index pad = 4);
IndexRange frequency_window(const Eigen::VectorXcd& g, const GridSpec& grid, double tol = 1e-12, Index pad = 4);

/// Lattice window for the output frequencies xi of W(x1) g: the phase-space support of g (positions and
/// frequencies above tol * max) carried to time x1 by the characteristics. Equals the input window for
/// x-independent a.
IndexRange output_frequency_window(const GraphFunction& a, const GridSpec& grid, const Eigen::VectorXcd& g, double x1,
                                   double tol = 1e-12, Index pad = 4);

/// W(x1) g for a 1-D field on the x2 axis of the table grid. For General tables the part of g
/// outside the y-window is dropped with a warning, and only output frequencies in the xi-window are formed.
Eigen::VectorXcd apply_w(const PhaseTable& phase, const Eigen::VectorXcd& g, double x1, Warnings* warnings = nullptr);
/// Exact discrete adjoint of apply_w.
Eigen::VectorXcd apply_w_star(const PhaseTable& phase, const Eigen::VectorXcd& g, double x1,
                              Warnings* warnings = nullptr);

/// Symbols pulled back along the flow at fixed x1: a~(x2, xi2) = a(x1, Phi(x2, xi2)) and likewise q~,
/// with p2~ = xi1 + a~ - q~.
struct ConjugatedSymbols {
  double x1 = 0;
  GraphFunction a_tilde;
  GraphFunction q_tilde;
  SymbolSpec p2_tilde;
};

/// Uses flow.evaluate for each point, so the result is defined on the flow's initial-data box.
ConjugatedSymbols conjugated_symbol(const GraphFunction& a, const GraphFunction& q, const HamiltonianFlow& flow,
                                    double x1);

/// v(x1, .) = W(x1) u(x1, .) for every x1 row of u. The lattice center of v moves to
/// (c1 - a(0, 0, c2), c2) so the spectrum of v stays centered. For x-dependent a, rows whose norm is
/// below 1e-12 of the largest are set to zero and the y/xi windows come from the support of u.
Field2D quasimode_pushforward(const GraphFunction& a, const Field2D& u, const PhaseOptions& options = {},
                              Warnings* warnings = nullptr);

/// Binary container "QMP1": grid, kind, graph name, windows, horizons, slices and the General tables.
/// The graph function itself is not stored; `read_phase_table` parses the name back through parse_graph.
void write_phase_table(std::ostream& out, const PhaseTable& table);
PhaseTable read_phase_table(std::istream& in);

}  // namespace qml
