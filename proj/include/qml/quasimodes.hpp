#pragma once

#include "qml/grid.hpp"
#include "qml/symbols.hpp"

#include <string>

namespace qml {

enum class TNormalization { AnalyticPrefactor, UnitL2 };

/// Parameters of the polar-rectangle example: spectrum supported on |r - 1| < h, |angle - angle(omega0)| < h^alpha.
struct TAlphaSpec {
  double h = 1.0 / 64;
  double alpha = 0.5;
  Vec2 omega0 = Vec2(1, 0);
  TNormalization normalization = TNormalization::UnitL2;
  /// Replace the indicator edges by a C-infinity transition of width h/8.
  bool smoothed_edges = false;
};

/// Grid with lattice spacing exactly h/4, centered on omega0, whose lattice covers
/// `oversampling` times the support radius around omega0.
GridSpec t_alpha_grid(const TAlphaSpec& spec, double oversampling = 2.0);

/// The sampled polar-rectangle indicator (or its smoothed version) on the grid lattice.
SpectralField2D t_alpha_spectrum(const TAlphaSpec& spec, const GridSpec& grid);

Field2D build_t_alpha(const TAlphaSpec& spec, const GridSpec& grid);

struct DefectReport {
  std::string label;
  int m1 = 0;
  int m2 = 0;
  double defect = 0;
  double h = 0;
  double ratio_to_power = 0;
};

DefectReport defect(const SymbolSpec& op, const Field2D& u, int m, const QuantizationOptions& options = {});
/// ||p1^m1 p2^m2 u|| / ||u||; p2 is applied first.
DefectReport joint_defect(const SymbolSpec& p1, const SymbolSpec& p2, const Field2D& u, int m1, int m2,
                          const QuantizationOptions& options = {});

struct LocalizationReport {
  double outside_x = 0;
  double outside_xi = 0;
  double worst() const { return std::max(outside_x, outside_xi); }
};

/// Fractions of the L^2 mass of u with |x| > radius and of FT[u] with |xi| > radius.
LocalizationReport localization_check(const Field2D& u, double radius);

/// Gaussian joint quasimode of hD_{x1} and h^{k+1} D_{x2}^{k+1}: unit-L^2
/// exp(-x1^2 / (2 w^2)) exp(-x2^2 s^2 / (2 h^2)) with frequency spread s = h^{1/(k+1)} / 3.
Field2D build_flat_model(const GridSpec& grid, int k, double x1_width = 0.375);

/// Default grid for the flat model: L = 8, 2 dx below h^0.6, lattice reaching 4 h^{1/(k+1)}.
GridSpec flat_model_grid(double h, int k);

}  // namespace qml
