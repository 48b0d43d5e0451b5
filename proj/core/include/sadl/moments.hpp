#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "sadl/domain.hpp"

namespace sadl {

namespace detail {

// Bivariate isotropic normal density at squared distance dist2, no checks.
inline double gauss2d_raw(double dist2, double var) {
  return std::exp(-0.5 * dist2 / var) / (2.0 * std::numbers::pi * var);
}

// Kernels are truncated at 6 sigma, where the density has decayed to
// ~1.5e-8 of its peak.
inline constexpr double kSupportSigmas = 6.0;

inline double support_radius(double var) {
  return kSupportSigmas * std::sqrt(var);
}

inline double support_radius2(double var) {
  return kSupportSigmas * kSupportSigmas * var;
}

// E[phi_i(x_j) phi_i(x_k)] over annotation noise, truncated consistently
// with the moment maps. dd2 = |x_j - x_k|^2, mid2 = |(x_j + x_k)/2 - h|^2.
// The diagonal (dd2 = 0) reproduces the second-moment term of the
// variance formula bit for bit.
inline double omega_truncated(double dd2, double mid2, double beta, double alpha) {
  const double pair_var = 2.0 * beta;
  const double mid_var = 0.5 * beta + alpha;
  if (dd2 > support_radius2(pair_var) || mid2 > support_radius2(mid_var)) {
    return 0.0;
  }
  return gauss2d_raw(dd2, pair_var) * gauss2d_raw(mid2, mid_var);
}

}  // namespace detail

// Isotropic 2-D Gaussian density at displacement d with per-axis variance
// var. Throws std::invalid_argument for var <= 0 or non-finite d.
double gauss2d_iso(const Point2d& d, double var);

// Truncated values of one head's kernel over a rectangular window of grid
// cells. Cells whose centers fall outside the 6-sigma radius hold 0.
struct HeadSupport {
  int col0 = 0;
  int row0 = 0;
  int cols = 0;
  int rows = 0;
  std::vector<double> values;  // rows * cols, row-major within the window
  double sum = 0.0;

  bool contains(int row, int col) const {
    return row >= row0 && row < row0 + rows && col >= col0 && col < col0 + cols;
  }
  double value_at(int row, int col) const {
    if (!contains(row, col)) return 0.0;
    return values[static_cast<std::size_t>(row - row0) *
                      static_cast<std::size_t>(cols) +
                  static_cast<std::size_t>(col - col0)];
  }
};

// Per-scale first and second moments of the density values under the
// annotation-noise model.
struct MomentMaps {
  ScaleGrid grid;
  double alpha = 0.0;
  double beta_s = 0.0;
  double var_floor = 0.0;
  std::vector<Point2d> scaled_heads;  // annotations / f_s
  std::vector<double> mean;           // per pixel, sum over heads of mu_i
  std::vector<double> variance;       // per pixel, floored at var_floor
  std::vector<double> variance_raw;   // per pixel, before flooring
  std::vector<HeadSupport> per_head;  // truncated mu_i per head
};

// Ground-truth density map: one kernel of variance var per annotation,
// evaluated at cell centers in scale units.
DensityMap gt_density_map(const Scene& scene, const ScaleGrid& grid, double var);

// Mean, variance, and per-head mean maps for the grid's scale.
MomentMaps moment_maps(const Scene& scene, const ScaleGrid& grid,
                       const ScaleConfig& config);

}  // namespace sadl
