#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace sadl {

struct Point2d {
  double x = 0.0;
  double y = 0.0;
};

// An image's dimensions plus its (noisy) head annotations in original
// pixel units. Annotations must lie in [0, width) x [0, height).
struct Scene {
  int width = 0;
  int height = 0;
  std::vector<Point2d> annotations;

  Scene() = default;
  Scene(int width, int height, std::vector<Point2d> annotations);

  std::size_t head_count() const { return annotations.size(); }
};

// Multi-scale model parameters. beta halves from one scale to the next:
// beta_s = beta1 / 2^(s-1).
struct ScaleConfig {
  int num_scales = 3;
  double alpha = 8.0;               // annotation-noise variance, grid units^2
  double beta1 = 8.0;               // kernel variance at scale 1, grid units^2
  std::vector<double> weights;      // w_1..w_S, non-negative, sum to 1
  double var_fraction_tau = 0.8;    // cumulative variance fraction for top-M
  std::size_t m_cap = 256;          // hard upper bound on M
  double var_floor = 1e-8;          // diagonal floor applied to variances
  double denom_guard = 1e-12;       // guard for regularizer denominators

  // Uniform weights 1/S when none are given.
  static ScaleConfig defaults(int num_scales = 3);

  double beta(int scale_index) const;  // beta_s, scale_index is 1-based
  void validate() const;               // throws std::invalid_argument
};

// Sampling lattice of one scale: W_s x H_s cells, cell (row, col) has
// center (col + 0.5, row + 0.5) in scale-s units; scene points map to
// scale units by dividing by `factor`.
struct ScaleGrid {
  int scale_index = 1;  // 1-based
  int factor = 1;       // downsample factor f_s
  int width = 0;        // W_s
  int height = 0;       // H_s

  std::size_t cell_count() const {
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }
  std::size_t cell_index(int row, int col) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width) +
           static_cast<std::size_t>(col);
  }
  Point2d cell_center(std::size_t index) const {
    const int row = static_cast<int>(index) / width;
    const int col = static_cast<int>(index) % width;
    return {static_cast<double>(col) + 0.5, static_cast<double>(row) + 0.5};
  }
};

// Per-scale vector of density values over a grid, row-major.
struct DensityMap {
  ScaleGrid grid;
  std::vector<double> values;

  DensityMap() = default;
  explicit DensityMap(const ScaleGrid& g)
      : grid(g), values(g.cell_count(), 0.0) {}

  double sum() const;
};

// Per-scale density values: one vector of J_s reals per scale.
using MultiScaleValues = std::vector<std::vector<double>>;

// Grids for scales 1..S with factors 1, 2, 4, ... (2^(s-1)) and
// ceil-divided dimensions. Rejects empty scenes dimensions.
std::vector<ScaleGrid> build_grids(const Scene& scene, const ScaleConfig& config);

// Scene point in pixel units -> scale-s units (componentwise / factor).
Point2d to_scale_coords(const Point2d& p, const ScaleGrid& grid);

}  // namespace sadl
