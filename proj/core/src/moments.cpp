#include "sadl/moments.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sadl {

namespace {

struct CellWindow {
  int col0 = 0;
  int col1 = -1;  // inclusive; empty when col1 < col0
  int row0 = 0;
  int row1 = -1;

  bool empty() const { return col1 < col0 || row1 < row0; }
};

// Cells whose centers lie within `radius` of `center` (box pre-cut; the
// radial test happens per cell).
CellWindow window_around(const Point2d& center, double radius, const ScaleGrid& grid) {
  CellWindow w;
  w.col0 = std::max(0, static_cast<int>(std::ceil(center.x - radius - 0.5)));
  w.col1 = std::min(grid.width - 1, static_cast<int>(std::floor(center.x + radius - 0.5)));
  w.row0 = std::max(0, static_cast<int>(std::ceil(center.y - radius - 0.5)));
  w.row1 = std::min(grid.height - 1, static_cast<int>(std::floor(center.y + radius - 0.5)));
  return w;
}

}  // namespace

double gauss2d_iso(const Point2d& d, double var) {
  if (!(var > 0.0) || !std::isfinite(var)) {
    throw std::invalid_argument("gauss2d_iso: var must be positive");
  }
  if (!std::isfinite(d.x) || !std::isfinite(d.y)) {
    throw std::invalid_argument("gauss2d_iso: displacement must be finite");
  }
  return detail::gauss2d_raw(d.x * d.x + d.y * d.y, var);
}

DensityMap gt_density_map(const Scene& scene, const ScaleGrid& grid, double var) {
  if (!(var > 0.0) || !std::isfinite(var)) {
    throw std::invalid_argument("gt_density_map: var must be positive");
  }
  DensityMap map(grid);
  const double radius = detail::support_radius(var);
  const double radius2 = detail::support_radius2(var);
  for (const Point2d& head : scene.annotations) {
    const Point2d c = to_scale_coords(head, grid);
    const CellWindow w = window_around(c, radius, grid);
    for (int row = w.row0; row <= w.row1; ++row) {
      const double dy = (static_cast<double>(row) + 0.5) - c.y;
      for (int col = w.col0; col <= w.col1; ++col) {
        const double dx = (static_cast<double>(col) + 0.5) - c.x;
        const double dist2 = dx * dx + dy * dy;
        if (dist2 > radius2) continue;
        map.values[grid.cell_index(row, col)] += detail::gauss2d_raw(dist2, var);
      }
    }
  }
  return map;
}

MomentMaps moment_maps(const Scene& scene, const ScaleGrid& grid,
                       const ScaleConfig& config) {
  config.validate();
  if (grid.scale_index < 1 || grid.scale_index > config.num_scales) {
    throw std::invalid_argument("moment_maps: grid scale outside config range");
  }

  MomentMaps m;
  m.grid = grid;
  m.alpha = config.alpha;
  m.beta_s = config.beta(grid.scale_index);
  m.var_floor = config.var_floor;

  const std::size_t cells = grid.cell_count();
  m.mean.assign(cells, 0.0);
  m.variance_raw.assign(cells, 0.0);
  m.per_head.reserve(scene.head_count());
  m.scaled_heads.reserve(scene.head_count());

  const double mean_var = config.alpha + m.beta_s;       // Eq. (4) kernel
  const double second_var = 0.5 * m.beta_s + config.alpha;  // Eq. (5) kernel
  const double mean_radius = detail::support_radius(mean_var);
  const double mean_radius2 = detail::support_radius2(mean_var);
  const double second_radius = detail::support_radius(second_var);

  // Second-moment and squared-mean accumulators; the raw variance is
  // their difference, matching the summation order of covariance_entry.
  std::vector<double> second_acc(cells, 0.0);
  std::vector<double> musq_acc(cells, 0.0);

  for (const Point2d& head : scene.annotations) {
    const Point2d c = to_scale_coords(head, grid);
    m.scaled_heads.push_back(c);

    const CellWindow w = window_around(c, mean_radius, grid);
    HeadSupport support;
    support.col0 = w.col0;
    support.row0 = w.row0;
    support.cols = w.empty() ? 0 : w.col1 - w.col0 + 1;
    support.rows = w.empty() ? 0 : w.row1 - w.row0 + 1;
    support.values.assign(
        static_cast<std::size_t>(support.cols) * static_cast<std::size_t>(support.rows), 0.0);

    for (int row = w.row0; row <= w.row1; ++row) {
      const double dy = (static_cast<double>(row) + 0.5) - c.y;
      for (int col = w.col0; col <= w.col1; ++col) {
        const double dx = (static_cast<double>(col) + 0.5) - c.x;
        const double dist2 = dx * dx + dy * dy;
        if (dist2 > mean_radius2) continue;
        const double mu = detail::gauss2d_raw(dist2, mean_var);
        const std::size_t local =
            static_cast<std::size_t>(row - w.row0) * static_cast<std::size_t>(support.cols) +
            static_cast<std::size_t>(col - w.col0);
        support.values[local] = mu;
        support.sum += mu;
        const std::size_t j = grid.cell_index(row, col);
        m.mean[j] += mu;
        musq_acc[j] += mu * mu;
      }
    }
    m.per_head.push_back(std::move(support));

    const CellWindow w2 = window_around(c, second_radius, grid);
    for (int row = w2.row0; row <= w2.row1; ++row) {
      const double dy = (static_cast<double>(row) + 0.5) - c.y;
      for (int col = w2.col0; col <= w2.col1; ++col) {
        const double dx = (static_cast<double>(col) + 0.5) - c.x;
        const double dist2 = dx * dx + dy * dy;
        const double term = detail::omega_truncated(0.0, dist2, m.beta_s, config.alpha);
        if (term != 0.0) second_acc[grid.cell_index(row, col)] += term;
      }
    }
  }

  m.variance.assign(cells, 0.0);
  for (std::size_t j = 0; j < cells; ++j) {
    m.variance_raw[j] = second_acc[j] - musq_acc[j];
    m.variance[j] = std::max(m.variance_raw[j], config.var_floor);
  }
  return m;
}

}  // namespace sadl
