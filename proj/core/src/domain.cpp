#include "sadl/domain.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace sadl {

Scene::Scene(int w, int h, std::vector<Point2d> pts)
    : width(w), height(h), annotations(std::move(pts)) {
  if (width <= 0 || height <= 0) {
    throw std::invalid_argument("Scene: width and height must be positive");
  }
  for (const Point2d& p : annotations) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || p.x < 0.0 ||
        p.y < 0.0 || p.x >= static_cast<double>(width) ||
        p.y >= static_cast<double>(height)) {
      throw std::invalid_argument("Scene: annotation outside [0,w) x [0,h)");
    }
  }
}

ScaleConfig ScaleConfig::defaults(int num_scales) {
  ScaleConfig config;
  config.num_scales = num_scales;
  config.weights.assign(static_cast<std::size_t>(num_scales),
                        1.0 / static_cast<double>(num_scales));
  return config;
}

double ScaleConfig::beta(int scale_index) const {
  return beta1 / static_cast<double>(1 << (scale_index - 1));
}

void ScaleConfig::validate() const {
  if (num_scales < 1) throw std::invalid_argument("ScaleConfig: S >= 1 required");
  // alpha = 0 is the no-noise baseline (plain diagonal loss); negative is invalid.
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
    throw std::invalid_argument("ScaleConfig: alpha must be >= 0");
  }
  if (!(beta1 > 0.0) || !std::isfinite(beta1)) {
    throw std::invalid_argument("ScaleConfig: beta1 must be > 0");
  }
  if (weights.size() != static_cast<std::size_t>(num_scales)) {
    throw std::invalid_argument("ScaleConfig: one weight per scale required");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw std::invalid_argument("ScaleConfig: negative weight");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw std::invalid_argument("ScaleConfig: weights must sum to 1");
  }
  if (!(var_fraction_tau > 0.0 && var_fraction_tau < 1.0)) {
    throw std::invalid_argument("ScaleConfig: tau must lie in (0, 1)");
  }
  if (!(var_floor > 0.0)) throw std::invalid_argument("ScaleConfig: var_floor must be > 0");
  if (!(denom_guard > 0.0)) throw std::invalid_argument("ScaleConfig: denom_guard must be > 0");
}

double DensityMap::sum() const {
  return std::accumulate(values.begin(), values.end(), 0.0);
}

std::vector<ScaleGrid> build_grids(const Scene& scene, const ScaleConfig& config) {
  if (scene.width <= 0 || scene.height <= 0) {
    throw std::invalid_argument("build_grids: empty scene dimensions");
  }
  config.validate();
  std::vector<ScaleGrid> grids;
  grids.reserve(static_cast<std::size_t>(config.num_scales));
  for (int s = 1; s <= config.num_scales; ++s) {
    ScaleGrid grid;
    grid.scale_index = s;
    grid.factor = 1 << (s - 1);
    grid.width = (scene.width + grid.factor - 1) / grid.factor;
    grid.height = (scene.height + grid.factor - 1) / grid.factor;
    grids.push_back(grid);
  }
  return grids;
}

Point2d to_scale_coords(const Point2d& p, const ScaleGrid& grid) {
  const double f = static_cast<double>(grid.factor);
  return {p.x / f, p.y / f};
}

}  // namespace sadl
