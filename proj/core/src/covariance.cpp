#include "sadl/covariance.hpp"

#include <cmath>
#include <stdexcept>

namespace sadl {

double omega(const Point2d& q_j, const Point2d& q_k, double beta_s, double alpha) {
  if (!(beta_s > 0.0) || !std::isfinite(beta_s)) {
    throw std::invalid_argument("omega: beta_s must be positive");
  }
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
    throw std::invalid_argument("omega: alpha must be non-negative");
  }
  const Point2d diff{q_j.x - q_k.x, q_j.y - q_k.y};
  const Point2d mid{0.5 * (q_j.x + q_k.x), 0.5 * (q_j.y + q_k.y)};
  return detail::gauss2d_raw(diff.x * diff.x + diff.y * diff.y, 2.0 * beta_s) *
         detail::gauss2d_raw(mid.x * mid.x + mid.y * mid.y, 0.5 * beta_s + alpha);
}

double covariance_entry(const CovQuery& query, const Scene& scene,
                        const MomentMaps& moments, const ScaleConfig& config) {
  const ScaleGrid& grid = moments.grid;
  const std::size_t cells = grid.cell_count();
  if (query.j >= cells || query.k >= cells) {
    throw std::out_of_range("covariance_entry: pixel index out of range");
  }
  if (scene.head_count() != moments.per_head.size()) {
    throw std::invalid_argument("covariance_entry: moments built for another scene");
  }

  const Point2d xj = grid.cell_center(query.j);
  const Point2d xk = grid.cell_center(query.k);
  const double ddx = xj.x - xk.x;
  const double ddy = xj.y - xk.y;
  const double dd2 = ddx * ddx + ddy * ddy;
  const double mx = 0.5 * (xj.x + xk.x);
  const double my = 0.5 * (xj.y + xk.y);

  const int row_j = static_cast<int>(query.j) / grid.width;
  const int col_j = static_cast<int>(query.j) % grid.width;
  const int row_k = static_cast<int>(query.k) / grid.width;
  const int col_k = static_cast<int>(query.k) % grid.width;

  double sum_omega = 0.0;
  double sum_mumu = 0.0;
  for (std::size_t i = 0; i < moments.per_head.size(); ++i) {
    const Point2d& h = moments.scaled_heads[i];
    const double mdx = mx - h.x;
    const double mdy = my - h.y;
    sum_omega += detail::omega_truncated(dd2, mdx * mdx + mdy * mdy,
                                         moments.beta_s, config.alpha);
    sum_mumu += moments.per_head[i].value_at(row_j, col_j) *
                moments.per_head[i].value_at(row_k, col_k);
  }
  return sum_omega - sum_mumu;
}

}  // namespace sadl
