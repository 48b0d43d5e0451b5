#include "sadl/loss.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace sadl {

namespace {

void check_grid_match(const ScaleGrid& a, const ScaleGrid& b, const char* where) {
  if (a.scale_index != b.scale_index || a.factor != b.factor ||
      a.width != b.width || a.height != b.height) {
    throw std::invalid_argument(std::string(where) + ": grid mismatch");
  }
}

void check_inputs(const std::vector<DensityMap>& preds, const ScaleConfig& config,
                  const std::vector<ScalePrecomp>& precomp) {
  if (preds.size() != static_cast<std::size_t>(config.num_scales) ||
      precomp.size() != preds.size()) {
    throw std::invalid_argument("total_loss: one prediction per scale required");
  }
  for (std::size_t s = 0; s < preds.size(); ++s) {
    check_grid_match(preds[s].grid, precomp[s].moments.grid, "total_loss");
    if (preds[s].values.size() != preds[s].grid.cell_count()) {
      throw std::invalid_argument("total_loss: prediction length mismatch");
    }
  }
}

// inner_i = sum_j D(x_j) mu_i(x_j) / mean(x_j) over the head's support.
double head_inner(const std::vector<double>& pred, const HeadSupport& head,
                  const MomentMaps& moments, double denom_guard) {
  double inner = 0.0;
  const ScaleGrid& grid = moments.grid;
  for (int row = head.row0; row < head.row0 + head.rows; ++row) {
    for (int col = head.col0; col < head.col0 + head.cols; ++col) {
      const std::size_t j = grid.cell_index(row, col);
      const double denom = moments.mean[j];
      if (denom < denom_guard) continue;
      const double mu = head.values[static_cast<std::size_t>(row - head.row0) *
                                        static_cast<std::size_t>(head.cols) +
                                    static_cast<std::size_t>(col - head.col0)];
      if (mu == 0.0) continue;
      inner += pred[j] * (mu / denom);
    }
  }
  return inner;
}

double sign_of(double x) {
  if (x > 0.0) return 1.0;
  if (x < 0.0) return -1.0;
  return 0.0;
}

}  // namespace

std::vector<ScalePrecomp> precompute_scales(const Scene& scene,
                                            const ScaleConfig& config) {
  const std::vector<ScaleGrid> grids = build_grids(scene, config);
  std::vector<ScalePrecomp> out;
  out.reserve(grids.size());
  for (const ScaleGrid& grid : grids) {
    ScalePrecomp p;
    p.moments = moment_maps(scene, grid, config);
    p.cov = build_lowrank(scene, p.moments, config);
    p.inverse = invert_lowrank(p.cov);
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<double> head_inners(const DensityMap& pred, const MomentMaps& moments,
                                const ScaleConfig& config) {
  check_grid_match(pred.grid, moments.grid, "head_inners");
  if (pred.values.size() != moments.grid.cell_count()) {
    throw std::invalid_argument("head_inners: prediction length mismatch");
  }
  std::vector<double> inners;
  inners.reserve(moments.per_head.size());
  for (const HeadSupport& head : moments.per_head) {
    inners.push_back(head_inner(pred.values, head, moments, config.denom_guard));
  }
  return inners;
}

double regularizer(const DensityMap& pred, const MomentMaps& moments,
                   const ScaleConfig& config) {
  double total = 0.0;
  for (double inner : head_inners(pred, moments, config)) {
    total += std::abs(inner - 1.0);
  }
  return total;
}

LossBreakdown total_loss(const std::vector<DensityMap>& preds, const Scene& scene,
                         const ScaleConfig& config,
                         const std::vector<ScalePrecomp>& precomp) {
  config.validate();
  check_inputs(preds, config, precomp);
  if (!precomp.empty() && precomp.front().moments.per_head.size() != scene.head_count()) {
    throw std::invalid_argument("total_loss: precomputation built for another scene");
  }

  LossBreakdown breakdown;
  breakdown.per_scale_quadratic.resize(preds.size());
  breakdown.per_scale_regularizer.resize(preds.size());

  std::vector<double> residual;
  for (std::size_t s = 0; s < preds.size(); ++s) {
    const MomentMaps& moments = precomp[s].moments;
    residual.resize(preds[s].values.size());
    for (std::size_t j = 0; j < residual.size(); ++j) {
      residual[j] = preds[s].values[j] - moments.mean[j];
    }
    breakdown.per_scale_quadratic[s] =
        config.weights[s] * quadratic_form(residual, precomp[s].inverse);
    breakdown.per_scale_regularizer[s] = regularizer(preds[s], moments, config);
  }

  double total = 0.0;
  for (double q : breakdown.per_scale_quadratic) total += q;
  for (double r : breakdown.per_scale_regularizer) total += r;
  breakdown.total = total;
  return breakdown;
}

MultiScaleValues loss_gradient(const std::vector<DensityMap>& preds,
                               const Scene& scene, const ScaleConfig& config,
                               const std::vector<ScalePrecomp>& precomp) {
  config.validate();
  check_inputs(preds, config, precomp);
  if (!precomp.empty() && precomp.front().moments.per_head.size() != scene.head_count()) {
    throw std::invalid_argument("loss_gradient: precomputation built for another scene");
  }

  MultiScaleValues grad(preds.size());
  for (std::size_t s = 0; s < preds.size(); ++s) {
    const MomentMaps& moments = precomp[s].moments;
    const LowRankInverse& inv = precomp[s].inverse;
    const std::size_t cells = preds[s].values.size();
    const double w = config.weights[s];

    std::vector<double> residual(cells);
    for (std::size_t j = 0; j < cells; ++j) {
      residual[j] = preds[s].values[j] - moments.mean[j];
    }

    std::vector<double>& g = grad[s];
    g.assign(cells, 0.0);
    for (std::size_t j = 0; j < cells; ++j) {
      g[j] = 2.0 * w * inv.inv_diag[j] * residual[j];
    }
    const Eigen::Index m = inv.correction.rows();
    if (m > 0) {
      Eigen::VectorXd gathered(m);
      for (Eigen::Index a = 0; a < m; ++a) {
        gathered(a) = residual[inv.indices[static_cast<std::size_t>(a)]];
      }
      const Eigen::VectorXd corrected = inv.correction * gathered;
      for (Eigen::Index a = 0; a < m; ++a) {
        g[inv.indices[static_cast<std::size_t>(a)]] -= 2.0 * w * corrected(a);
      }
    }

    for (const HeadSupport& head : moments.per_head) {
      const double inner =
          head_inner(preds[s].values, head, moments, config.denom_guard);
      const double sign = sign_of(inner - 1.0);
      if (sign == 0.0) continue;
      for (int row = head.row0; row < head.row0 + head.rows; ++row) {
        for (int col = head.col0; col < head.col0 + head.cols; ++col) {
          const std::size_t j = moments.grid.cell_index(row, col);
          const double denom = moments.mean[j];
          if (denom < config.denom_guard) continue;
          const double mu =
              head.values[static_cast<std::size_t>(row - head.row0) *
                              static_cast<std::size_t>(head.cols) +
                          static_cast<std::size_t>(col - head.col0)];
          if (mu == 0.0) continue;
          g[j] += sign * (mu / denom);
        }
      }
    }
  }
  return grad;
}

}  // namespace sadl
