#pragma once

#include <vector>

#include "sadl/domain.hpp"
#include "sadl/lowrank.hpp"
#include "sadl/moments.hpp"

namespace sadl {

// Everything the loss needs that depends only on the annotations, not on
// the predictions: moments, the low-rank covariance, and its inverse.
struct ScalePrecomp {
  MomentMaps moments;
  LowRankCov cov;
  LowRankInverse inverse;
};

std::vector<ScalePrecomp> precompute_scales(const Scene& scene,
                                            const ScaleConfig& config);

struct LossBreakdown {
  std::vector<double> per_scale_quadratic;    // w_s * D_bar^T Sigma^{-1} D_bar
  std::vector<double> per_scale_regularizer;  // sum_i R_i^s, unweighted
  double total = 0.0;
};

// Weighted predicted mass per head: inner_i = sum_j D(x_j) mu_i(x_j) /
// sum_i' mu_i'(x_j). Pixels whose head-mass denominator falls below
// denom_guard contribute nothing.
std::vector<double> head_inners(const DensityMap& pred, const MomentMaps& moments,
                                const ScaleConfig& config);

// Sum over annotations of |inner_i - 1|. Throws on grid mismatch.
double regularizer(const DensityMap& pred, const MomentMaps& moments,
                   const ScaleConfig& config);

// Weighted quadratic terms plus the per-scale regularizers. One
// prediction per scale, grids matching the precomputation.
LossBreakdown total_loss(const std::vector<DensityMap>& preds, const Scene& scene,
                         const ScaleConfig& config,
                         const std::vector<ScalePrecomp>& precomp);

// Analytic gradient of total_loss with respect to the density values:
//   quadratic: 2 w_s (V^{-1} D_bar - scatter(B_L gather(D_bar)))
//   regularizer: sign(inner_i - 1) * mu_i(x_j) / sum mu (0 at the kink).
MultiScaleValues loss_gradient(const std::vector<DensityMap>& preds,
                               const Scene& scene, const ScaleConfig& config,
                               const std::vector<ScalePrecomp>& precomp);

}  // namespace sadl
