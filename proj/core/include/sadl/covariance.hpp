#pragma once

#include <cstddef>

#include "sadl/domain.hpp"
#include "sadl/moments.hpp"

namespace sadl {

// One pair of pixel indices at a scale.
struct CovQuery {
  int scale_index = 1;
  std::size_t j = 0;
  std::size_t k = 0;
};

// Closed form of E[phi_i(x_j) phi_i(x_k)] over annotation noise
// eps ~ N(0, alpha I):
//   omega = N(q_j - q_k | 0, 2 beta I) * N((q_j + q_k)/2 | 0, (beta/2 + alpha) I)
// Symmetric in (q_j, q_k). Throws for non-positive beta or negative alpha.
double omega(const Point2d& q_j, const Point2d& q_k, double beta_s, double alpha);

// Cov(D_s(x_j), D_s(x_k)) per the per-head decomposition: cross-head terms
// cancel because heads carry independent noise. The diagonal reproduces the
// raw (pre-floor) variance of the moment maps exactly.
double covariance_entry(const CovQuery& query, const Scene& scene,
                        const MomentMaps& moments, const ScaleConfig& config);

}  // namespace sadl
