#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "sadl/domain.hpp"
#include "sadl/lowrank.hpp"
#include "sadl/moments.hpp"

namespace sadl {

// Empirical moments of the density values under resampled annotation
// noise. Point estimates are pooled over batches; standard errors for
// variance/covariance come from the spread of 100 batch estimates, the
// one for the mean from the pooled variance. Entries that cannot be
// estimated (fewer than 4 samples) report an infinite standard error.
struct McEstimate {
  std::vector<double> mean;
  std::vector<double> variance;
  Eigen::MatrixXd covariance;  // present only when requested

  std::vector<double> mean_se;
  std::vector<double> variance_se;
  Eigen::MatrixXd covariance_se;

  bool has_covariance = false;
  std::uint64_t n_samples = 0;
  std::uint64_t seed = 0;
};

// Resamples eps_i ~ N(0, alpha I) in scale units, treating the scene's
// annotations as true head locations, and accumulates sample moments of
// D_s(x_j) = sum_i N(x_j | H_i/f_s + eps_i, beta_s I).
// Deterministic in `seed` (mt19937_64 + Box-Muller; see rng.hpp).
// Rejects n_samples < 2; covariance is limited to grids with <= 2048 cells.
McEstimate mc_moments(const Scene& scene, const ScaleGrid& grid,
                      const ScaleConfig& config, std::uint64_t n_samples,
                      std::uint64_t seed, bool with_covariance = true);

// Covariance of Eq.-style entries materialized for every pair. Guarded to
// grids with at most 4096 cells.
Eigen::MatrixXd dense_covariance(const Scene& scene, const ScaleGrid& grid,
                                 const ScaleConfig& config);

// Reference dense inverse (full-pivot LU, fully independent of the
// Woodbury path). Throws std::runtime_error on singular input.
Eigen::MatrixXd dense_inverse(const Eigen::MatrixXd& matrix);

// residual^T * matrix * residual, evaluated densely.
double dense_quadratic_form(std::span<const double> residual,
                            const Eigen::MatrixXd& matrix);

// Central finite differences (f(x + h e) - f(x - h e)) / 2h per coordinate.
MultiScaleValues fd_gradient(const std::function<double(const MultiScaleValues&)>& f,
                             MultiScaleValues at, double h);

// Dense reconstructions of the low-rank structures, for comparisons
// against the dense reference paths.
Eigen::MatrixXd densify_lowrank(const LowRankCov& cov);
Eigen::MatrixXd densify_inverse(const LowRankInverse& inv);

}  // namespace sadl
