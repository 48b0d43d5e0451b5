#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "sadl/domain.hpp"
#include "sadl/loss.hpp"

namespace sadl {

// Deterministic synthetic-scene recipe. True head positions are placed
// inside [margin, width - margin) x [margin, height - margin); when
// jitter_alpha > 0 the emitted annotations are the true positions plus
// N(0, jitter_alpha I) noise, clipped back into scene bounds.
struct SynthSpec {
  int width = 64;
  int height = 64;
  int count_min = 8;
  int count_max = 8;  // head count drawn uniformly from [count_min, count_max]

  enum class Placement { kUniform, kClustered };
  Placement placement = Placement::kUniform;
  int num_clusters = 2;
  double cluster_std = 4.0;

  double margin = 0.0;
  double jitter_alpha = 0.0;
  std::uint64_t seed = 0;
};

Scene synth_scene(const SynthSpec& spec);

struct FitOptions {
  double step_size = 1.0;   // initial/backtracked step scale
  int max_iters = 500;
  double tolerance = 1e-9;  // relative change of the total loss
};

struct FitReport {
  int iterations = 0;
  bool converged = false;
  LossBreakdown final_loss;
  std::vector<DensityMap> fitted;    // final maps, one per scale
  std::vector<double> scale_counts;  // sum of the fitted map per scale
  double gt_count = 0.0;
  std::vector<double> trajectory;    // accepted totals, starting at D = 0
};

// Gradient descent on the density values, all scales jointly, starting
// from zero maps. Steps are scaled per pixel by the diagonal curvature of
// the quadratic term (V / 2 w_s) and accepted only when the total loss
// strictly decreases, halving the step scale otherwise. Non-convergence
// is reported, never thrown.
FitReport fit_density(const Scene& scene, const ScaleConfig& config,
                      const FitOptions& options);

// MAE = mean |P - G|, MSE = sqrt(mean (P - G)^2), over K images.
std::pair<double, double> mae_mse(std::span<const double> pred_counts,
                                  std::span<const double> gt_counts);

}  // namespace sadl
