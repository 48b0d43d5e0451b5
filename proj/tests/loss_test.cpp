#include "sadl/loss.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>

#include "sadl/oracle.hpp"
#include "sadl/rng.hpp"

namespace sadl {
namespace {

std::vector<DensityMap> mean_maps(const std::vector<ScalePrecomp>& precomp) {
  std::vector<DensityMap> maps;
  for (const ScalePrecomp& p : precomp) {
    DensityMap map(p.moments.grid);
    map.values = p.moments.mean;
    maps.push_back(std::move(map));
  }
  return maps;
}

Scene random_scene(std::uint64_t seed, int dim_lo, int dim_hi, int max_heads) {
  Rng rng(seed);
  const int width = dim_lo + static_cast<int>(rng.below(
      static_cast<std::uint64_t>(dim_hi - dim_lo + 1)));
  const int height = dim_lo + static_cast<int>(rng.below(
      static_cast<std::uint64_t>(dim_hi - dim_lo + 1)));
  std::vector<Point2d> heads;
  const int n = static_cast<int>(rng.below(static_cast<std::uint64_t>(max_heads + 1)));
  for (int i = 0; i < n; ++i) {
    heads.push_back({rng.uniform(0.0, width), rng.uniform(0.0, height)});
  }
  return Scene(width, height, heads);
}

// prediction = mean + eta * sqrt(variance) * z, the scale a fitted map
// plausibly deviates on
std::vector<DensityMap> perturbed_means(const std::vector<ScalePrecomp>& precomp,
                                        Rng& rng, double eta) {
  std::vector<DensityMap> maps = mean_maps(precomp);
  for (std::size_t s = 0; s < maps.size(); ++s) {
    for (std::size_t j = 0; j < maps[s].values.size(); ++j) {
      maps[s].values[j] +=
          eta * std::sqrt(precomp[s].moments.variance[j]) * rng.normal();
    }
  }
  return maps;
}

TEST(Regularizer, ZeroPredictionCountsHeads) {
  const Scene scene(32, 32, {{5.5, 6.5}, {20.0, 10.0}, {28.2, 30.9}});
  const ScaleConfig config = ScaleConfig::defaults(1);
  const ScaleGrid grid = build_grids(scene, config)[0];
  const MomentMaps moments = moment_maps(scene, grid, config);
  const DensityMap zero(grid);
  EXPECT_EQ(regularizer(zero, moments, config), 3.0);
}

TEST(Regularizer, MeanMapOfInteriorHeadNearZero) {
  const Scene scene(64, 64, {{32.0, 32.0}});
  const ScaleConfig config = ScaleConfig::defaults(1);
  const ScaleGrid grid = build_grids(scene, config)[0];
  const MomentMaps moments = moment_maps(scene, grid, config);
  DensityMap pred(grid);
  pred.values = moments.mean;
  EXPECT_LE(regularizer(pred, moments, config), 1e-3);
}

TEST(Regularizer, DoubledMeanMapIsOne) {
  const Scene scene(64, 64, {{32.0, 32.0}});
  const ScaleConfig config = ScaleConfig::defaults(1);
  const ScaleGrid grid = build_grids(scene, config)[0];
  const MomentMaps moments = moment_maps(scene, grid, config);
  DensityMap pred(grid);
  pred.values = moments.mean;
  for (double& v : pred.values) v *= 2.0;
  EXPECT_NEAR(regularizer(pred, moments, config), 1.0, 1e-3);
}

TEST(Regularizer, RejectsGridMismatch) {
  const Scene scene(16, 16, {{8.0, 8.0}});
  const ScaleConfig config = ScaleConfig::defaults(2);
  const auto grids = build_grids(scene, config);
  const MomentMaps moments = moment_maps(scene, grids[0], config);
  const DensityMap wrong(grids[1]);
  EXPECT_THROW(regularizer(wrong, moments, config), std::invalid_argument);
}

TEST(TotalLoss, MeanMapsOfInteriorHeadNearZero) {
  // interior at every scale: the coarsest grid needs the head several
  // smoothing widths away from its borders too
  const Scene scene(128, 128, {{64.0, 64.0}});
  const ScaleConfig config = ScaleConfig::defaults(3);
  const auto precomp = precompute_scales(scene, config);
  const LossBreakdown breakdown =
      total_loss(mean_maps(precomp), scene, config, precomp);
  for (double q : breakdown.per_scale_quadratic) EXPECT_EQ(q, 0.0);
  EXPECT_LE(breakdown.total, 1e-2);
}

TEST(TotalLoss, EmptySceneZeroPredictionIsZero) {
  const Scene scene(24, 24, {});
  const ScaleConfig config = ScaleConfig::defaults(3);
  const auto precomp = precompute_scales(scene, config);
  std::vector<DensityMap> zeros;
  for (const auto& p : precomp) zeros.emplace_back(p.moments.grid);
  EXPECT_EQ(total_loss(zeros, scene, config, precomp).total, 0.0);
}

TEST(TotalLoss, EmptySceneReducesToFlooredShrinkage) {
  const Scene scene(10, 12, {});
  const ScaleConfig config = ScaleConfig::defaults(2);
  const auto precomp = precompute_scales(scene, config);
  std::vector<DensityMap> preds;
  Rng rng(6);
  for (const auto& p : precomp) {
    DensityMap map(p.moments.grid);
    for (double& v : map.values) v = rng.uniform(-1.0, 1.0);
    preds.push_back(std::move(map));
  }
  const LossBreakdown breakdown = total_loss(preds, scene, config, precomp);
  double expected = 0.0;
  for (std::size_t s = 0; s < preds.size(); ++s) {
    double quad = 0.0;
    for (double v : preds[s].values) quad += v * v / config.var_floor;
    expected += config.weights[s] * quad;
  }
  EXPECT_NEAR(breakdown.total, expected, 1e-12 * expected);
}

TEST(TotalLoss, SinglePixelPerturbationSecondOrder) {
  // head near one border: its truncated mass keeps the regularizer away
  // from the kink, so the first-order prediction is valid, and the small
  // m_cap keeps the covariance block well-conditioned
  const Scene scene(32, 32, {{16.0, 3.0}});
  ScaleConfig config = ScaleConfig::defaults(1);
  config.m_cap = 4;
  const auto precomp = precompute_scales(scene, config);
  const std::vector<DensityMap> base = mean_maps(precomp);
  const LossBreakdown at_mean = total_loss(base, scene, config, precomp);

  const std::size_t j = precomp[0].moments.grid.cell_index(3, 16);
  const double delta = 1e-3;
  std::vector<DensityMap> bumped = base;
  bumped[0].values[j] += delta;
  const LossBreakdown at_bumped = total_loss(bumped, scene, config, precomp);

  // quadratic part: w * delta^2 * [Sigma^-1]_jj; regularizer part from the
  // analytic subgradient at the mean
  double inv_jj = precomp[0].inverse.inv_diag[j];
  for (Eigen::Index a = 0; a < precomp[0].inverse.correction.rows(); ++a) {
    if (precomp[0].inverse.indices[static_cast<std::size_t>(a)] == j) {
      inv_jj -= precomp[0].inverse.correction(a, a);
    }
  }
  const MultiScaleValues grad = loss_gradient(base, scene, config, precomp);
  const double predicted =
      config.weights[0] * delta * delta * inv_jj + delta * grad[0][j];
  EXPECT_NEAR(at_bumped.total - at_mean.total, predicted, 1e-6);
}

TEST(TotalLoss, BreakdownReconciles) {
  Rng rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    const Scene scene = random_scene(derive_seed(50, trial), 8, 14, 4);
    const ScaleConfig config = ScaleConfig::defaults(2);
    const auto precomp = precompute_scales(scene, config);
    const auto preds = perturbed_means(precomp, rng, 0.1);
    const LossBreakdown breakdown = total_loss(preds, scene, config, precomp);
    double total = 0.0;
    for (double q : breakdown.per_scale_quadratic) total += q;
    for (double r : breakdown.per_scale_regularizer) total += r;
    EXPECT_NEAR(breakdown.total, total, 1e-12 * std::max(1.0, std::abs(total)));
    for (double r : breakdown.per_scale_regularizer) EXPECT_GE(r, 0.0);
  }
}

TEST(TotalLoss, QuadraticNearlyNonNegative) {
  Rng rng(123);
  for (int trial = 0; trial < 10; ++trial) {
    const Scene scene = random_scene(derive_seed(60, trial), 8, 14, 4);
    ScaleConfig config = ScaleConfig::defaults(1);
    config.m_cap = 2 * scene.head_count() + 2;
    const auto precomp = precompute_scales(scene, config);
    std::vector<DensityMap> preds;
    for (const auto& p : precomp) {
      DensityMap map(p.moments.grid);
      for (double& v : map.values) v = rng.uniform(-0.05, 0.05);
      preds.push_back(std::move(map));
    }
    const LossBreakdown breakdown = total_loss(preds, scene, config, precomp);
    for (double q : breakdown.per_scale_quadratic) EXPECT_GE(q, -1e-10);
  }
}

TEST(TotalLoss, MinimumAtTheMean) {
  Rng rng(321);
  for (int trial = 0; trial < 10; ++trial) {
    const Scene scene(48, 48, {{20.0 + trial, 22.5}, {30.25, 28.0}});
    const ScaleConfig config = ScaleConfig::defaults(2);
    const auto precomp = precompute_scales(scene, config);
    const auto base = mean_maps(precomp);
    const double at_mean = total_loss(base, scene, config, precomp).total;

    auto perturbed = base;
    double norm = 0.0;
    for (auto& map : perturbed) {
      for (double& v : map.values) {
        const double d = 0.01 * rng.normal();
        v += d;
        norm += d * d;
      }
    }
    ASSERT_GE(std::sqrt(norm), 1e-2);
    EXPECT_LE(at_mean, total_loss(perturbed, scene, config, precomp).total);
  }
}

TEST(LossGradient, ZeroForMeanMapsOnEmptyScene) {
  const Scene scene(12, 12, {});
  const ScaleConfig config = ScaleConfig::defaults(2);
  const auto precomp = precompute_scales(scene, config);
  const auto preds = mean_maps(precomp);
  for (const auto& g : loss_gradient(preds, scene, config, precomp)) {
    for (double v : g) EXPECT_EQ(v, 0.0);
  }
}

TEST(LossGradient, MatchesFiniteDifferences) {
  const double h = 1e-5;
  int checked = 0;
  for (int trial = 0; trial < 25; ++trial) {
    const Scene scene = random_scene(derive_seed(70, trial), 8, 12, 4);
    const int num_scales = 1 + trial % 3;
    ScaleConfig config = ScaleConfig::defaults(num_scales);
    config.m_cap = 2 * scene.head_count() + 2;
    const auto precomp = precompute_scales(scene, config);

    Rng rng(derive_seed(71, trial));
    const auto preds = perturbed_means(precomp, rng, 0.02 + 0.18 * rng.uniform());
    const MultiScaleValues analytic = loss_gradient(preds, scene, config, precomp);

    MultiScaleValues at;
    for (const auto& map : preds) at.push_back(map.values);
    const auto eval = [&](const MultiScaleValues& values) {
      auto trial_maps = preds;
      for (std::size_t s = 0; s < trial_maps.size(); ++s) {
        trial_maps[s].values = values[s];
      }
      return total_loss(trial_maps, scene, config, precomp).total;
    };
    const MultiScaleValues fd = fd_gradient(eval, at, h);

    for (std::size_t s = 0; s < preds.size(); ++s) {
      const auto inners = head_inners(preds[s], precomp[s].moments, config);
      std::vector<bool> excluded(preds[s].values.size(), false);
      for (std::size_t i = 0; i < inners.size(); ++i) {
        if (std::abs(inners[i] - 1.0) > 1e-7) continue;
        const HeadSupport& head = precomp[s].moments.per_head[i];
        for (int row = head.row0; row < head.row0 + head.rows; ++row) {
          for (int col = head.col0; col < head.col0 + head.cols; ++col) {
            excluded[precomp[s].moments.grid.cell_index(row, col)] = true;
          }
        }
      }
      for (std::size_t j = 0; j < analytic[s].size(); ++j) {
        if (excluded[j] || std::abs(analytic[s][j]) <= 1e-8) continue;
        EXPECT_LE(std::abs(fd[s][j] - analytic[s][j]) / std::abs(analytic[s][j]),
                  1e-5);
        ++checked;
      }
    }
  }
  EXPECT_GT(checked, 1000);
}

TEST(LossGradient, LinearInScaleWeight) {
  // empty scene: the gradient is purely the quadratic part, which scales
  // linearly (here bitwise, the weight doubling is a power of two) in w_s
  const Scene scene(16, 16, {});
  ScaleConfig base = ScaleConfig::defaults(2);
  base.weights = {0.2, 0.8};
  ScaleConfig doubled = base;
  doubled.weights = {0.4, 0.6};
  const auto precomp = precompute_scales(scene, base);  // independent of weights

  Rng rng(9);
  std::vector<DensityMap> preds;
  for (const auto& p : precomp) {
    DensityMap map(p.moments.grid);
    for (double& v : map.values) v = rng.uniform(-1.0, 1.0);
    preds.push_back(std::move(map));
  }
  const MultiScaleValues grad_base = loss_gradient(preds, scene, base, precomp);
  const MultiScaleValues grad_doubled = loss_gradient(preds, scene, doubled, precomp);
  for (std::size_t j = 0; j < grad_base[0].size(); ++j) {
    EXPECT_EQ(grad_doubled[0][j], 2.0 * grad_base[0][j]);
  }
}

}  // namespace
}  // namespace sadl
