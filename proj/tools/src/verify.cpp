#include "verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <vector>

#include "sadl/fit.hpp"
#include "sadl/loss.hpp"
#include "sadl/oracle.hpp"
#include "sadl/rng.hpp"

namespace sadl_cli {

namespace {

struct Reporter {
  bool corrupt = false;
  bool all_pass = true;

  // `ge` flips the comparison for fraction-style checks
  void check(const char* name, int instance, double measured, double tolerance,
             bool ge = false) {
    const double tol = corrupt ? (ge ? 2.0 : 0.0) : tolerance;
    const bool pass = ge ? measured >= tol : measured <= tol;
    all_pass &= pass;
    std::printf("check=%s instance=%d measured=%.6g tolerance=%.6g result=%s\n",
                name, instance, measured, tol, pass ? "PASS" : "FAIL");
  }
};

sadl::Scene small_scene(std::uint64_t seed, int dim_lo, int dim_hi, int count_lo,
                        int count_hi) {
  sadl::Rng rng(seed);
  sadl::SynthSpec spec;
  spec.width = dim_lo + static_cast<int>(rng.below(
      static_cast<std::uint64_t>(dim_hi - dim_lo + 1)));
  spec.height = dim_lo + static_cast<int>(rng.below(
      static_cast<std::uint64_t>(dim_hi - dim_lo + 1)));
  spec.count_min = count_lo;
  spec.count_max = count_hi;
  spec.seed = rng.raw();
  return sadl::synth_scene(spec);
}

// Heads on a jittered lattice with guaranteed separation. Keeps the
// selected top-variance pixels spread across heads, which bounds the
// conditioning of the covariance block; clumped heads collapse it to
// numerical rank deficiency, where no finite-precision inverse can meet
// tight identity tolerances.
sadl::Scene separated_scene(std::uint64_t seed, int width, int height,
                            int target_count, double spacing) {
  sadl::Rng rng(seed);
  const int cols = std::max(1, static_cast<int>(width / spacing));
  const int rows = std::max(1, static_cast<int>(height / spacing));
  std::vector<int> slots(static_cast<std::size_t>(cols * rows));
  for (std::size_t i = 0; i < slots.size(); ++i) slots[i] = static_cast<int>(i);
  for (std::size_t i = slots.size(); i > 1; --i) {
    std::swap(slots[i - 1], slots[rng.below(i)]);
  }
  const int count = std::min<int>(target_count, static_cast<int>(slots.size()));
  std::vector<sadl::Point2d> heads;
  heads.reserve(static_cast<std::size_t>(count));
  const double cell_w = static_cast<double>(width) / cols;
  const double cell_h = static_cast<double>(height) / rows;
  for (int i = 0; i < count; ++i) {
    const int slot = slots[static_cast<std::size_t>(i)];
    const double cx = (slot % cols + 0.5) * cell_w;
    const double cy = (slot / cols + 0.5) * cell_h;
    heads.push_back({std::clamp(cx + rng.uniform(-1.0, 1.0), 0.0, width - 1e-9),
                     std::clamp(cy + rng.uniform(-1.0, 1.0), 0.0, height - 1e-9)});
  }
  return sadl::Scene(width, height, std::move(heads));
}

void run_moments_suite(const VerifyOptions& options, Reporter& reporter) {
  for (int i = 0; i < 4; ++i) {
    const sadl::Scene scene = small_scene(sadl::derive_seed(options.seed, 100 + i),
                                          8, 12, 1, 4);
    sadl::ScaleConfig config = sadl::ScaleConfig::defaults(2);
    const std::vector<sadl::ScaleGrid> grids = sadl::build_grids(scene, config);
    const sadl::ScaleGrid& grid = grids[static_cast<std::size_t>(i % 2)];

    const sadl::McEstimate mc =
        sadl::mc_moments(scene, grid, config, options.samples,
                         sadl::derive_seed(options.seed, 500 + i), true);
    const sadl::MomentMaps analytic = sadl::moment_maps(scene, grid, config);
    const Eigen::MatrixXd dense = sadl::dense_covariance(scene, grid, config);

    const std::size_t cells = grid.cell_count();
    std::size_t ok_mean = 0;
    std::size_t ok_var = 0;
    std::size_t ok_cov = 0;
    std::size_t pairs = 0;
    for (std::size_t j = 0; j < cells; ++j) {
      if (std::abs(analytic.mean[j] - mc.mean[j]) <= 3.0 * mc.mean_se[j]) ++ok_mean;
      if (std::abs(analytic.variance_raw[j] - mc.variance[j]) <= 3.0 * mc.variance_se[j]) {
        ++ok_var;
      }
      for (std::size_t k = j; k < cells; ++k) {
        const Eigen::Index r = static_cast<Eigen::Index>(j);
        const Eigen::Index c = static_cast<Eigen::Index>(k);
        if (std::abs(dense(r, c) - mc.covariance(r, c)) <= 3.0 * mc.covariance_se(r, c)) {
          ++ok_cov;
        }
        ++pairs;
      }
    }
    const double denom = static_cast<double>(cells);
    reporter.check("moments_mean", i, static_cast<double>(ok_mean) / denom, 0.99, true);
    reporter.check("moments_variance", i, static_cast<double>(ok_var) / denom, 0.99, true);
    reporter.check("moments_covariance", i,
                   static_cast<double>(ok_cov) / static_cast<double>(pairs), 0.99, true);
  }
}

void run_lowrank_suite(const VerifyOptions& options, Reporter& reporter) {
  for (int i = 0; i < 6; ++i) {
    sadl::Rng dims(sadl::derive_seed(options.seed, 200 + i));
    const int width = 20 + static_cast<int>(dims.below(13));
    const int height = 20 + static_cast<int>(dims.below(13));
    const sadl::Scene scene = separated_scene(dims.raw(), width, height, 99, 9.0);
    sadl::ScaleConfig config = sadl::ScaleConfig::defaults(1);
    config.m_cap = 2 * scene.head_count() + static_cast<std::size_t>(i % 3);
    const std::vector<sadl::ScaleGrid> grids = sadl::build_grids(scene, config);
    const sadl::MomentMaps moments = sadl::moment_maps(scene, grids[0], config);
    const sadl::LowRankCov cov = sadl::build_lowrank(scene, moments, config);
    const sadl::LowRankInverse inverse = sadl::invert_lowrank(cov);

    const Eigen::MatrixXd sigma = sadl::densify_lowrank(cov);
    const Eigen::MatrixXd sigma_inv = sadl::densify_inverse(inverse);
    const Eigen::Index dim = sigma.rows();
    const double identity_err =
        (sigma * sigma_inv - Eigen::MatrixXd::Identity(dim, dim)).cwiseAbs().maxCoeff();
    reporter.check("lowrank_woodbury_identity", i, identity_err, 1e-8);

    sadl::Rng rng(sadl::derive_seed(options.seed, 300 + i));
    std::vector<double> residual(static_cast<std::size_t>(dim));
    for (double& r : residual) r = rng.normal();
    const double fast = sadl::quadratic_form(residual, inverse);
    const double dense =
        sadl::dense_quadratic_form(residual, sadl::dense_inverse(sigma));
    const double rel =
        std::abs(fast - dense) / std::max(std::abs(dense), 1e-300);
    reporter.check("lowrank_quadratic_form", i, rel, 1e-8);
  }
}

void run_gradient_suite(const VerifyOptions& options, Reporter& reporter) {
  for (int i = 0; i < 8; ++i) {
    const sadl::Scene scene = small_scene(sadl::derive_seed(options.seed, 400 + i),
                                          8, 12, 0, 4);
    const int num_scales = 1 + i % 3;
    sadl::ScaleConfig config = sadl::ScaleConfig::defaults(num_scales);
    // keep the covariance block well-posed so finite differences are not
    // drowned by cancellation in the near-collapsed directions
    config.m_cap = 2 * scene.head_count() + 2;
    const std::vector<sadl::ScaleGrid> grids = sadl::build_grids(scene, config);
    const std::vector<sadl::ScalePrecomp> precomp =
        sadl::precompute_scales(scene, config);

    sadl::Rng rng(sadl::derive_seed(options.seed, 600 + i));
    const double eta = 0.02 + 0.18 * rng.uniform();
    std::vector<sadl::DensityMap> preds;
    preds.reserve(grids.size());
    for (std::size_t s = 0; s < grids.size(); ++s) {
      sadl::DensityMap map(grids[s]);
      const sadl::MomentMaps& moments = precomp[s].moments;
      for (std::size_t j = 0; j < map.values.size(); ++j) {
        map.values[j] =
            moments.mean[j] + eta * std::sqrt(moments.variance[j]) * rng.normal();
      }
      preds.push_back(std::move(map));
    }

    const sadl::MultiScaleValues analytic =
        sadl::loss_gradient(preds, scene, config, precomp);

    sadl::MultiScaleValues at;
    at.reserve(preds.size());
    for (const sadl::DensityMap& map : preds) at.push_back(map.values);
    const double h = 1e-5;
    const auto eval = [&](const sadl::MultiScaleValues& values) {
      std::vector<sadl::DensityMap> trial = preds;
      for (std::size_t s = 0; s < trial.size(); ++s) trial[s].values = values[s];
      return sadl::total_loss(trial, scene, config, precomp).total;
    };
    const sadl::MultiScaleValues fd = sadl::fd_gradient(eval, at, h);

    double max_rel = 0.0;
    for (std::size_t s = 0; s < preds.size(); ++s) {
      // skip coordinates whose stencil may cross a regularizer kink
      const std::vector<double> inners =
          sadl::head_inners(preds[s], precomp[s].moments, config);
      std::vector<bool> near_kink(preds[s].values.size(), false);
      for (std::size_t hi = 0; hi < inners.size(); ++hi) {
        if (std::abs(inners[hi] - 1.0) > 10.0 * h) continue;
        const sadl::HeadSupport& head = precomp[s].moments.per_head[hi];
        for (int row = head.row0; row < head.row0 + head.rows; ++row) {
          for (int col = head.col0; col < head.col0 + head.cols; ++col) {
            near_kink[precomp[s].moments.grid.cell_index(row, col)] = true;
          }
        }
      }
      for (std::size_t j = 0; j < analytic[s].size(); ++j) {
        if (near_kink[j] || std::abs(analytic[s][j]) <= 1e-8) continue;
        const double rel =
            std::abs(fd[s][j] - analytic[s][j]) / std::abs(analytic[s][j]);
        max_rel = std::max(max_rel, rel);
      }
    }
    reporter.check("gradient_fd_agreement", i, max_rel, 1e-5);
  }
}

}  // namespace

int run_verify(const VerifyOptions& options) {
  Reporter reporter;
  reporter.corrupt = options.corrupt_tolerances;

  const bool all = options.suite == "all";
  if (all || options.suite == "moments") run_moments_suite(options, reporter);
  if (all || options.suite == "lowrank") run_lowrank_suite(options, reporter);
  if (all || options.suite == "gradient") run_gradient_suite(options, reporter);

  return reporter.all_pass ? 0 : 1;
}

}  // namespace sadl_cli
