#include "sadl/fit.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sadl/rng.hpp"

namespace sadl {

namespace {

double clip_coord(double x, double limit) {
  return std::clamp(x, 0.0, std::nextafter(limit, 0.0));
}

}  // namespace

Scene synth_scene(const SynthSpec& spec) {
  if (spec.width <= 0 || spec.height <= 0) {
    throw std::invalid_argument("synth_scene: dimensions must be positive");
  }
  if (spec.count_min < 0 || spec.count_max < spec.count_min) {
    throw std::invalid_argument("synth_scene: bad head-count range");
  }
  const double max_heads =
      4.0 * static_cast<double>(spec.width) * static_cast<double>(spec.height);
  if (static_cast<double>(spec.count_max) > max_heads) {
    throw std::invalid_argument("synth_scene: head count above 4 * width * height");
  }
  const double lo_x = spec.margin;
  const double hi_x = static_cast<double>(spec.width) - spec.margin;
  const double lo_y = spec.margin;
  const double hi_y = static_cast<double>(spec.height) - spec.margin;
  if (!(lo_x < hi_x) || !(lo_y < hi_y)) {
    throw std::invalid_argument("synth_scene: margin leaves no placement area");
  }

  Rng rng(spec.seed);
  const int count =
      spec.count_min == spec.count_max
          ? spec.count_min
          : spec.count_min + static_cast<int>(rng.below(
                static_cast<std::uint64_t>(spec.count_max - spec.count_min + 1)));

  std::vector<Point2d> cluster_centers;
  if (spec.placement == SynthSpec::Placement::kClustered) {
    const int n_clusters = std::max(1, spec.num_clusters);
    cluster_centers.reserve(static_cast<std::size_t>(n_clusters));
    for (int c = 0; c < n_clusters; ++c) {
      cluster_centers.push_back({rng.uniform(lo_x, hi_x), rng.uniform(lo_y, hi_y)});
    }
  }

  std::vector<Point2d> heads;
  heads.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Point2d p;
    if (spec.placement == SynthSpec::Placement::kUniform) {
      p = {rng.uniform(lo_x, hi_x), rng.uniform(lo_y, hi_y)};
    } else {
      const Point2d& center =
          cluster_centers[static_cast<std::size_t>(i) % cluster_centers.size()];
      // rejection-sample around the cluster center until inside bounds
      for (int attempt = 0;; ++attempt) {
        double zx = 0.0;
        double zy = 0.0;
        rng.normal_pair(zx, zy);
        p = {center.x + spec.cluster_std * zx, center.y + spec.cluster_std * zy};
        if (p.x >= lo_x && p.x < hi_x && p.y >= lo_y && p.y < hi_y) break;
        if (attempt >= 1000) {
          p = {std::clamp(p.x, lo_x, std::nextafter(hi_x, lo_x)),
               std::clamp(p.y, lo_y, std::nextafter(hi_y, lo_y))};
          break;
        }
      }
    }
    heads.push_back(p);
  }

  if (spec.jitter_alpha > 0.0) {
    const double jitter_std = std::sqrt(spec.jitter_alpha);
    for (Point2d& p : heads) {
      double zx = 0.0;
      double zy = 0.0;
      rng.normal_pair(zx, zy);
      p.x = clip_coord(p.x + jitter_std * zx, static_cast<double>(spec.width));
      p.y = clip_coord(p.y + jitter_std * zy, static_cast<double>(spec.height));
    }
  }
  return Scene(spec.width, spec.height, std::move(heads));
}

FitReport fit_density(const Scene& scene, const ScaleConfig& config,
                      const FitOptions& options) {
  config.validate();
  if (!(options.step_size > 0.0) || options.max_iters < 0 ||
      !(options.tolerance >= 0.0)) {
    throw std::invalid_argument("fit_density: bad optimizer parameters");
  }

  const std::vector<ScaleGrid> grids = build_grids(scene, config);
  const std::vector<ScalePrecomp> precomp = precompute_scales(scene, config);

  std::vector<DensityMap> current;
  current.reserve(grids.size());
  for (const ScaleGrid& grid : grids) current.emplace_back(grid);

  FitReport report;
  report.gt_count = static_cast<double>(scene.head_count());

  LossBreakdown best = total_loss(current, scene, config, precomp);
  report.trajectory.push_back(best.total);

  double step = options.step_size;
  std::vector<DensityMap> candidate = current;
  MultiScaleValues direction(grids.size());

  for (int iter = 0; iter < options.max_iters; ++iter) {
    const MultiScaleValues grad = loss_gradient(current, scene, config, precomp);

    // Descend in the covariance metric: direction = -Sigma_hat g / (2 w_s),
    // applied through the low-rank structure in O(J + M^2). This is exact
    // Newton on the quadratic term; a raw gradient step would be throttled
    // by the stiffest covariance directions and crawl. The forward block is
    // the exact pair of the inverse used by the loss, so the two cancel
    // cleanly even along clamped directions.
    for (std::size_t s = 0; s < grids.size(); ++s) {
      const double w = config.weights[s];
      const double scale = w > 0.0 ? 1.0 / (2.0 * w) : 1.0;
      const LowRankInverse& inv = precomp[s].inverse;
      const std::vector<double>& g = grad[s];
      std::vector<double>& d = direction[s];
      d.resize(g.size());
      for (std::size_t j = 0; j < g.size(); ++j) {
        d[j] = -scale * g[j] / inv.inv_diag[j];
      }
      const Eigen::Index m = inv.forward_block.rows();
      if (m > 0) {
        Eigen::VectorXd gathered(m);
        for (Eigen::Index a = 0; a < m; ++a) {
          gathered(a) = g[inv.indices[static_cast<std::size_t>(a)]];
        }
        const Eigen::VectorXd mixed = inv.forward_block * gathered;
        for (Eigen::Index a = 0; a < m; ++a) {
          d[inv.indices[static_cast<std::size_t>(a)]] -= scale * mixed(a);
        }
      }
    }

    step = std::min(options.step_size, step * 2.0);
    bool accepted = false;
    LossBreakdown next;
    while (step > 1e-20) {
      for (std::size_t s = 0; s < current.size(); ++s) {
        const std::vector<double>& d = direction[s];
        std::vector<double>& out = candidate[s].values;
        const std::vector<double>& in = current[s].values;
        for (std::size_t j = 0; j < in.size(); ++j) {
          out[j] = in[j] + step * d[j];
        }
      }
      next = total_loss(candidate, scene, config, precomp);
      if (next.total < best.total) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      report.converged = true;  // no descent step exists at any scale
      break;
    }

    std::swap(current, candidate);
    report.iterations = iter + 1;
    report.trajectory.push_back(next.total);
    const double change = best.total - next.total;
    best = next;
    if (change <= options.tolerance * std::max(1.0, std::abs(best.total))) {
      report.converged = true;
      break;
    }
  }

  report.final_loss = best;
  report.scale_counts.reserve(current.size());
  for (const DensityMap& map : current) report.scale_counts.push_back(map.sum());
  report.fitted = std::move(current);
  return report;
}

std::pair<double, double> mae_mse(std::span<const double> pred_counts,
                                  std::span<const double> gt_counts) {
  if (pred_counts.empty() || pred_counts.size() != gt_counts.size()) {
    throw std::invalid_argument("mae_mse: need equal-length, non-empty inputs");
  }
  const double k = static_cast<double>(pred_counts.size());
  double abs_sum = 0.0;
  double sq_sum = 0.0;
  for (std::size_t i = 0; i < pred_counts.size(); ++i) {
    const double e = pred_counts[i] - gt_counts[i];
    abs_sum += std::abs(e);
    sq_sum += e * e;
  }
  return {abs_sum / k, std::sqrt(sq_sum / k)};
}

}  // namespace sadl
