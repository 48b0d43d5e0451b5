#include "sadl/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "sadl/covariance.hpp"
#include "sadl/rng.hpp"

namespace sadl {

namespace {

constexpr std::size_t kMaxDenseCells = 4096;
constexpr std::size_t kMaxMcCovCells = 2048;
constexpr std::size_t kTargetBatches = 100;

// Welford accumulator over batch statistics.
struct BatchSpread {
  std::size_t count = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    ++count;
    const double d = x - mean;
    mean += d / static_cast<double>(count);
    m2 += d * (x - mean);
  }
  double standard_error() const {
    if (count < 2) return std::numeric_limits<double>::infinity();
    const double var = m2 / static_cast<double>(count - 1);
    return std::sqrt(std::max(var, 0.0) / static_cast<double>(count));
  }
};

double positive_floor(double x) {
  return std::max(x, std::numeric_limits<double>::min());
}

}  // namespace

McEstimate mc_moments(const Scene& scene, const ScaleGrid& grid,
                      const ScaleConfig& config, std::uint64_t n_samples,
                      std::uint64_t seed, bool with_covariance) {
  if (n_samples < 2) {
    throw std::invalid_argument("mc_moments: n_samples must be >= 2");
  }
  config.validate();
  const std::size_t cells = grid.cell_count();
  if (with_covariance && cells > kMaxMcCovCells) {
    throw std::invalid_argument("mc_moments: grid too large for covariance estimate");
  }

  const double beta_s = config.beta(grid.scale_index);
  const double noise_std = std::sqrt(config.alpha);
  const double norm = 1.0 / (2.0 * std::numbers::pi * beta_s);
  const std::size_t n_heads = scene.head_count();
  const Eigen::Index dim = static_cast<Eigen::Index>(cells);

  std::vector<Point2d> scaled(n_heads);
  for (std::size_t i = 0; i < n_heads; ++i) {
    scaled[i] = to_scale_coords(scene.annotations[i], grid);
  }

  McEstimate est;
  est.n_samples = n_samples;
  est.seed = seed;
  est.has_covariance = with_covariance;

  const std::size_t n_batches =
      std::max<std::size_t>(1, std::min<std::size_t>(kTargetBatches, n_samples / 2));
  const std::size_t batch_size = n_samples / n_batches;  // last batch absorbs the remainder

  Rng rng(seed);

  // per-batch raw accumulators
  Eigen::VectorXd batch_sum(dim);
  Eigen::MatrixXd batch_prod;   // sum of d d^T (upper), covariance mode
  Eigen::VectorXd batch_sq(dim);  // sum of d^2, diagonal-only mode
  if (with_covariance) batch_prod.resize(dim, dim);

  // pooled point estimates
  Eigen::VectorXd mean_acc = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd var_acc = Eigen::VectorXd::Zero(dim);
  Eigen::MatrixXd cov_acc;
  if (with_covariance) cov_acc = Eigen::MatrixXd::Zero(dim, dim);

  // batch spreads for the standard errors
  std::vector<BatchSpread> var_spread(cells);
  std::vector<BatchSpread> cov_spread;
  if (with_covariance) cov_spread.resize(cells * cells);

  Eigen::VectorXd density(dim);
  std::vector<double> ex(static_cast<std::size_t>(grid.width));
  std::vector<double> ey(static_cast<std::size_t>(grid.height));

  const std::size_t pooled_denom = n_samples - n_batches;  // sum of (m_b - 1)

  for (std::size_t b = 0; b < n_batches; ++b) {
    const std::size_t this_batch =
        (b + 1 == n_batches) ? n_samples - batch_size * (n_batches - 1) : batch_size;
    batch_sum.setZero();
    if (with_covariance) {
      batch_prod.setZero();
    } else {
      batch_sq.setZero();
    }

    for (std::size_t t = 0; t < this_batch; ++t) {
      density.setZero();
      for (std::size_t i = 0; i < n_heads; ++i) {
        double zx = 0.0;
        double zy = 0.0;
        rng.normal_pair(zx, zy);
        const double cx = scaled[i].x + noise_std * zx;
        const double cy = scaled[i].y + noise_std * zy;
        // separable evaluation of the isotropic kernel over the grid
        for (int col = 0; col < grid.width; ++col) {
          const double dx = (static_cast<double>(col) + 0.5) - cx;
          ex[static_cast<std::size_t>(col)] = std::exp(-0.5 * dx * dx / beta_s);
        }
        for (int row = 0; row < grid.height; ++row) {
          const double dy = (static_cast<double>(row) + 0.5) - cy;
          ey[static_cast<std::size_t>(row)] = norm * std::exp(-0.5 * dy * dy / beta_s);
        }
        std::size_t j = 0;
        for (int row = 0; row < grid.height; ++row) {
          const double rowf = ey[static_cast<std::size_t>(row)];
          for (int col = 0; col < grid.width; ++col, ++j) {
            density(static_cast<Eigen::Index>(j)) +=
                rowf * ex[static_cast<std::size_t>(col)];
          }
        }
      }
      batch_sum += density;
      if (with_covariance) {
        batch_prod.selfadjointView<Eigen::Upper>().rankUpdate(density, 1.0);
      } else {
        batch_sq.array() += density.array().square();
      }
    }

    const double mb = static_cast<double>(this_batch);
    const Eigen::VectorXd batch_mean = batch_sum / mb;
    mean_acc += batch_sum;

    if (this_batch >= 2 && pooled_denom > 0) {
      if (with_covariance) {
        for (Eigen::Index r = 0; r < dim; ++r) {
          for (Eigen::Index c = r; c < dim; ++c) {
            const double raw = batch_prod(r, c);
            const double bc = (raw - mb * batch_mean(r) * batch_mean(c)) / (mb - 1.0);
            cov_acc(r, c) += (mb - 1.0) * bc;
            cov_spread[static_cast<std::size_t>(r) * cells + static_cast<std::size_t>(c)]
                .add(bc);
            if (r == c) {
              var_acc(r) += (mb - 1.0) * bc;
              var_spread[static_cast<std::size_t>(r)].add(bc);
            }
          }
        }
      } else {
        for (Eigen::Index r = 0; r < dim; ++r) {
          const double bv =
              (batch_sq(r) - mb * batch_mean(r) * batch_mean(r)) / (mb - 1.0);
          var_acc(r) += (mb - 1.0) * bv;
          var_spread[static_cast<std::size_t>(r)].add(bv);
        }
      }
    }
  }

  const double n = static_cast<double>(n_samples);
  est.mean.resize(cells);
  est.variance.resize(cells);
  est.mean_se.resize(cells);
  est.variance_se.resize(cells);
  for (std::size_t j = 0; j < cells; ++j) {
    est.mean[j] = mean_acc(static_cast<Eigen::Index>(j)) / n;
    const double pooled_var =
        pooled_denom > 0
            ? var_acc(static_cast<Eigen::Index>(j)) / static_cast<double>(pooled_denom)
            : 0.0;
    est.variance[j] = pooled_var;
    est.mean_se[j] = positive_floor(std::sqrt(std::max(pooled_var, 0.0) / n));
    est.variance_se[j] = positive_floor(var_spread[j].standard_error());
  }

  if (with_covariance) {
    est.covariance.resize(dim, dim);
    est.covariance_se.resize(dim, dim);
    for (Eigen::Index r = 0; r < dim; ++r) {
      for (Eigen::Index c = r; c < dim; ++c) {
        const double pooled =
            pooled_denom > 0 ? cov_acc(r, c) / static_cast<double>(pooled_denom) : 0.0;
        const double se = positive_floor(
            cov_spread[static_cast<std::size_t>(r) * cells + static_cast<std::size_t>(c)]
                .standard_error());
        est.covariance(r, c) = pooled;
        est.covariance(c, r) = pooled;
        est.covariance_se(r, c) = se;
        est.covariance_se(c, r) = se;
      }
    }
  }
  return est;
}

Eigen::MatrixXd dense_covariance(const Scene& scene, const ScaleGrid& grid,
                                 const ScaleConfig& config) {
  const std::size_t cells = grid.cell_count();
  if (cells > kMaxDenseCells) {
    throw std::invalid_argument("dense_covariance: grid above the dense guard");
  }
  const MomentMaps moments = moment_maps(scene, grid, config);
  Eigen::MatrixXd cov(static_cast<Eigen::Index>(cells), static_cast<Eigen::Index>(cells));
  for (std::size_t j = 0; j < cells; ++j) {
    for (std::size_t k = j; k < cells; ++k) {
      const double value = covariance_entry({grid.scale_index, j, k}, scene, moments, config);
      cov(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) = value;
      cov(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = value;
    }
  }
  return cov;
}

Eigen::MatrixXd dense_inverse(const Eigen::MatrixXd& matrix) {
  if (matrix.rows() != matrix.cols()) {
    throw std::invalid_argument("dense_inverse: matrix must be square");
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(matrix);
  if (!lu.isInvertible()) {
    throw std::runtime_error("dense_inverse: singular matrix");
  }
  return lu.inverse();
}

double dense_quadratic_form(std::span<const double> residual,
                            const Eigen::MatrixXd& matrix) {
  if (static_cast<Eigen::Index>(residual.size()) != matrix.rows() ||
      matrix.rows() != matrix.cols()) {
    throw std::invalid_argument("dense_quadratic_form: size mismatch");
  }
  const Eigen::Map<const Eigen::VectorXd> r(residual.data(),
                                            static_cast<Eigen::Index>(residual.size()));
  return r.dot(matrix * r);
}

MultiScaleValues fd_gradient(const std::function<double(const MultiScaleValues&)>& f,
                             MultiScaleValues at, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("fd_gradient: h must be positive");
  MultiScaleValues grad(at.size());
  for (std::size_t s = 0; s < at.size(); ++s) {
    grad[s].assign(at[s].size(), 0.0);
    for (std::size_t j = 0; j < at[s].size(); ++j) {
      const double original = at[s][j];
      at[s][j] = original + h;
      const double up = f(at);
      at[s][j] = original - h;
      const double down = f(at);
      at[s][j] = original;
      grad[s][j] = (up - down) / (2.0 * h);
    }
  }
  return grad;
}

Eigen::MatrixXd densify_lowrank(const LowRankCov& cov) {
  const Eigen::Index dim = static_cast<Eigen::Index>(cov.diag.size());
  Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(dim, dim);
  for (Eigen::Index j = 0; j < dim; ++j) {
    dense(j, j) = cov.diag[static_cast<std::size_t>(j)];
  }
  const Eigen::Index m = cov.block.rows();
  for (Eigen::Index a = 0; a < m; ++a) {
    for (Eigen::Index b = 0; b < m; ++b) {
      dense(cov.indices[static_cast<std::size_t>(a)],
            cov.indices[static_cast<std::size_t>(b)]) += cov.block(a, b);
    }
  }
  return dense;
}

Eigen::MatrixXd densify_inverse(const LowRankInverse& inv) {
  const Eigen::Index dim = static_cast<Eigen::Index>(inv.inv_diag.size());
  Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(dim, dim);
  for (Eigen::Index j = 0; j < dim; ++j) {
    dense(j, j) = inv.inv_diag[static_cast<std::size_t>(j)];
  }
  const Eigen::Index m = inv.correction.rows();
  for (Eigen::Index a = 0; a < m; ++a) {
    for (Eigen::Index b = 0; b < m; ++b) {
      dense(inv.indices[static_cast<std::size_t>(a)],
            inv.indices[static_cast<std::size_t>(b)]) -= inv.correction(a, b);
    }
  }
  return dense;
}

}  // namespace sadl
