#include "sadl/lowrank.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace sadl {

std::vector<std::uint32_t> select_top_m(std::span<const double> variances,
                                        double tau, std::size_t m_cap) {
  const std::size_t n = variances.size();
  double total = 0.0;
  for (double v : variances) total += v;
  if (!(total > 0.0) || m_cap == 0) return {};

  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    if (variances[a] != variances[b]) return variances[a] > variances[b];
    return a < b;
  });

  const double target = tau * total;
  double cumulative = 0.0;
  std::size_t m = 0;
  while (m < n && !(cumulative > target)) {
    cumulative += variances[order[m]];
    ++m;
  }
  m = std::min(m, m_cap);

  std::vector<std::uint32_t> selected(order.begin(),
                                      order.begin() + static_cast<std::ptrdiff_t>(m));
  std::sort(selected.begin(), selected.end());
  return selected;
}

LowRankCov build_lowrank(const Scene& scene, const MomentMaps& moments,
                         const ScaleConfig& config) {
  LowRankCov cov;
  cov.grid = moments.grid;
  cov.diag = moments.variance;

  std::vector<double> raw(moments.variance_raw.size());
  std::transform(moments.variance_raw.begin(), moments.variance_raw.end(),
                 raw.begin(), [](double v) { return std::max(v, 0.0); });
  cov.indices = select_top_m(raw, config.var_fraction_tau, config.m_cap);

  const std::size_t m = cov.indices.size();
  cov.block = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m),
                                    static_cast<Eigen::Index>(m));
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = a + 1; b < m; ++b) {
      CovQuery query{moments.grid.scale_index, cov.indices[a], cov.indices[b]};
      const double value = covariance_entry(query, scene, moments, config);
      cov.block(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = value;
      cov.block(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) = value;
    }
  }
  return cov;
}

LowRankInverse invert_lowrank(const LowRankCov& cov) {
  LowRankInverse inv;
  inv.grid = cov.grid;
  inv.indices = cov.indices;
  inv.inv_diag.resize(cov.diag.size());
  for (std::size_t j = 0; j < cov.diag.size(); ++j) {
    if (!(cov.diag[j] > 0.0)) {
      throw std::runtime_error("invert_lowrank: non-positive diagonal entry");
    }
    inv.inv_diag[j] = 1.0 / cov.diag[j];
  }

  const Eigen::Index m = cov.block.rows();
  inv.correction = Eigen::MatrixXd::Zero(m, m);
  inv.forward_block = Eigen::MatrixXd::Zero(m, m);
  if (m == 0) return inv;

  Eigen::VectorXd v_l(m);
  for (Eigen::Index a = 0; a < m; ++a) {
    v_l(a) = cov.diag[cov.indices[static_cast<std::size_t>(a)]];
  }

  // With W = V_L^{-1/2} C_L V_L^{-1/2} (unit-diagonal correlation scaling),
  //   B_L = V_L^{-1} C_L (C_L + V_L)^{-1}
  //       = V_L^{-1/2} Q diag(w_i / (1 + w_i)) Q^T V_L^{-1/2},
  // where W = Q diag(w_i) Q^T. The exact 1 + w_i are >= 0; near-collapsed
  // directions (neighboring pixels of one head are almost deterministic
  // functions of each other) land at round-off scale or slightly below
  // zero, so they are floored, which keeps the represented inverse
  // positive definite.
  const Eigen::VectorXd inv_sqrt_v = v_l.array().rsqrt().matrix();
  Eigen::MatrixXd corr = inv_sqrt_v.asDiagonal() * cov.block * inv_sqrt_v.asDiagonal();
  corr = 0.5 * (corr + corr.transpose()).eval();
  if (!corr.allFinite()) {
    throw std::runtime_error("invert_lowrank: non-finite covariance block");
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eigen(corr);
  if (eigen.info() != Eigen::Success) {
    throw std::runtime_error("invert_lowrank: eigendecomposition failed");
  }
  // Floor on the unit-diagonal scale of I + W. Collapsed directions (the
  // exact block eigenvalues reach round-off scale on dense scenes) would
  // otherwise put ~1/eps gains into B, and the quadratic form would turn
  // into a difference of astronomically large terms.
  constexpr double kEigFloor = 1e-8;
  Eigen::VectorXd gains(m);
  Eigen::VectorXd clamped(m);
  for (Eigen::Index a = 0; a < m; ++a) {
    const double w = std::max(eigen.eigenvalues()(a), kEigFloor - 1.0);
    clamped(a) = w;
    gains(a) = w / (1.0 + w);
  }
  Eigen::MatrixXd b = inv_sqrt_v.asDiagonal() * eigen.eigenvectors() *
                      gains.asDiagonal() * eigen.eigenvectors().transpose() *
                      inv_sqrt_v.asDiagonal();
  inv.correction = 0.5 * (b + b.transpose()).eval();

  // the forward pair: clamped C_L, so that (V + forward) (V^{-1} - B) = I
  const Eigen::VectorXd sqrt_v = v_l.array().sqrt().matrix();
  Eigen::MatrixXd forward = sqrt_v.asDiagonal() * eigen.eigenvectors() *
                            clamped.asDiagonal() * eigen.eigenvectors().transpose() *
                            sqrt_v.asDiagonal();
  inv.forward_block = 0.5 * (forward + forward.transpose()).eval();
  return inv;
}

double quadratic_form(std::span<const double> residual, const LowRankInverse& inv) {
  if (residual.size() != inv.inv_diag.size()) {
    throw std::invalid_argument("quadratic_form: residual length mismatch");
  }
  double diag_part = 0.0;
  for (std::size_t j = 0; j < residual.size(); ++j) {
    diag_part += residual[j] * residual[j] * inv.inv_diag[j];
  }

  const Eigen::Index m = inv.correction.rows();
  if (m == 0) return diag_part;
  Eigen::VectorXd gathered(m);
  for (Eigen::Index a = 0; a < m; ++a) {
    gathered(a) = residual[inv.indices[static_cast<std::size_t>(a)]];
  }
  return diag_part - gathered.dot(inv.correction * gathered);
}

}  // namespace sadl
