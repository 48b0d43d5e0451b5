#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "sadl/covariance.hpp"
#include "sadl/domain.hpp"
#include "sadl/moments.hpp"

namespace sadl {

// Diagonal-plus-low-rank representation of the per-scale covariance:
// Sigma_hat = diag(diag) + scatter(block) over `indices`. The block has an
// exactly zero diagonal; the full diagonal lives in `diag` (floored).
struct LowRankCov {
  ScaleGrid grid;
  std::vector<double> diag;            // J_s entries, >= var_floor
  std::vector<std::uint32_t> indices;  // L, strictly ascending, size M
  Eigen::MatrixXd block;               // M x M symmetric, zero diagonal
};

// Companion inverse: Sigma_hat^{-1} = diag(inv_diag) - scatter(correction).
// forward_block is the block of the matrix this inverse is exact for:
// diag(1/inv_diag) + scatter(forward_block). It equals the source block
// except along numerically collapsed directions, whose eigenvalues are
// floored to keep the pair positive definite.
struct LowRankInverse {
  ScaleGrid grid;
  std::vector<double> inv_diag;        // 1 / diag
  std::vector<std::uint32_t> indices;  // same L as the source
  Eigen::MatrixXd correction;          // B_L, M x M symmetric
  Eigen::MatrixXd forward_block;       // clamped C_L, M x M symmetric
};

// Indices of the M largest-variance pixels, M minimal with cumulative
// variance fraction strictly above tau, clamped to m_cap. Ties break
// toward the smaller pixel index; the result is sorted ascending.
// Returns the empty set when the variances sum to zero.
std::vector<std::uint32_t> select_top_m(std::span<const double> variances,
                                        double tau, std::size_t m_cap);

LowRankCov build_lowrank(const Scene& scene, const MomentMaps& moments,
                         const ScaleConfig& config);

// Woodbury inverse of V + M C_L M^T:
//   Sigma^{-1} = V^{-1} - M B_L M^T,
//   B_L = V_L^{-1} (C_L - C_L (C_L + V_L)^{-1} C_L) V_L^{-1}
//       = V_L^{-1} C_L (C_L + V_L)^{-1},
// which never inverts the zero-diagonal C_L itself. (C_L + V_L) is
// handled through the eigensystem of the correlation-scaled block with a
// small eigenvalue floor, so the represented inverse stays positive
// definite even when the exact block is numerically singular. Throws
// std::runtime_error on non-finite input.
LowRankInverse invert_lowrank(const LowRankCov& cov);

// residual^T Sigma^{-1} residual in O(M^2 + J_s):
//   sum_j r_j^2 * inv_diag_j - r_L^T B_L r_L.
double quadratic_form(std::span<const double> residual, const LowRankInverse& inv);

}  // namespace sadl
