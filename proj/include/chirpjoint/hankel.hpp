#pragma once

#include "chirpjoint/synth.hpp"

#include <Eigen/Dense>

#include <optional>
#include <vector>

namespace chirpjoint {

/// Hankel dimensions: `rows` x (cols_minus_one + 1) with rows + Q = M, so the
/// bottom-right entry is s[M-1].
struct HankelParams {
    int rows = 0;
    int cols_minus_one = 0;

    int cols() const { return cols_minus_one + 1; }
    int length() const { return rows + cols_minus_one; }

    /// Q defaults to floor(M / 3).
    static HankelParams for_length(int m, std::optional<int> q = std::nullopt);
};

/// H[i][j] = s[i + j].
Eigen::MatrixXcd build_hankel(const Eigen::VectorXcd& s, const HankelParams& p);

struct BlockHankel {
    HankelParams params;
    std::vector<Eigen::MatrixXcd> blocks;
    /// Vertical concatenation of the blocks in sequence order.
    Eigen::MatrixXcd stacked;
};

BlockHankel stack_blocks(const RangeBinSnapshot& snap, const HankelParams& p);

enum class OrderCriterion { Aic, Mdl, Threshold, Fixed };

struct SubspaceEstimate {
    /// Orthonormal basis of the dominant column space, (L * rows) x d.
    Eigen::MatrixXcd basis;
    /// All singular values of the stacked matrix, descending.
    Eigen::VectorXd singular_values;
    int model_order = 0;
    OrderCriterion criterion = OrderCriterion::Mdl;
};

/// Information-criterion order detection over the eigenvalues sigma_i^2 of
/// the sample covariance, with `snapshots` independent observations
/// (Wax-Kailath forms of AIC and MDL). Threshold counts sigma_i / sigma_1 > 1e-6.
int detect_order(const Eigen::VectorXd& singular_values, int snapshots, OrderCriterion criterion);

/// SVD of the stacked block-Hankel matrix. With `order` the dimension is
/// fixed; otherwise it is detected with `criterion`.
SubspaceEstimate estimate_subspace(const BlockHankel& h, std::optional<int> order = std::nullopt,
                                   OrderCriterion criterion = OrderCriterion::Mdl);

} // namespace chirpjoint
