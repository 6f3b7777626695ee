#include "chirpjoint/hankel.hpp"

#include "chirpjoint/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace chirpjoint {

HankelParams HankelParams::for_length(int m, std::optional<int> q) {
    const int cols_minus_one = q.value_or(m / 3);
    return {m - cols_minus_one, cols_minus_one};
}

Eigen::MatrixXcd build_hankel(const Eigen::VectorXcd& s, const HankelParams& p) {
    if (p.rows < 1 || p.cols_minus_one < 1) throw InvalidArgument("build_hankel: rows >= 1 and Q >= 1 required");
    if (p.length() != s.size()) {
        throw InvalidArgument("build_hankel: rows + Q = " + std::to_string(p.length()) + " but vector length is " +
                              std::to_string(s.size()));
    }
    Eigen::MatrixXcd h(p.rows, p.cols());
    for (int j = 0; j < p.cols(); ++j) h.col(j) = s.segment(j, p.rows);
    return h;
}

BlockHankel stack_blocks(const RangeBinSnapshot& snap, const HankelParams& p) {
    BlockHankel out;
    out.params = p;
    const int L = snap.sequences();
    if (L == 0) throw InvalidArgument("stack_blocks: empty snapshot");
    out.stacked.resize(static_cast<Eigen::Index>(L) * p.rows, p.cols());
    for (int l = 0; l < L; ++l) {
        out.blocks.push_back(build_hankel(snap.vectors[l], p));
        out.stacked.middleRows(static_cast<Eigen::Index>(l) * p.rows, p.rows) = out.blocks.back();
    }
    return out;
}

int detect_order(const Eigen::VectorXd& singular_values, int snapshots, OrderCriterion criterion) {
    const int p = static_cast<int>(singular_values.size());
    if (p == 0) return 0;
    const double top = singular_values(0);
    if (!(top > 0)) return 0;

    if (criterion == OrderCriterion::Threshold) {
        int d = 0;
        while (d < p && singular_values(d) > 1e-6 * top) ++d;
        return d;
    }

    // Eigenvalues below the floor are numerically zero; equalizing them keeps
    // the noise-only tail "white" for exactly rank-deficient data.
    const double floor = top * top * 1e-18;
    std::vector<double> eig(p);
    for (int i = 0; i < p; ++i) eig[i] = std::max(singular_values(i) * singular_values(i), floor);

    const double n = static_cast<double>(snapshots);
    int best = 0;
    double best_score = std::numeric_limits<double>::infinity();
    for (int k = 0; k < p; ++k) {
        const int tail = p - k;
        double log_sum = 0.0, sum = 0.0;
        for (int i = k; i < p; ++i) {
            log_sum += std::log(eig[i]);
            sum += eig[i];
        }
        const double log_geo = log_sum / tail;
        const double log_arith = std::log(sum / tail);
        const double ll = -n * tail * (log_geo - log_arith);
        const double dof = static_cast<double>(k) * (2.0 * p - k);
        const double score = criterion == OrderCriterion::Aic ? 2.0 * ll + 2.0 * dof : ll + 0.5 * dof * std::log(n);
        if (score < best_score) {
            best_score = score;
            best = k;
        }
    }
    return best;
}

SubspaceEstimate estimate_subspace(const BlockHankel& h, std::optional<int> order, OrderCriterion criterion) {
    if (h.stacked.size() == 0) throw InvalidArgument("estimate_subspace: empty block-Hankel matrix");
    const Eigen::Index max_order = std::min(h.stacked.rows(), h.stacked.cols());
    if (order && (*order < 0 || *order > max_order)) {
        throw InvalidArgument("estimate_subspace: order " + std::to_string(*order) + " exceeds min(L*rows, Q+1) = " +
                              std::to_string(max_order));
    }

    Eigen::BDCSVD<Eigen::MatrixXcd> svd(h.stacked, Eigen::ComputeThinU);
    SubspaceEstimate out;
    out.singular_values = svd.singularValues();
    if (order) {
        out.model_order = *order;
        out.criterion = OrderCriterion::Fixed;
    } else {
        const int snapshots = static_cast<int>(std::max(h.stacked.rows(), h.stacked.cols()));
        out.model_order = detect_order(out.singular_values, snapshots, criterion);
        out.criterion = criterion;
    }
    out.basis = svd.matrixU().leftCols(out.model_order);
    return out;
}

} // namespace chirpjoint
