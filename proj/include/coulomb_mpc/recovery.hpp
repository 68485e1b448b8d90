#pragma once

#include "coulomb_mpc/formation.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <optional>
#include <stdexcept>

namespace coulomb_mpc {

struct RecoveredCharges {
    VectorXd charges;               ///< [10 mC]
    double dominant_eigenvalue = 0.0;
    double rank_ratio = 1.0;        ///< lambda_max / trace, 1 for the zero matrix
    bool saturated = false;
};

/**
 * @brief Frobenius-nearest rank-one factor of a lifted charge matrix.
 *
 * Returns sqrt(lambda_max) v_max. The sign of v is chosen to be closest to
 * `previous`; without a usable previous vector the largest-magnitude entry is
 * made nonnegative.
 */
inline RecoveredCharges recover(const Eigen::Ref<const MatrixXd>& lifted,
                                const std::optional<VectorXd>& previous = std::nullopt) {
    if (lifted.rows() != lifted.cols()) throw std::invalid_argument("recover: matrix is not square");
    if (!lifted.allFinite()) throw std::invalid_argument("recover: non-finite input");
    const MatrixXd sym = 0.5 * (lifted + lifted.transpose());
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(sym);
    if (eig.info() != Eigen::Success) throw std::runtime_error("recover: eigendecomposition failed");

    const VectorXd lambda = eig.eigenvalues().cwiseMax(0.0);
    const Eigen::Index top = lambda.size() - 1;
    RecoveredCharges out;
    out.dominant_eigenvalue = lambda(top);
    const double trace = lambda.sum();
    out.rank_ratio = trace > 0.0 ? std::min(1.0, lambda(top) / trace) : 1.0;
    out.charges = std::sqrt(lambda(top)) * eig.eigenvectors().col(top);

    bool resolved = false;
    if (previous && previous->size() == out.charges.size()) {
        const double keep = (out.charges - *previous).squaredNorm();
        const double flip = (out.charges + *previous).squaredNorm();
        if (keep != flip) {
            if (flip < keep) out.charges = -out.charges;
            resolved = true;
        }
    }
    if (!resolved) {
        Eigen::Index largest = 0;
        out.charges.cwiseAbs().maxCoeff(&largest);
        if (out.charges(largest) < 0.0) out.charges = -out.charges;
    }
    return out;
}

/// Elementwise clamp to [-limit, limit]; `clipped` reports whether anything moved.
inline VectorXd saturate(const Eigen::Ref<const VectorXd>& charges, double limit, bool* clipped = nullptr) {
    if (!(limit > 0.0)) throw std::invalid_argument("saturate: limit must be positive");
    VectorXd out = charges.cwiseMax(-limit).cwiseMin(limit);
    if (clipped) *clipped = (out.array() != charges.array()).any();
    return out;
}

inline void saturate(RecoveredCharges& recovered, double limit) {
    bool clipped = false;
    recovered.charges = saturate(recovered.charges, limit, &clipped);
    recovered.saturated = recovered.saturated || clipped;
}

}  // namespace coulomb_mpc
