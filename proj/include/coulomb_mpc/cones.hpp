#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/Sparse>

#include <cmath>
#include <numbers>
#include <numeric>
#include <utility>
#include <stdexcept>
#include <vector>

namespace coulomb_mpc {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using SparseMatrixd = Eigen::SparseMatrix<double>;

/// Cone layout of the slack vector: zero cone, then nonnegative orthant, then PSD blocks.
struct ConeDims {
    int zero = 0;
    int nonneg = 0;
    std::vector<int> psd;  ///< matrix side lengths

    static constexpr int svec_size(int d) { return d * (d + 1) / 2; }

    int psd_total() const {
        return std::accumulate(psd.begin(), psd.end(), 0, [](int acc, int d) { return acc + svec_size(d); });
    }
    int total() const { return zero + nonneg + psd_total(); }

    bool operator==(const ConeDims&) const = default;
};

/**
 * @brief minimize 1/2 z'Pz + c'z + offset  s.t.  A z + s = b,  s in K.
 *
 * P is symmetric PSD (both triangles stored). PSD blocks of s use the scaled
 * lower-triangular packing from svec().
 */
struct ConicProblem {
    SparseMatrixd P;
    VectorXd c;
    double offset = 0.0;
    SparseMatrixd A;
    VectorXd b;
    ConeDims cones;

    int num_variables() const { return static_cast<int>(c.size()); }
    int num_constraints() const { return static_cast<int>(b.size()); }

    double objective(const Eigen::Ref<const VectorXd>& z) const {
        return 0.5 * z.dot(P * z) + c.dot(z) + offset;
    }

    void validate() const {
        const auto n = c.size();
        if (P.rows() != n || P.cols() != n) throw std::invalid_argument("ConicProblem: P has wrong shape");
        if (A.cols() != n || A.rows() != b.size()) throw std::invalid_argument("ConicProblem: A has wrong shape");
        if (cones.total() != b.size()) throw std::invalid_argument("ConicProblem: cone sizes do not sum to len(b)");
        if (!c.allFinite() || !b.allFinite() || !std::isfinite(offset))
            throw std::invalid_argument("ConicProblem: non-finite problem data");
        for (int k = 0; k < P.outerSize(); ++k)
            for (SparseMatrixd::InnerIterator it(P, k); it; ++it)
                if (!std::isfinite(it.value())) throw std::invalid_argument("ConicProblem: non-finite entry in P");
        for (int k = 0; k < A.outerSize(); ++k)
            for (SparseMatrixd::InnerIterator it(A, k); it; ++it)
                if (!std::isfinite(it.value())) throw std::invalid_argument("ConicProblem: non-finite entry in A");
    }
};

/// Lower triangle, column by column, off-diagonals scaled by sqrt(2).
inline VectorXd svec(const Eigen::Ref<const MatrixXd>& S) {
    const int d = static_cast<int>(S.rows());
    VectorXd v(ConeDims::svec_size(d));
    int k = 0;
    for (int j = 0; j < d; ++j)
        for (int i = j; i < d; ++i) v(k++) = (i == j) ? S(i, j) : 0.5 * std::numbers::sqrt2 * (S(i, j) + S(j, i));
    return v;
}

inline MatrixXd smat(const Eigen::Ref<const VectorXd>& v, int d) {
    if (v.size() != ConeDims::svec_size(d)) throw std::invalid_argument("smat: length mismatch");
    MatrixXd S(d, d);
    int k = 0;
    for (int j = 0; j < d; ++j)
        for (int i = j; i < d; ++i) {
            const double value = (i == j) ? v(k) : v(k) / std::numbers::sqrt2;
            S(i, j) = value;
            S(j, i) = value;
            ++k;
        }
    return S;
}

/// Position of entry (i, j) inside svec() of a d x d matrix.
inline int svec_index(int i, int j, int d) {
    if (i < j) std::swap(i, j);
    return j * d - j * (j - 1) / 2 + (i - j);
}

/// Nearest PSD matrix in Frobenius norm: clamp negative eigenvalues.
inline MatrixXd project_psd(const Eigen::Ref<const MatrixXd>& S) {
    if (S.rows() != S.cols()) throw std::invalid_argument("project_psd: matrix is not square");
    if (!S.allFinite()) throw std::invalid_argument("project_psd: non-finite input");
    const MatrixXd sym = 0.5 * (S + S.transpose());
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(sym);
    if (eig.info() != Eigen::Success) throw std::runtime_error("project_psd: eigendecomposition failed");
    const VectorXd& lambda = eig.eigenvalues();
    if (lambda(0) >= 0.0) return sym;
    const VectorXd clamped = lambda.cwiseMax(0.0);
    const MatrixXd& V = eig.eigenvectors();
    return V * clamped.asDiagonal() * V.transpose();
}

/// Blockwise Euclidean projection of a stacked slack vector onto K.
inline void project_cone_inplace(Eigen::Ref<VectorXd> s, const ConeDims& cones) {
    if (s.size() != cones.total()) throw std::invalid_argument("project_cone: dimension mismatch");
    s.head(cones.zero).setZero();
    auto nonneg = s.segment(cones.zero, cones.nonneg);
    nonneg = nonneg.cwiseMax(0.0);
    int offset = cones.zero + cones.nonneg;
    for (const int d : cones.psd) {
        const int len = ConeDims::svec_size(d);
        auto block = s.segment(offset, len);
        block = svec(project_psd(smat(block, d)));
        offset += len;
    }
}

inline VectorXd project_cone(const Eigen::Ref<const VectorXd>& s, const ConeDims& cones) {
    VectorXd out = s;
    project_cone_inplace(out, cones);
    return out;
}

}  // namespace coulomb_mpc
