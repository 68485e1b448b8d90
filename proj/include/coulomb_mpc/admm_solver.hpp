#pragma once

#include "coulomb_mpc/cones.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace coulomb_mpc {

enum class SolveStatus { Optimal, MaxIters, InfeasibleSuspect };

inline const char* to_string(SolveStatus status) {
    switch (status) {
        case SolveStatus::Optimal: return "optimal";
        case SolveStatus::MaxIters: return "max_iters";
        case SolveStatus::InfeasibleSuspect: return "infeasible_suspect";
    }
    return "unknown";
}

inline SolveStatus solve_status_from_string(const std::string& name) {
    if (name == "optimal") return SolveStatus::Optimal;
    if (name == "max_iters") return SolveStatus::MaxIters;
    if (name == "infeasible_suspect") return SolveStatus::InfeasibleSuspect;
    throw std::invalid_argument("unknown solver status '" + name + "'");
}

struct SolverSettings {
    double eps_abs = 1e-6;
    double eps_rel = 1e-6;
    int max_iters = 20000;
    double rho = 1.0;               ///< initial ADMM penalty
    bool adaptive_rho = true;
    int adaptive_rho_interval = 50;
    double adaptive_rho_tolerance = 5.0;  ///< refactor when rho moves by more than this factor
    bool warm_start = true;
    double sigma = 1e-6;            ///< proximal regularization on the primal step
    double alpha = 1.6;             ///< over-relaxation
    double equality_rho_scale = 1e3;
    int scaling_iters = 15;
    int check_interval = 5;
    /// Optional diagnostics stream: (iteration, primal residual, dual residual).
    std::function<void(int, double, double)> iteration_log;

    void validate() const {
        if (!(eps_abs > 0.0) || !(eps_rel > 0.0)) throw std::invalid_argument("SolverSettings: tolerances must be positive");
        if (max_iters < 1) throw std::invalid_argument("SolverSettings: max_iters must be at least 1");
        if (!(rho > 0.0) || !(sigma > 0.0)) throw std::invalid_argument("SolverSettings: rho and sigma must be positive");
        if (!(alpha > 0.0 && alpha < 2.0)) throw std::invalid_argument("SolverSettings: alpha must lie in (0, 2)");
        if (check_interval < 1 || adaptive_rho_interval < 1)
            throw std::invalid_argument("SolverSettings: intervals must be positive");
    }
};

struct SolveResult {
    VectorXd z;  ///< primal variables
    VectorXd s;  ///< slack, lies in K
    VectorXd y;  ///< dual variables, lies in K*
    SolveStatus status = SolveStatus::MaxIters;
    int iterations = 0;
    double primal_residual = std::numeric_limits<double>::infinity();
    double dual_residual = std::numeric_limits<double>::infinity();
    double objective = std::numeric_limits<double>::quiet_NaN();
    double solve_time = 0.0;  ///< wall clock [s]
    double rho = 0.0;         ///< penalty in effect at exit
    ConeDims cones;           ///< cone layout of the problem that produced this result
};

/// Initial iterate for a warm-started solve.
struct WarmStart {
    VectorXd z;
    VectorXd s;
    VectorXd y;
    double rho = 0.0;  ///< 0 keeps the solver's current penalty
};

/// KKT residuals recomputed from scratch: (||Az + s - b||_inf, ||Pz + c + A'y||_inf).
inline std::pair<double, double> kkt_residuals(const ConicProblem& prob, const Eigen::Ref<const VectorXd>& z,
                                               const Eigen::Ref<const VectorXd>& s,
                                               const Eigen::Ref<const VectorXd>& y) {
    const double primal = (prob.A * z + s - prob.b).lpNorm<Eigen::Infinity>();
    const double dual = (prob.P * z + prob.c + prob.A.transpose() * y).lpNorm<Eigen::Infinity>();
    return {primal, dual};
}

/**
 * @brief Operator-splitting solver for conic programs with a convex quadratic objective.
 *
 * Works on the splitting A z = w, w in C = b - K. Each iteration solves one
 * quasi-definite KKT system (factored once, refactored only when rho is
 * rescaled), projects onto C, and updates the dual. Problem data are Ruiz
 * equilibrated; rows of a PSD block share one scale so the cone is preserved.
 *
 * The factorization depends only on P, A and the cone layout, so update_b()
 * followed by solve() reuses it.
 */
class AdmmSolver {
 public:
    AdmmSolver(ConicProblem problem, SolverSettings settings)
        : problem_(std::move(problem)), settings_(std::move(settings)) {
        settings_.validate();
        problem_.validate();
        n_ = problem_.num_variables();
        m_ = problem_.num_constraints();
        equilibrate();
        rho_ = settings_.rho;
        build_kkt();
        reset_iterates();
    }

    const ConicProblem& problem() const { return problem_; }
    const SolverSettings& settings() const { return settings_; }
    SolverSettings& mutable_settings() { return settings_; }
    double rho() const { return rho_; }
    int factorizations() const { return factorizations_; }

    /// Replace the right-hand side; the sparsity pattern and factorization stay.
    void update_b(const Eigen::Ref<const VectorXd>& b) {
        if (b.size() != m_) throw std::invalid_argument("AdmmSolver::update_b: dimension mismatch");
        if (!b.allFinite()) throw std::invalid_argument("AdmmSolver::update_b: non-finite data");
        problem_.b = b;
        b_scaled_ = E_.cwiseProduct(b);
    }

    /// Replace the linear cost term; the factorization stays.
    void update_c(const Eigen::Ref<const VectorXd>& c, double offset) {
        if (c.size() != n_) throw std::invalid_argument("AdmmSolver::update_c: dimension mismatch");
        if (!c.allFinite()) throw std::invalid_argument("AdmmSolver::update_c: non-finite data");
        problem_.c = c;
        problem_.offset = offset;
        c_scaled_ = cost_scale_ * D_.cwiseProduct(c);
    }

    SolveResult solve(const std::optional<WarmStart>& warm = std::nullopt) {
        const auto start = std::chrono::steady_clock::now();
        if (warm) {
            apply_warm_start(*warm);
        } else {
            reset_iterates();
            set_rho(settings_.rho);
        }

        SolveResult best;
        double best_score = std::numeric_limits<double>::infinity();
        VectorXd rhs(n_ + m_), sol(n_ + m_), x_tilde(n_), z_tilde(m_), z_relaxed(m_), w(m_);
        const double alpha = settings_.alpha;
        double initial_primal = -1.0;
        bool diverged = false;

        int iter = 0;
        for (iter = 1; iter <= settings_.max_iters; ++iter) {
            rhs.head(n_) = settings_.sigma * x_ - c_scaled_;
            rhs.tail(m_) = z_ - y_.cwiseQuotient(rho_vec_);
            sol = kkt_.solve(rhs);
            x_tilde = sol.head(n_);
            z_tilde = z_ + (sol.tail(m_) - y_).cwiseQuotient(rho_vec_);

            x_ = alpha * x_tilde + (1.0 - alpha) * x_;
            z_relaxed = alpha * z_tilde + (1.0 - alpha) * z_;
            w = z_relaxed + y_.cwiseQuotient(rho_vec_);
            project_onto_shifted_cone(w);
            y_ += rho_vec_.cwiseProduct(z_relaxed - w);
            z_ = w;

            const bool last = iter == settings_.max_iters;
            if (iter % settings_.check_interval != 0 && !last) continue;

            if (!x_.allFinite() || !y_.allFinite()) {
                diverged = true;
                break;
            }
            const Residuals r = residuals();
            if (settings_.iteration_log) settings_.iteration_log(iter, r.primal, r.dual);
            if (initial_primal < 0.0) initial_primal = std::max(r.primal, 1.0);
            if (r.primal > 1e12 * initial_primal) {
                diverged = true;
                break;
            }
            const double score = std::max(r.primal / r.eps_primal, r.dual / r.eps_dual);
            if (score < best_score) {
                best_score = score;
                export_iterate(best);
                best.iterations = iter;
                best.primal_residual = r.primal;
                best.dual_residual = r.dual;
            }
            if (r.primal <= r.eps_primal && r.dual <= r.eps_dual) {
                export_iterate(best);
                best.iterations = iter;
                best.primal_residual = r.primal;
                best.dual_residual = r.dual;
                best.status = SolveStatus::Optimal;
                break;
            }
            if (settings_.adaptive_rho && iter % settings_.adaptive_rho_interval == 0) adapt_rho();
        }

        if (diverged) {
            reset_iterates();
            best = SolveResult{};
            best.z = VectorXd::Zero(n_);
            best.s = VectorXd::Zero(m_);
            best.y = VectorXd::Zero(m_);
            best.status = SolveStatus::InfeasibleSuspect;
            best.iterations = iter;
        } else if (best.status != SolveStatus::Optimal) {
            best.status = SolveStatus::MaxIters;
            best.iterations = std::min(iter, settings_.max_iters);
            if (best.z.size() == 0) export_iterate(best);
        }
        best.objective = best.z.allFinite() ? problem_.objective(best.z) : std::numeric_limits<double>::quiet_NaN();
        best.rho = rho_;
        best.cones = problem_.cones;
        best.solve_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        return best;
    }

 private:
    struct Residuals {
        double primal, dual, eps_primal, eps_dual;
    };

    void equilibrate() {
        // P and A are stored with both triangles; column norms of the KKT
        // matrix [P A'; A 0] give the variable and constraint scalings.
        D_ = VectorXd::Ones(n_);
        E_ = VectorXd::Ones(m_);
        SparseMatrixd P = problem_.P;
        SparseMatrixd A = problem_.A;
        VectorXd c = problem_.c;
        const auto clamp_norm = [](double v) { return v < 1e-4 ? 1.0 : std::min(v, 1e4); };

        for (int it = 0; it < settings_.scaling_iters; ++it) {
            VectorXd col_norm = VectorXd::Zero(n_);
            VectorXd row_norm = VectorXd::Zero(m_);
            for (int k = 0; k < P.outerSize(); ++k)
                for (SparseMatrixd::InnerIterator iter(P, k); iter; ++iter)
                    col_norm(iter.col()) = std::max(col_norm(iter.col()), std::abs(iter.value()));
            for (int k = 0; k < A.outerSize(); ++k)
                for (SparseMatrixd::InnerIterator iter(A, k); iter; ++iter) {
                    const double v = std::abs(iter.value());
                    col_norm(iter.col()) = std::max(col_norm(iter.col()), v);
                    row_norm(iter.row()) = std::max(row_norm(iter.row()), v);
                }
            VectorXd d(n_), e(m_);
            for (int j = 0; j < n_; ++j) d(j) = 1.0 / std::sqrt(clamp_norm(col_norm(j)));
            for (int i = 0; i < m_; ++i) e(i) = 1.0 / std::sqrt(clamp_norm(row_norm(i)));
            int offset = problem_.cones.zero + problem_.cones.nonneg;
            for (const int side : problem_.cones.psd) {
                const int len = ConeDims::svec_size(side);
                const double shared = e.segment(offset, len).mean();
                e.segment(offset, len).setConstant(shared);
                offset += len;
            }
            P = d.asDiagonal() * P * d.asDiagonal();
            A = e.asDiagonal() * A * d.asDiagonal();
            c = d.cwiseProduct(c);
            D_ = D_.cwiseProduct(d);
            E_ = E_.cwiseProduct(e);
        }

        double p_norm = 0.0;
        if (P.nonZeros() > 0) {
            VectorXd col_norm = VectorXd::Zero(n_);
            for (int k = 0; k < P.outerSize(); ++k)
                for (SparseMatrixd::InnerIterator iter(P, k); iter; ++iter)
                    col_norm(iter.col()) = std::max(col_norm(iter.col()), std::abs(iter.value()));
            p_norm = col_norm.mean();
        }
        const double c_norm = c.size() > 0 ? c.lpNorm<Eigen::Infinity>() : 0.0;
        cost_scale_ = 1.0 / clamp_norm(std::max(p_norm, c_norm));

        P_scaled_ = cost_scale_ * P;
        P_scaled_.makeCompressed();
        A_scaled_ = A;
        A_scaled_.makeCompressed();
        At_scaled_ = A_scaled_.transpose();
        c_scaled_ = cost_scale_ * c;
        b_scaled_ = E_.cwiseProduct(problem_.b);
        D_inv_ = D_.cwiseInverse();
        E_inv_ = E_.cwiseInverse();
    }

    void build_kkt() {
        std::vector<Eigen::Triplet<double>> triplets;
        triplets.reserve(static_cast<std::size_t>(P_scaled_.nonZeros() + A_scaled_.nonZeros() + n_ + m_));
        for (int k = 0; k < P_scaled_.outerSize(); ++k)
            for (SparseMatrixd::InnerIterator it(P_scaled_, k); it; ++it)
                if (it.row() > it.col()) triplets.emplace_back(it.row(), it.col(), it.value());
        VectorXd p_diag = VectorXd::Zero(n_);
        for (int k = 0; k < P_scaled_.outerSize(); ++k)
            for (SparseMatrixd::InnerIterator it(P_scaled_, k); it; ++it)
                if (it.row() == it.col()) p_diag(it.row()) += it.value();
        for (int j = 0; j < n_; ++j) triplets.emplace_back(j, j, p_diag(j) + settings_.sigma);
        for (int k = 0; k < A_scaled_.outerSize(); ++k)
            for (SparseMatrixd::InnerIterator it(A_scaled_, k); it; ++it)
                triplets.emplace_back(n_ + it.row(), it.col(), it.value());
        for (int i = 0; i < m_; ++i) triplets.emplace_back(n_ + i, n_ + i, -1.0);
        kkt_matrix_.resize(n_ + m_, n_ + m_);
        kkt_matrix_.setFromTriplets(triplets.begin(), triplets.end());
        kkt_matrix_.makeCompressed();

        rho_diag_ptr_.assign(static_cast<std::size_t>(m_), nullptr);
        for (int i = 0; i < m_; ++i) rho_diag_ptr_[static_cast<std::size_t>(i)] = &kkt_matrix_.coeffRef(n_ + i, n_ + i);
        kkt_.analyzePattern(kkt_matrix_);
        factor_with_rho(rho_);
    }

    void factor_with_rho(double rho) {
        rho_ = rho;
        rho_vec_.resize(m_);
        for (int i = 0; i < m_; ++i)
            rho_vec_(i) = i < problem_.cones.zero ? rho * settings_.equality_rho_scale : rho;
        for (int i = 0; i < m_; ++i) *rho_diag_ptr_[static_cast<std::size_t>(i)] = -1.0 / rho_vec_(i);
        kkt_.factorize(kkt_matrix_);
        ++factorizations_;
        if (kkt_.info() != Eigen::Success) throw std::runtime_error("AdmmSolver: KKT factorization failed");
    }

    void set_rho(double rho) {
        if (rho != rho_) factor_with_rho(rho);
    }

    void reset_iterates() {
        x_ = VectorXd::Zero(n_);
        z_ = VectorXd::Zero(m_);
        y_ = VectorXd::Zero(m_);
    }

    void apply_warm_start(const WarmStart& warm) {
        if (warm.z.size() != n_ || warm.y.size() != m_ || warm.s.size() != m_)
            throw std::invalid_argument("AdmmSolver: warm start has wrong dimensions");
        if (warm.rho > 0.0) set_rho(warm.rho);
        x_ = D_inv_.cwiseProduct(warm.z);
        z_ = A_scaled_ * x_;
        y_ = cost_scale_ * E_inv_.cwiseProduct(warm.y);
    }

    /// w <- b - proj_K(b - w), in scaled coordinates.
    void project_onto_shifted_cone(VectorXd& w) const {
        VectorXd slack = b_scaled_ - w;
        project_cone_inplace(slack, problem_.cones);
        w = b_scaled_ - slack;
    }

    void export_iterate(SolveResult& out) const {
        out.z = D_.cwiseProduct(x_);
        VectorXd slack = b_scaled_ - z_;
        project_cone_inplace(slack, problem_.cones);
        out.s = E_inv_.cwiseProduct(slack);
        out.y = E_.cwiseProduct(y_) / cost_scale_;
    }

    Residuals residuals() const {
        const VectorXd Ax = A_scaled_ * x_;
        const VectorXd Px = P_scaled_ * x_;
        const VectorXd Aty = At_scaled_ * y_;
        Residuals r{};
        r.primal = E_inv_.cwiseProduct(Ax - z_).lpNorm<Eigen::Infinity>();
        r.dual = D_inv_.cwiseProduct(Px + c_scaled_ + Aty).lpNorm<Eigen::Infinity>() / cost_scale_;
        const double primal_norm = std::max(E_inv_.cwiseProduct(Ax).lpNorm<Eigen::Infinity>(),
                                 E_inv_.cwiseProduct(z_).lpNorm<Eigen::Infinity>());
        const double dual_norm = std::max({D_inv_.cwiseProduct(Px).lpNorm<Eigen::Infinity>(),
                                D_inv_.cwiseProduct(Aty).lpNorm<Eigen::Infinity>(),
                                D_inv_.cwiseProduct(c_scaled_).lpNorm<Eigen::Infinity>()}) /
                      cost_scale_;
        r.eps_primal = settings_.eps_abs + settings_.eps_rel * primal_norm;
        r.eps_dual = settings_.eps_abs + settings_.eps_rel * dual_norm;
        return r;
    }

    /// Balances scaled primal and dual residuals, each relative to its own magnitude.
    void adapt_rho() {
        constexpr double tiny = 1e-30;
        const VectorXd Ax = A_scaled_ * x_;
        const VectorXd Px = P_scaled_ * x_;
        const VectorXd Aty = At_scaled_ * y_;
        const double primal = (Ax - z_).lpNorm<Eigen::Infinity>();
        const double dual = (Px + c_scaled_ + Aty).lpNorm<Eigen::Infinity>();
        const double primal_norm = std::max(Ax.lpNorm<Eigen::Infinity>(), z_.lpNorm<Eigen::Infinity>());
        const double dual_norm = std::max({Px.lpNorm<Eigen::Infinity>(), Aty.lpNorm<Eigen::Infinity>(),
                                           c_scaled_.lpNorm<Eigen::Infinity>()});
        const double primal_rel = primal / (primal_norm + tiny);
        const double dual_rel = dual / (dual_norm + tiny);
        double proposed = rho_ * std::sqrt(primal_rel / (dual_rel + tiny));
        proposed = std::clamp(proposed, 1e-6, 1e6);
        if (proposed > rho_ * settings_.adaptive_rho_tolerance || proposed < rho_ / settings_.adaptive_rho_tolerance)
            factor_with_rho(proposed);
    }

    ConicProblem problem_;
    SolverSettings settings_;
    int n_ = 0;
    int m_ = 0;

    VectorXd D_, E_, D_inv_, E_inv_;
    double cost_scale_ = 1.0;
    SparseMatrixd P_scaled_, A_scaled_, At_scaled_;
    VectorXd c_scaled_, b_scaled_;

    SparseMatrixd kkt_matrix_;
    std::vector<double*> rho_diag_ptr_;
    Eigen::SimplicialLDLT<SparseMatrixd, Eigen::Lower> kkt_;
    double rho_ = 1.0;
    VectorXd rho_vec_;
    int factorizations_ = 0;

    VectorXd x_, z_, y_;
};

/// One-shot convenience wrapper.
inline SolveResult solve(const ConicProblem& problem, const SolverSettings& settings,
                         const std::optional<WarmStart>& warm = std::nullopt) {
    AdmmSolver solver(problem, settings);
    return solver.solve(warm);
}

}  // namespace coulomb_mpc
