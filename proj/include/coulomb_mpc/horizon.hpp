#pragma once

#include "coulomb_mpc/cones.hpp"
#include "coulomb_mpc/formation.hpp"

#include <Eigen/Sparse>

#include <numbers>
#include <optional>
#include <vector>

namespace coulomb_mpc {

/// Tuning of the finite-horizon relaxed problem.
struct MpcParams {
    int horizon = 9;
    MatrixXd Q;                  ///< state weight, 2(Ns-1) square
    MatrixXd R;                  ///< charge-product weight, m square
    MatrixXd R_delta;            ///< charge-product smoothing weight, m square
    double trace_penalty = 0.0;  ///< weight on sum of Tr(Q_hat[j])
    VectorXd xi_des;             ///< desired relative positions [m]

    /// Desired packed state [xi_des; 0].
    VectorXd desired_state() const {
        VectorXd out = VectorXd::Zero(2 * xi_des.size());
        out.head(xi_des.size()) = xi_des;
        return out;
    }

    void validate(int num_spacecraft) const {
        using detail::require;
        const int n = 2 * (num_spacecraft - 1);
        const int m = pair_count(num_spacecraft);
        require(horizon >= 1, "MpcParams: horizon must be at least 1");
        require(trace_penalty >= 0.0, "MpcParams: trace penalty must be nonnegative");
        require(xi_des.size() == num_spacecraft - 1, "MpcParams: xi_des has wrong length");
        require(Q.rows() == n && Q.cols() == n, "MpcParams: Q has wrong shape");
        require(R.rows() == m && R.cols() == m, "MpcParams: R has wrong shape");
        require(R_delta.rows() == m && R_delta.cols() == m, "MpcParams: R_delta has wrong shape");
        require(is_psd(Q), "MpcParams: Q must be symmetric positive semidefinite");
        require(is_psd(R), "MpcParams: R must be symmetric positive semidefinite");
        require(is_psd(R_delta), "MpcParams: R_delta must be symmetric positive semidefinite");
    }

    static bool is_psd(const MatrixXd& M) {
        if (!M.allFinite()) return false;
        const double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
        if ((M - M.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) return false;
        Eigen::SelfAdjointEigenSolver<MatrixXd> eig(M, Eigen::EigenvaluesOnly);
        return eig.eigenvalues().minCoeff() >= -1e-10;
    }
};

/// L_(i,j) = (E_ij + E_ji) / 2, so q' L q = q_i q_j.
inline MatrixXd pair_matrix(int i, int j, int num_spacecraft) {
    detail::require(0 <= i && i < j && j < num_spacecraft, "pair_matrix: need 0 <= i < j < Ns");
    MatrixXd L = MatrixXd::Zero(num_spacecraft, num_spacecraft);
    L(i, j) = 0.5;
    L(j, i) = 0.5;
    return L;
}

/// Structured relaxed problem for one MPC step.
struct HorizonProblem {
    VectorXd initial_state;  ///< pinned Xi_hat[0], packed
    DiscreteModel model;
    MpcParams params;
    int num_spacecraft = 0;
    VectorXd state_min;
    VectorXd state_max;
    std::optional<std::pair<VectorXd, VectorXd>> product_bounds;

    int horizon() const { return params.horizon; }
    int state_dim() const { return model.state_dim(); }
    int input_dim() const { return model.input_dim(); }
    int num_lifted() const { return params.horizon; }
    int coupling_count() const { return params.horizon * input_dim(); }
};

inline HorizonProblem build_horizon_problem(const RelativeState& measured, const DiscreteModel& model,
                                            const MpcParams& params, const FormationConfig& cfg) {
    cfg.validate();
    params.validate(cfg.num_spacecraft);
    detail::require(measured.size() == cfg.num_spacecraft - 1, "build_horizon_problem: state has wrong length");
    detail::require(model.state_dim() == cfg.state_dim() && model.input_dim() == cfg.num_pairs(),
                    "build_horizon_problem: model does not match formation");
    detail::require(cfg.state_min.allFinite() && cfg.state_max.allFinite(),
                    "build_horizon_problem: state bounds must be finite");
    HorizonProblem hp;
    hp.initial_state = measured.packed();
    detail::require(hp.initial_state.allFinite(), "build_horizon_problem: non-finite measured state");
    hp.model = model;
    hp.params = params;
    hp.num_spacecraft = cfg.num_spacecraft;
    hp.state_min = cfg.state_min;
    hp.state_max = cfg.state_max;
    if (cfg.has_product_bounds()) hp.product_bounds = std::make_pair(cfg.product_min, cfg.product_max);
    return hp;
}

/// Values of the decision variables; states[0] is the pinned initial state.
struct HorizonTrajectory {
    std::vector<VectorXd> states;  ///< Xi_hat[0..N]
    std::vector<VectorXd> inputs;  ///< u_hat[0..N-1]
    std::vector<MatrixXd> lifted;  ///< Q_hat[0..N-1]
};

/// Lift a charge sequence: Q = q q', u = L(q), states rolled out with the frozen model.
inline HorizonTrajectory lift_charges(const HorizonProblem& hp, const std::vector<VectorXd>& charges) {
    detail::require(static_cast<int>(charges.size()) == hp.horizon(), "lift_charges: need one charge vector per stage");
    HorizonTrajectory traj;
    traj.states.push_back(hp.initial_state);
    for (const VectorXd& q : charges) {
        detail::require(q.size() == hp.num_spacecraft, "lift_charges: charge vector has wrong length");
        traj.inputs.push_back(charge_products(q));
        traj.lifted.push_back(q * q.transpose());
        traj.states.push_back(hp.model.predict(traj.states.back(), traj.inputs.back()));
    }
    return traj;
}

/// Stage cost sum plus smoothing plus trace penalty over a trajectory.
inline double trajectory_cost(const MpcParams& params, const HorizonTrajectory& traj) {
    const VectorXd target = params.desired_state();
    const std::size_t N = traj.inputs.size();
    detail::require(traj.states.size() == N + 1, "trajectory_cost: need N+1 states for N inputs");
    double cost = 0.0;
    for (std::size_t j = 1; j <= N; ++j) {
        const VectorXd dx = traj.states[j] - target;
        cost += dx.dot(params.Q * dx);
        cost += traj.inputs[j - 1].dot(params.R * traj.inputs[j - 1]);
    }
    for (std::size_t j = 1; j < N; ++j) {
        const VectorXd du = traj.inputs[j] - traj.inputs[j - 1];
        cost += du.dot(params.R_delta * du);
    }
    for (const MatrixXd& Qhat : traj.lifted) cost += params.trace_penalty * Qhat.trace();
    return cost;
}

inline double evaluate_cost(const HorizonProblem& hp, const HorizonTrajectory& traj) {
    detail::require(static_cast<int>(traj.inputs.size()) == hp.horizon() &&
                        static_cast<int>(traj.lifted.size()) == hp.horizon(),
                    "evaluate_cost: trajectory length does not match horizon");
    return trajectory_cost(hp.params, traj);
}

/**
 * @brief Variable and row offsets of the conic embedding.
 *
 * Variables: Xi_hat[1..N] | u_hat[0..N-1] | svec(Q_hat[0..N-1]).
 * Rows: dynamics, coupling (zero cone) | state upper, state lower,
 * [product upper, product lower] (nonnegative) | PSD blocks.
 */
struct ConicLayout {
    int horizon = 0;
    int num_spacecraft = 0;
    int state_dim = 0;
    int input_dim = 0;
    int lifted_dim = 0;
    bool product_bounds = false;

    explicit ConicLayout(const HorizonProblem& hp)
        : horizon(hp.horizon()),
          num_spacecraft(hp.num_spacecraft),
          state_dim(hp.state_dim()),
          input_dim(hp.input_dim()),
          lifted_dim(ConeDims::svec_size(hp.num_spacecraft)),
          product_bounds(hp.product_bounds.has_value()) {}

    /// Column of Xi_hat[j], j = 1..N.
    int state_var(int j) const { return (j - 1) * state_dim; }
    int input_var(int j) const { return horizon * state_dim + j * input_dim; }
    int lifted_var(int j) const { return horizon * (state_dim + input_dim) + j * lifted_dim; }
    int num_variables() const { return horizon * (state_dim + input_dim + lifted_dim); }

    int dynamics_row(int j) const { return j * state_dim; }
    int coupling_row(int j) const { return horizon * state_dim + j * input_dim; }
    int zero_rows() const { return horizon * (state_dim + input_dim); }
    int state_upper_row(int j) const { return zero_rows() + (j - 1) * state_dim; }
    int state_lower_row(int j) const { return zero_rows() + (horizon + j - 1) * state_dim; }
    int product_upper_row(int j) const { return zero_rows() + 2 * horizon * state_dim + j * input_dim; }
    int product_lower_row(int j) const { return product_upper_row(horizon + j); }
    int nonneg_rows() const { return 2 * horizon * state_dim + (product_bounds ? 2 * horizon * input_dim : 0); }
    int psd_row(int j) const { return zero_rows() + nonneg_rows() + j * lifted_dim; }
    int num_rows() const { return zero_rows() + nonneg_rows() + horizon * lifted_dim; }

    ConeDims cones() const {
        ConeDims dims;
        dims.zero = zero_rows();
        dims.nonneg = nonneg_rows();
        dims.psd.assign(static_cast<std::size_t>(horizon), num_spacecraft);
        return dims;
    }
};

/// Right-hand side b; the only conic data that depends on the measured state.
inline VectorXd conic_rhs(const HorizonProblem& hp) {
    const ConicLayout layout(hp);
    VectorXd b = VectorXd::Zero(layout.num_rows());
    b.segment(layout.dynamics_row(0), layout.state_dim) = hp.model.A * hp.initial_state;
    for (int j = 1; j <= layout.horizon; ++j) {
        b.segment(layout.state_upper_row(j), layout.state_dim) = hp.state_max;
        b.segment(layout.state_lower_row(j), layout.state_dim) = -hp.state_min;
    }
    if (hp.product_bounds) {
        for (int j = 0; j < layout.horizon; ++j) {
            b.segment(layout.product_upper_row(j), layout.input_dim) = hp.product_bounds->second;
            b.segment(layout.product_lower_row(j), layout.input_dim) = -hp.product_bounds->first;
        }
    }
    return b;
}

inline ConicProblem to_conic(const HorizonProblem& hp) {
    const ConicLayout layout(hp);
    const int n = layout.state_dim;
    const int m = layout.input_dim;
    const int d = layout.lifted_dim;
    const int N = layout.horizon;
    const int ns = layout.num_spacecraft;
    const MpcParams& params = hp.params;
    using Triplet = Eigen::Triplet<double>;

    // Objective.
    std::vector<Triplet> p_trip;
    const auto add_block = [&p_trip](int row0, int col0, const MatrixXd& M, double scale) {
        for (int r = 0; r < M.rows(); ++r)
            for (int c = 0; c < M.cols(); ++c)
                if (M(r, c) != 0.0) p_trip.emplace_back(row0 + r, col0 + c, scale * M(r, c));
    };
    VectorXd c = VectorXd::Zero(layout.num_variables());
    const VectorXd target = params.desired_state();
    for (int j = 1; j <= N; ++j) {
        add_block(layout.state_var(j), layout.state_var(j), params.Q, 2.0);
        c.segment(layout.state_var(j), n) = -2.0 * params.Q * target;
    }
    for (int j = 0; j < N; ++j) add_block(layout.input_var(j), layout.input_var(j), params.R, 2.0);
    for (int j = 1; j < N; ++j) {
        add_block(layout.input_var(j), layout.input_var(j), params.R_delta, 2.0);
        add_block(layout.input_var(j - 1), layout.input_var(j - 1), params.R_delta, 2.0);
        add_block(layout.input_var(j), layout.input_var(j - 1), params.R_delta, -2.0);
        add_block(layout.input_var(j - 1), layout.input_var(j), params.R_delta, -2.0);
    }
    for (int j = 0; j < N; ++j)
        for (int a = 0; a < ns; ++a) c(layout.lifted_var(j) + svec_index(a, a, ns)) = params.trace_penalty;

    ConicProblem prob;
    prob.P.resize(layout.num_variables(), layout.num_variables());
    prob.P.setFromTriplets(p_trip.begin(), p_trip.end());
    prob.P.prune(0.0);
    prob.P.makeCompressed();
    prob.c = std::move(c);
    prob.offset = N * target.dot(params.Q * target);

    // Constraints.
    std::vector<Triplet> a_trip;
    const MatrixXd& A = hp.model.A;
    const MatrixXd& B = hp.model.B;
    for (int j = 0; j < N; ++j) {
        const int row = layout.dynamics_row(j);
        for (int i = 0; i < n; ++i) a_trip.emplace_back(row + i, layout.state_var(j + 1) + i, 1.0);
        if (j >= 1)
            for (int r = 0; r < n; ++r)
                for (int k = 0; k < n; ++k)
                    if (A(r, k) != 0.0) a_trip.emplace_back(row + r, layout.state_var(j) + k, -A(r, k));
        for (int r = 0; r < n; ++r)
            for (int k = 0; k < m; ++k)
                if (B(r, k) != 0.0) a_trip.emplace_back(row + r, layout.input_var(j) + k, -B(r, k));
    }
    const PairIndex pairs(ns);
    for (int j = 0; j < N; ++j)
        for (int l = 0; l < m; ++l) {
            const int row = layout.coupling_row(j) + l;
            const auto [a, b] = pairs[l];
            a_trip.emplace_back(row, layout.input_var(j) + l, 1.0);
            a_trip.emplace_back(row, layout.lifted_var(j) + svec_index(a, b, ns), -1.0 / std::numbers::sqrt2);
        }
    for (int j = 1; j <= N; ++j)
        for (int i = 0; i < n; ++i) {
            a_trip.emplace_back(layout.state_upper_row(j) + i, layout.state_var(j) + i, 1.0);
            a_trip.emplace_back(layout.state_lower_row(j) + i, layout.state_var(j) + i, -1.0);
        }
    if (layout.product_bounds)
        for (int j = 0; j < N; ++j)
            for (int l = 0; l < m; ++l) {
                a_trip.emplace_back(layout.product_upper_row(j) + l, layout.input_var(j) + l, 1.0);
                a_trip.emplace_back(layout.product_lower_row(j) + l, layout.input_var(j) + l, -1.0);
            }
    for (int j = 0; j < N; ++j)
        for (int k = 0; k < d; ++k) a_trip.emplace_back(layout.psd_row(j) + k, layout.lifted_var(j) + k, -1.0);

    prob.A.resize(layout.num_rows(), layout.num_variables());
    prob.A.setFromTriplets(a_trip.begin(), a_trip.end());
    prob.A.makeCompressed();
    prob.b = conic_rhs(hp);
    prob.cones = layout.cones();
    return prob;
}

/// Conic variable vector for a structured trajectory.
inline VectorXd pack(const HorizonProblem& hp, const HorizonTrajectory& traj) {
    const ConicLayout layout(hp);
    detail::require(static_cast<int>(traj.states.size()) == layout.horizon + 1 &&
                        static_cast<int>(traj.inputs.size()) == layout.horizon &&
                        static_cast<int>(traj.lifted.size()) == layout.horizon,
                    "pack: trajectory length does not match horizon");
    VectorXd z(layout.num_variables());
    for (int j = 1; j <= layout.horizon; ++j) z.segment(layout.state_var(j), layout.state_dim) = traj.states[j];
    for (int j = 0; j < layout.horizon; ++j) {
        z.segment(layout.input_var(j), layout.input_dim) = traj.inputs[j];
        z.segment(layout.lifted_var(j), layout.lifted_dim) = svec(traj.lifted[j]);
    }
    return z;
}

/// Structured trajectory from a conic variable vector.
inline HorizonTrajectory unpack(const HorizonProblem& hp, const Eigen::Ref<const VectorXd>& z) {
    const ConicLayout layout(hp);
    detail::require(z.size() == layout.num_variables(), "unpack: variable vector has wrong length");
    HorizonTrajectory traj;
    traj.states.push_back(hp.initial_state);
    for (int j = 1; j <= layout.horizon; ++j) traj.states.push_back(z.segment(layout.state_var(j), layout.state_dim));
    for (int j = 0; j < layout.horizon; ++j) {
        traj.inputs.push_back(z.segment(layout.input_var(j), layout.input_dim));
        traj.lifted.push_back(smat(z.segment(layout.lifted_var(j), layout.lifted_dim), layout.num_spacecraft));
    }
    return traj;
}

}  // namespace coulomb_mpc
