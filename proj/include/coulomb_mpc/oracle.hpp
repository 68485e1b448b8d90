#pragma once

#include "coulomb_mpc/simulation.hpp"

#include <optional>

namespace coulomb_mpc {

struct OracleComparison {
    double relaxed_objective = 0.0;  ///< lifted problem optimum with the trace penalty removed
    SolveStatus status = SolveStatus::MaxIters;
    BruteForceResult grid;
    VectorXd rounded_charges;        ///< first-stage charges rounded from the lifted solution
    double rounded_cost = 0.0;       ///< unrelaxed cost of holding the rounded charges over the horizon
    double rank_ratio = 0.0;
};

/// Two spacecraft 50 m apart, 2 m out, one-step horizon; small enough for exhaustive search.
inline ScenarioConfig two_craft_scenario(double mass = 50.0) {
    ScenarioConfig cfg;
    cfg.formation = FormationConfig::uniform(2, mass, 0.1);
    cfg.mpc.horizon = 1;
    cfg.mpc.xi_des = VectorXd::Constant(1, 50.0);
    cfg.mpc.Q = Eigen::Vector2d(1.0, 400.0).asDiagonal();
    cfg.mpc.R = MatrixXd::Zero(1, 1);
    cfg.mpc.R_delta = 1e8 * MatrixXd::Identity(1, 1);
    cfg.mpc.trace_penalty = 1.5;
    cfg.formation.state_min = cfg.mpc.desired_state().array() - 10.0;
    cfg.formation.state_max = cfg.mpc.desired_state().array() + 10.0;
    cfg.initial_state = Eigen::Vector2d(52.0, 0.0);
    cfg.solver.eps_abs = 1e-9;
    cfg.solver.eps_rel = 1e-9;
    cfg.solver.max_iters = 200000;
    return cfg;
}

/// Unrelaxed horizon cost (no trace term) of a per-stage charge sequence rolled out on the frozen model.
inline double charge_sequence_cost(const HorizonProblem& hp, const std::vector<VectorXd>& charges) {
    MpcParams plain = hp.params;
    plain.trace_penalty = 0.0;
    HorizonTrajectory traj;
    traj.states.push_back(hp.initial_state);
    for (const VectorXd& q : charges) {
        traj.inputs.push_back(charge_products(q));
        traj.states.push_back(hp.model.predict(traj.states.back(), traj.inputs.back()));
    }
    return trajectory_cost(plain, traj);
}

/**
 * @brief Relaxed optimum versus exhaustive search on a small instance.
 *
 * The relaxation is solved with the trace penalty set to zero. Rounded charges
 * come from `rounding_trace_penalty` (the zero-penalty lift is not unique, so a
 * small penalty picks the low-rank optimum) and are clamped to the charge bounds.
 */
inline OracleComparison compare_with_grid(const RelativeState& measured, const DiscreteModel& model,
                                          const MpcParams& params, const FormationConfig& cfg,
                                          const ChargeGrid& grid, const SolverSettings& settings,
                                          double rounding_trace_penalty = 1e-3) {
    OracleComparison out;
    out.grid = brute_force_qcqp(measured, model, params, cfg, grid);

    MpcParams relaxed = params;
    relaxed.trace_penalty = 0.0;
    const HorizonProblem hp = build_horizon_problem(measured, model, relaxed, cfg);
    const SolveResult bound = solve(to_conic(hp), settings);
    out.status = bound.status;
    out.relaxed_objective = bound.objective;

    MpcParams rounding = params;
    rounding.trace_penalty = rounding_trace_penalty;
    const HorizonProblem hr = build_horizon_problem(measured, model, rounding, cfg);
    const SolveResult lifted = solve(to_conic(hr), settings);
    if (lifted.status != SolveStatus::Optimal) out.status = lifted.status;
    const HorizonTrajectory traj = unpack(hr, lifted.z);
    std::vector<VectorXd> charges;
    for (const MatrixXd& Q : traj.lifted) {
        const RecoveredCharges r = recover(Q);
        if (charges.empty()) out.rank_ratio = r.rank_ratio;
        charges.push_back(r.charges.cwiseMax(cfg.charge_min).cwiseMin(cfg.charge_max));
    }
    out.rounded_charges = charges.front();
    out.rounded_cost = charge_sequence_cost(hr, charges);
    return out;
}

}  // namespace coulomb_mpc
