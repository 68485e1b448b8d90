#pragma once

#include "coulomb_mpc/admm_solver.hpp"
#include "coulomb_mpc/formation.hpp"
#include "coulomb_mpc/horizon.hpp"
#include "coulomb_mpc/recovery.hpp"

#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace coulomb_mpc {

/// Everything logged for one control sample.
struct StepRecord {
    int k = 0;
    double time = 0.0;         ///< [s]
    VectorXd measured;         ///< packed Xi[k]
    VectorXd charges;          ///< applied q[k], [10 mC]
    VectorXd products;         ///< L(q[k]), recomputed from the applied charges
    double rank_ratio = 0.0;
    SolveStatus status = SolveStatus::MaxIters;
    int iterations = 0;
    double solve_time = 0.0;   ///< [s]
    bool saturated = false;
    double objective = 0.0;    ///< relaxed optimum; NaN on a fault
    bool fault = false;
};

struct FaultEvent {
    int k = 0;
    SolveStatus status = SolveStatus::MaxIters;
};

struct ControllerState {
    std::optional<SolveResult> previous_solution;  ///< warm-start source
    std::optional<VectorXd> previous_charges;      ///< last applied charges
    int step = 0;
    std::vector<FaultEvent> faults;
};

/// Previous iterate if it was produced for the same conic structure, otherwise nothing.
inline std::optional<WarmStart> warm_start_payload(const SolveResult& previous, const ConicProblem& next) {
    if (!(previous.cones == next.cones)) return std::nullopt;
    if (previous.z.size() != next.num_variables() || previous.y.size() != next.num_constraints() ||
        previous.s.size() != next.num_constraints())
        return std::nullopt;
    if (!previous.z.allFinite() || !previous.y.allFinite() || !previous.s.allFinite()) return std::nullopt;
    return WarmStart{previous.z, previous.s, previous.y, previous.rho};
}

/**
 * @brief Receding-horizon charge controller.
 *
 * Each step builds the relaxed horizon problem around the measurement, solves it
 * (reusing the cached factorization and warm-starting from the previous step),
 * rounds the first lifted matrix to a charge vector and saturates it. A solver
 * failure applies zero charge and keeps the last good warm start.
 */
class MpcController {
 public:
    MpcController(FormationConfig formation, DiscreteModel model, MpcParams params, SolverSettings settings,
                  double saturation_limit)
        : formation_(std::move(formation)),
          model_(std::move(model)),
          params_(std::move(params)),
          settings_(std::move(settings)),
          saturation_limit_(saturation_limit) {
        formation_.validate();
        params_.validate(formation_.num_spacecraft);
        settings_.validate();
        detail::require(saturation_limit_ > 0.0, "MpcController: saturation limit must be positive");
    }

    const ControllerState& state() const { return state_; }
    const MpcParams& params() const { return params_; }
    const DiscreteModel& model() const { return model_; }
    SolverSettings& settings() { return settings_; }

    /// New tuning; the cached solver is dropped and a stale warm start is discarded on the next step.
    void set_params(MpcParams params) {
        params.validate(formation_.num_spacecraft);
        params_ = std::move(params);
        solver_.reset();
    }

    StepRecord step(const RelativeState& measured) {
        const HorizonProblem hp = build_horizon_problem(measured, model_, params_, formation_);
        if (!solver_) {
            solver_ = std::make_unique<AdmmSolver>(to_conic(hp), settings_);
        } else {
            solver_->update_b(conic_rhs(hp));
        }

        std::optional<WarmStart> warm;
        if (settings_.warm_start && state_.previous_solution)
            warm = warm_start_payload(*state_.previous_solution, solver_->problem());
        const SolveResult result = solver_->solve(warm);

        StepRecord rec;
        rec.k = state_.step;
        rec.time = state_.step * model_.sample_period;
        rec.measured = hp.initial_state;
        rec.status = result.status;
        rec.iterations = result.iterations;
        rec.solve_time = result.solve_time;

        if (result.status == SolveStatus::Optimal) {
            const HorizonTrajectory traj = unpack(hp, result.z);
            RecoveredCharges recovered = recover(traj.lifted.front(), state_.previous_charges);
            saturate(recovered, saturation_limit_);
            rec.charges = recovered.charges;
            rec.rank_ratio = recovered.rank_ratio;
            rec.saturated = recovered.saturated;
            rec.objective = result.objective;
            state_.previous_solution = result;
        } else {
            rec.charges = VectorXd::Zero(formation_.num_spacecraft);
            rec.rank_ratio = 0.0;
            rec.objective = std::numeric_limits<double>::quiet_NaN();
            rec.fault = true;
            state_.faults.push_back({state_.step, result.status});
        }
        rec.products = charge_products(rec.charges);
        state_.previous_charges = rec.charges;
        ++state_.step;
        return rec;
    }

 private:
    FormationConfig formation_;
    DiscreteModel model_;
    MpcParams params_;
    SolverSettings settings_;
    double saturation_limit_;
    std::unique_ptr<AdmmSolver> solver_;
    ControllerState state_;
};

}  // namespace coulomb_mpc
