#pragma once

#include "coulomb_mpc/controller.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace coulomb_mpc {

/// Complete description of one closed-loop run.
struct ScenarioConfig {
    FormationConfig formation;
    MpcParams mpc;
    SolverSettings solver;
    VectorXd initial_state;         ///< packed Xi[0]
    double sample_period = 0.5;     ///< [s]
    int steps = 600;
    int substeps = 10;              ///< RK4 substeps per sample for the truth model
    double saturation_limit = 0.1;  ///< [10 mC]
    int max_consecutive_faults = 50;
    std::string output;

    void validate() const {
        using detail::require;
        formation.validate();
        mpc.validate(formation.num_spacecraft);
        solver.validate();
        require(initial_state.size() == formation.state_dim(), "ScenarioConfig: initial state has wrong length");
        require(sample_period > 0.0, "ScenarioConfig: sample period must be positive");
        require(steps >= 1, "ScenarioConfig: steps must be at least 1");
        require(substeps >= 1, "ScenarioConfig: substeps must be at least 1");
        require(saturation_limit > 0.0, "ScenarioConfig: saturation limit must be positive");
        require(max_consecutive_faults >= 1, "ScenarioConfig: max_consecutive_faults must be at least 1");
        check_separation(positions_from_relative(initial_state.head(formation.num_spacecraft - 1)),
                         formation.min_separation);
    }
};

/**
 * @brief Four-spacecraft stabilization scenario.
 *
 * xi_des = [50, 100, 150] m, Xi[0] = [53, 109, 147, 0, 0, 0], h = 0.5 s, N = 9,
 * Q = diag(I3, 400 I3), R = 0, R_delta = 1e8 I6, trace penalty 1.5, state box
 * Xi_des +/- 10, charges saturated at 1 mC. Masses default to 600 kg.
 */
inline ScenarioConfig four_craft_scenario(double mass = 600.0) {
    ScenarioConfig cfg;
    const int ns = 4;
    const int n = 2 * (ns - 1);
    const int m = pair_count(ns);
    cfg.formation = FormationConfig::uniform(ns, mass, 0.1);
    cfg.mpc.horizon = 9;
    cfg.mpc.xi_des = (VectorXd(3) << 50.0, 100.0, 150.0).finished();
    VectorXd q_diag(n);
    q_diag << 1.0, 1.0, 1.0, 400.0, 400.0, 400.0;
    cfg.mpc.Q = q_diag.asDiagonal();
    cfg.mpc.R = MatrixXd::Zero(m, m);
    cfg.mpc.R_delta = 1e8 * MatrixXd::Identity(m, m);
    cfg.mpc.trace_penalty = 1.5;
    const VectorXd target = cfg.mpc.desired_state();
    cfg.formation.state_min = target.array() - 10.0;
    cfg.formation.state_max = target.array() + 10.0;
    cfg.initial_state = (VectorXd(n) << 53.0, 109.0, 147.0, 0.0, 0.0, 0.0).finished();
    return cfg;
}

enum class RunStatus { Completed, Collision, SolverCascade };

inline const char* to_string(RunStatus status) {
    switch (status) {
        case RunStatus::Completed: return "completed";
        case RunStatus::Collision: return "collision";
        case RunStatus::SolverCascade: return "solver_cascade";
    }
    return "unknown";
}

struct RunSummary {
    double initial_deviation = 0.0;  ///< ||xi[0] - xi_des||_inf
    double final_deviation = 0.0;    ///< ||xi - xi_des||_inf after the last propagation
    double max_charge = 0.0;
    double total_solve_time = 0.0;
    int fault_count = 0;
    int saturation_count = 0;
    int state_violations = 0;        ///< propagated states outside the state box
};

struct RunLog {
    std::vector<StepRecord> records;
    RunSummary summary;
    RunStatus status = RunStatus::Completed;
    std::string message;
    VectorXd final_state;            ///< packed state after the last propagation
};

/// Controller in the loop with the nonlinear plant; charges held over each sample.
inline RunLog run_closed_loop(const ScenarioConfig& cfg) {
    cfg.validate();
    const DiscreteModel model = build_discrete_model(cfg.mpc.xi_des, cfg.sample_period, cfg.formation);
    MpcController controller(cfg.formation, model, cfg.mpc, cfg.solver, cfg.saturation_limit);

    RunLog log;
    log.records.reserve(static_cast<std::size_t>(cfg.steps));
    RelativeState state = RelativeState::from_packed(cfg.initial_state);
    const auto deviation = [&](const RelativeState& s) { return (s.xi - cfg.mpc.xi_des).lpNorm<Eigen::Infinity>(); };
    log.summary.initial_deviation = deviation(state);

    int consecutive_faults = 0;
    for (int k = 0; k < cfg.steps; ++k) {
        StepRecord rec = controller.step(state);
        log.summary.max_charge = std::max(log.summary.max_charge, rec.charges.lpNorm<Eigen::Infinity>());
        log.summary.total_solve_time += rec.solve_time;
        if (rec.saturated) ++log.summary.saturation_count;
        consecutive_faults = rec.fault ? consecutive_faults + 1 : 0;
        if (rec.fault) ++log.summary.fault_count;
        const VectorXd charges = rec.charges;
        log.records.push_back(std::move(rec));

        try {
            state = propagate(state, charges, cfg.sample_period, cfg.substeps, cfg.formation);
        } catch (const SingularityError& e) {
            log.status = RunStatus::Collision;
            log.message = e.what();
            break;
        }
        const VectorXd packed = state.packed();
        if ((packed.array() < cfg.formation.state_min.array()).any() ||
            (packed.array() > cfg.formation.state_max.array()).any())
            ++log.summary.state_violations;
        if (consecutive_faults >= cfg.max_consecutive_faults) {
            log.status = RunStatus::SolverCascade;
            log.message = std::to_string(consecutive_faults) + " consecutive solver faults";
            break;
        }
    }
    log.final_state = state.packed();
    log.summary.final_deviation = deviation(state);
    return log;
}

/// Search grid for the exhaustive reference solver; spans each spacecraft's charge bounds.
struct ChargeGrid {
    int points = 41;
};

struct BruteForceResult {
    std::vector<VectorXd> charges;  ///< best charge vector per stage
    double cost = std::numeric_limits<double>::infinity();
    long long evaluated = 0;
    long long feasible = 0;
};

/**
 * @brief Exhaustive minimization of the unrelaxed horizon cost over a charge grid.
 *
 * States are rolled out with the frozen model, state bounds are enforced on
 * stages 1..N and no trace penalty is charged. Limited to Ns <= 3, N <= 2.
 */
inline BruteForceResult brute_force_qcqp(const RelativeState& measured, const DiscreteModel& model,
                                         const MpcParams& params, const FormationConfig& cfg,
                                         const ChargeGrid& grid = {}) {
    detail::require(cfg.num_spacecraft <= 3 && params.horizon <= 2, "brute_force_qcqp: needs Ns <= 3 and N <= 2");
    detail::require(grid.points >= 21, "brute_force_qcqp: grid needs at least 21 points per charge");
    const HorizonProblem hp = build_horizon_problem(measured, model, params, cfg);
    const int ns = cfg.num_spacecraft;
    const int N = params.horizon;

    std::vector<std::vector<double>> axis(static_cast<std::size_t>(ns));
    for (int i = 0; i < ns; ++i)
        for (int p = 0; p < grid.points; ++p)
            axis[static_cast<std::size_t>(i)].push_back(cfg.charge_min(i) + (cfg.charge_max(i) - cfg.charge_min(i)) *
                                                                                 p / (grid.points - 1));

    const int dims = ns * N;
    std::vector<int> idx(static_cast<std::size_t>(dims), 0);
    MpcParams plain = params;
    plain.trace_penalty = 0.0;
    BruteForceResult best;
    HorizonTrajectory traj;
    std::vector<VectorXd> charges(static_cast<std::size_t>(N), VectorXd(ns));
    while (true) {
        for (int j = 0; j < N; ++j)
            for (int i = 0; i < ns; ++i)
                charges[j](i) = axis[static_cast<std::size_t>(i)][static_cast<std::size_t>(idx[j * ns + i])];
        traj.states.assign(1, hp.initial_state);
        traj.inputs.clear();
        bool feasible = true;
        for (int j = 0; j < N; ++j) {
            traj.inputs.push_back(charge_products(charges[j]));
            traj.states.push_back(model.predict(traj.states.back(), traj.inputs.back()));
            const VectorXd& x = traj.states.back();
            if ((x.array() < hp.state_min.array()).any() || (x.array() > hp.state_max.array()).any()) feasible = false;
            if (hp.product_bounds && ((traj.inputs.back().array() < hp.product_bounds->first.array()).any() ||
                                      (traj.inputs.back().array() > hp.product_bounds->second.array()).any()))
                feasible = false;
        }
        ++best.evaluated;
        if (feasible) {
            ++best.feasible;
            const double cost = trajectory_cost(plain, traj);
            if (cost < best.cost) {
                best.cost = cost;
                best.charges = charges;
            }
        }
        int d = 0;
        while (d < dims && ++idx[static_cast<std::size_t>(d)] == grid.points) idx[static_cast<std::size_t>(d++)] = 0;
        if (d == dims) break;
    }
    return best;
}

// ---------------------------------------------------------------------------
// CSV telemetry
// ---------------------------------------------------------------------------

inline std::string csv_header(int num_spacecraft) {
    const int n = num_spacecraft - 1;
    std::ostringstream out;
    out << "k,t";
    for (int i = 1; i <= n; ++i) out << ",xi_" << i;
    for (int i = 1; i <= n; ++i) out << ",nu_" << i;
    for (int i = 1; i <= num_spacecraft; ++i) out << ",q_" << i;
    for (int i = 1; i <= pair_count(num_spacecraft); ++i) out << ",u_" << i;
    out << ",rank_ratio,solver_status,iters,solve_time_s,saturated";
    return out.str();
}

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void write_csv(std::ostream& out, const std::vector<StepRecord>& records, int num_spacecraft) {
    out << csv_header(num_spacecraft) << '\n';
    for (const StepRecord& r : records) {
        out << r.k << ',' << format_double(r.time);
        for (Eigen::Index i = 0; i < r.measured.size(); ++i) out << ',' << format_double(r.measured(i));
        for (Eigen::Index i = 0; i < r.charges.size(); ++i) out << ',' << format_double(r.charges(i));
        for (Eigen::Index i = 0; i < r.products.size(); ++i) out << ',' << format_double(r.products(i));
        out << ',' << format_double(r.rank_ratio) << ',' << to_string(r.status) << ',' << r.iterations << ','
            << format_double(r.solve_time) << ',' << (r.saturated ? 1 : 0) << '\n';
    }
}

inline void write_csv(const RunLog& log, int num_spacecraft, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_csv: cannot open '" + path + "'");
    write_csv(out, log.records, num_spacecraft);
    if (!out) throw std::runtime_error("write_csv: write to '" + path + "' failed");
}

/// Parses a telemetry file written by write_csv(); the spacecraft count is read from the header.
inline std::vector<StepRecord> read_csv(std::istream& in, int* num_spacecraft_out = nullptr) {
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("read_csv: empty input");
    int ns = 0;
    {
        std::stringstream header(line);
        std::string col;
        while (std::getline(header, col, ','))
            if (col.rfind("q_", 0) == 0) ++ns;
    }
    if (ns < 2 || line != csv_header(ns)) throw std::runtime_error("read_csv: unrecognized header");
    if (num_spacecraft_out) *num_spacecraft_out = ns;
    const int n = ns - 1;
    const int m = pair_count(ns);

    const auto parse_double = [](const std::string& s) {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::runtime_error("read_csv: bad number '" + s + "'");
        return v;
    };
    std::vector<StepRecord> records;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream row(line);
        std::string cell;
        while (std::getline(row, cell, ',')) cells.push_back(cell);
        const std::size_t expected = static_cast<std::size_t>(2 + 2 * n + ns + m + 5);
        if (cells.size() != expected)
            throw std::runtime_error("read_csv: line " + std::to_string(line_no) + " has wrong column count");
        StepRecord r;
        std::size_t c = 0;
        r.k = std::stoi(cells[c++]);
        r.time = parse_double(cells[c++]);
        r.measured.resize(2 * n);
        for (int i = 0; i < 2 * n; ++i) r.measured(i) = parse_double(cells[c++]);
        r.charges.resize(ns);
        for (int i = 0; i < ns; ++i) r.charges(i) = parse_double(cells[c++]);
        r.products.resize(m);
        for (int i = 0; i < m; ++i) r.products(i) = parse_double(cells[c++]);
        r.rank_ratio = parse_double(cells[c++]);
        r.status = solve_status_from_string(cells[c++]);
        r.iterations = std::stoi(cells[c++]);
        r.solve_time = parse_double(cells[c++]);
        r.saturated = cells[c++] == "1";
        r.fault = r.status != SolveStatus::Optimal;
        records.push_back(std::move(r));
    }
    return records;
}

inline std::vector<StepRecord> read_csv(const std::string& path, int* num_spacecraft_out = nullptr) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_csv: cannot open '" + path + "'");
    return read_csv(in, num_spacecraft_out);
}

/// Closed-loop cost of a logged run: the horizon cost applied to the realized trajectory.
inline double replay_cost(const MpcParams& params, const std::vector<StepRecord>& records,
                          std::vector<double>* stage_costs = nullptr) {
    detail::require(records.size() >= 2, "replay_cost: need at least two records");
    HorizonTrajectory traj;
    for (const StepRecord& r : records) traj.states.push_back(r.measured);
    for (std::size_t k = 0; k + 1 < records.size(); ++k) {
        traj.inputs.push_back(records[k].products);
        traj.lifted.push_back(records[k].charges * records[k].charges.transpose());
    }
    if (stage_costs) {
        stage_costs->clear();
        for (std::size_t k = 0; k + 1 < records.size(); ++k) {
            HorizonTrajectory one;
            one.states = {traj.states[k], traj.states[k + 1]};
            one.inputs = {traj.inputs[k]};
            one.lifted = {traj.lifted[k]};
            double cost = trajectory_cost(params, one);
            if (k >= 1) {
                const VectorXd du = traj.inputs[k] - traj.inputs[k - 1];
                cost += du.dot(params.R_delta * du);
            }
            stage_costs->push_back(cost);
        }
    }
    return trajectory_cost(params, traj);
}

/// Fraction of consecutive step pairs in [first, last) on which spacecraft i's charge changes sign.
inline double sign_change_fraction(const std::vector<StepRecord>& records, std::size_t first, int i) {
    int pairs = 0;
    int changes = 0;
    for (std::size_t k = first; k + 1 < records.size(); ++k) {
        ++pairs;
        const double a = records[k].charges(i);
        const double b = records[k + 1].charges(i);
        if ((a > 0.0 && b < 0.0) || (a < 0.0 && b > 0.0)) ++changes;
    }
    return pairs > 0 ? static_cast<double>(changes) / pairs : 0.0;
}

}  // namespace coulomb_mpc
