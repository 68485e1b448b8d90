// coulomb_sim: closed-loop runs, cost replay and the exhaustive-search check.
//
// Exit codes: 0 success, 1 bad config or arguments, 2 run aborted (collision or
// repeated solver faults).

#include "coulomb_mpc.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

using namespace coulomb_mpc;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeAbort = 2;

struct Overrides {
    std::string config;
    std::string output;
    std::optional<int> steps;
    std::optional<int> horizon;
    bool no_warm_start = false;
};

ScenarioConfig load(const Overrides& o, ScenarioConfig fallback) {
    ScenarioConfig cfg = o.config.empty() ? std::move(fallback) : load_scenario(o.config);
    if (o.steps) cfg.steps = *o.steps;
    if (o.horizon) cfg.mpc.horizon = *o.horizon;
    if (o.no_warm_start) cfg.solver.warm_start = false;
    if (!o.output.empty()) cfg.output = o.output;
    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return cfg;
}

std::string vec(const VectorXd& v) {
    std::string out = "[";
    for (Eigen::Index i = 0; i < v.size(); ++i) out += (i ? ", " : "") + format_double(v(i));
    return out + "]";
}

int cmd_run(const Overrides& o) {
    const ScenarioConfig cfg = load(o, four_craft_scenario());
    const int ns = cfg.formation.num_spacecraft;
    const RunLog log = run_closed_loop(cfg);

    std::ostream* summary = &std::cout;
    if (cfg.output.empty() || cfg.output == "-") {
        write_csv(std::cout, log.records, ns);
        summary = &std::cerr;
    } else {
        write_csv(log, ns, cfg.output);
    }
    const RunSummary& s = log.summary;
    *summary << "status: " << to_string(log.status) << '\n'
             << "steps: " << log.records.size() << '\n'
             << "initial_deviation: " << s.initial_deviation << '\n'
             << "final_deviation: " << s.final_deviation << '\n'
             << "max_charge: " << s.max_charge << '\n'
             << "saturated_steps: " << s.saturation_count << '\n'
             << "solver_faults: " << s.fault_count << '\n'
             << "state_violations: " << s.state_violations << '\n'
             << "total_solve_time_s: " << s.total_solve_time << '\n';
    if (log.status != RunStatus::Completed) {
        std::cerr << "run aborted: " << log.message << '\n';
        return kRuntimeAbort;
    }
    return kOk;
}

int cmd_replay(const Overrides& o, const std::string& input, bool stages) {
    const ScenarioConfig cfg = load(o, four_craft_scenario());
    int ns = 0;
    const std::vector<StepRecord> records = read_csv(input, &ns);
    if (ns != cfg.formation.num_spacecraft)
        throw ConfigError("CSV has " + std::to_string(ns) + " spacecraft, config has " +
                          std::to_string(cfg.formation.num_spacecraft));
    std::vector<double> stage_costs;
    const double total = replay_cost(cfg.mpc, records, stages ? &stage_costs : nullptr);
    if (stages) {
        std::cout << "k,stage_cost\n";
        for (std::size_t k = 0; k < stage_costs.size(); ++k)
            std::cout << k << ',' << format_double(stage_costs[k]) << '\n';
    }
    std::cout << "total_cost: " << format_double(total) << '\n';
    return kOk;
}

int cmd_oracle(const Overrides& o, int grid_points) {
    const ScenarioConfig cfg = load(o, two_craft_scenario());
    const DiscreteModel model = build_discrete_model(cfg.mpc.xi_des, cfg.sample_period, cfg.formation);
    const RelativeState x0 = RelativeState::from_packed(cfg.initial_state);
    const OracleComparison r =
        compare_with_grid(x0, model, cfg.mpc, cfg.formation, ChargeGrid{grid_points}, cfg.solver);
    std::cout << "solver_status: " << to_string(r.status) << '\n'
              << "relaxed_objective: " << format_double(r.relaxed_objective) << '\n'
              << "grid_cost: " << format_double(r.grid.cost) << '\n'
              << "grid_charges: " << (r.grid.charges.empty() ? std::string("none") : vec(r.grid.charges.front()))
              << '\n'
              << "grid_points_evaluated: " << r.grid.evaluated << " (feasible " << r.grid.feasible << ")\n"
              << "rounded_charges: " << vec(r.rounded_charges) << '\n'
              << "rounded_cost: " << format_double(r.rounded_cost) << '\n'
              << "rank_ratio: " << format_double(r.rank_ratio) << '\n'
              << "lower_bound_holds: " << (r.relaxed_objective <= r.grid.cost + 1e-6 ? "yes" : "no") << '\n';
    return r.status == SolveStatus::Optimal ? kOk : kRuntimeAbort;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Charge-feedback MPC for collinear Coulomb formations"};
    app.require_subcommand(1);
    Overrides o;
    std::string input;
    bool stages = false;
    int grid_points = 41;

    const auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "Scenario file (key = value)")->check(CLI::ExistingFile);
        sub->add_option("--steps", o.steps, "Number of control steps")->check(CLI::PositiveNumber);
        sub->add_option("--horizon", o.horizon, "Prediction horizon")->check(CLI::PositiveNumber);
    };

    CLI::App* run = app.add_subcommand("run", "Closed-loop simulation, CSV telemetry out");
    add_common(run);
    run->add_option("--output", o.output, "CSV path ('-' for stdout)");
    run->add_flag("--no-warm-start", o.no_warm_start, "Solve every step from scratch");

    CLI::App* replay = app.add_subcommand("replay-cost", "Recompute the closed-loop cost of a CSV trace");
    add_common(replay);
    replay->add_option("--input", input, "CSV written by 'run'")->required()->check(CLI::ExistingFile);
    replay->add_flag("--stages", stages, "Also print per-step costs");

    CLI::App* oracle = app.add_subcommand("oracle", "Compare the relaxation against exhaustive charge search");
    add_common(oracle);
    oracle->add_option("--grid", grid_points, "Grid points per charge")->check(CLI::Range(21, 1001));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kConfigError;
    }

    try {
        if (*run) return cmd_run(o);
        if (*replay) return cmd_replay(o, input, stages);
        if (*oracle) return cmd_oracle(o, grid_points);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntimeAbort;
    }
    return kOk;
}
