#include "coulomb_mpc/oracle.hpp"
#include "coulomb_mpc/simulation.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

using namespace coulomb_mpc;

namespace {

ScenarioConfig three_craft_scenario(int steps) {
    ScenarioConfig cfg;
    cfg.formation = FormationConfig::uniform(3, 50.0, 0.1);
    cfg.mpc.horizon = 4;
    cfg.mpc.xi_des = (VectorXd(2) << 50.0, 100.0).finished();
    cfg.mpc.Q = (VectorXd(4) << 1.0, 1.0, 400.0, 400.0).finished().asDiagonal();
    cfg.mpc.R = MatrixXd::Zero(3, 3);
    cfg.mpc.R_delta = 1e6 * MatrixXd::Identity(3, 3);
    cfg.mpc.trace_penalty = 1.5;
    cfg.formation.state_min = cfg.mpc.desired_state().array() - 10.0;
    cfg.formation.state_max = cfg.mpc.desired_state().array() + 10.0;
    cfg.initial_state = (VectorXd(4) << 52.0, 99.0, 0.0, 0.0).finished();
    cfg.steps = steps;
    return cfg;
}

std::string to_csv(const RunLog& log, int ns) {
    std::ostringstream out;
    write_csv(out, log.records, ns);
    return out.str();
}

}  // namespace

TEST_CASE("equilibrium is held") {
    ScenarioConfig cfg = three_craft_scenario(20);
    cfg.initial_state = cfg.mpc.desired_state();
    // the lifted optimum is zero; residual solver error enters the charges as its square root
    cfg.solver.eps_abs = 1e-10;
    cfg.solver.eps_rel = 1e-10;
    cfg.solver.max_iters = 200000;
    const RunLog log = run_closed_loop(cfg);
    REQUIRE(log.status == RunStatus::Completed);
    REQUIRE(log.records.size() == 20);
    for (const StepRecord& r : log.records)
        CHECK((r.measured - cfg.mpc.desired_state()).lpNorm<Eigen::Infinity>() <= 1e-6);
    CHECK(log.summary.final_deviation <= 1e-6);
}

TEST_CASE("closed loop reduces the deviation and logs every step") {
    const ScenarioConfig cfg = three_craft_scenario(60);
    const RunLog log = run_closed_loop(cfg);
    REQUIRE(log.status == RunStatus::Completed);
    REQUIRE(log.records.size() == 60);
    for (std::size_t k = 0; k < log.records.size(); ++k) {
        CHECK(log.records[k].k == static_cast<int>(k));
        CHECK(log.records[k].time == 0.5 * static_cast<double>(k));
        CHECK(log.records[k].charges.lpNorm<Eigen::Infinity>() <= cfg.saturation_limit);
    }
    CHECK(log.summary.initial_deviation == 2.0);
    CHECK(log.summary.final_deviation < log.summary.initial_deviation);
    CHECK(log.summary.fault_count == 0);
    CHECK(log.summary.state_violations == 0);
    CHECK(log.summary.total_solve_time > 0.0);
}

TEST_CASE("identical configs give identical logs") {
    const ScenarioConfig cfg = three_craft_scenario(15);
    const RunLog a = run_closed_loop(cfg);
    const RunLog b = run_closed_loop(cfg);
    REQUIRE(a.records.size() == b.records.size());
    for (std::size_t k = 0; k < a.records.size(); ++k) {
        CHECK(a.records[k].measured == b.records[k].measured);
        CHECK(a.records[k].charges == b.records[k].charges);
        CHECK(a.records[k].iterations == b.records[k].iterations);
    }
    CHECK(a.final_state == b.final_state);
}

TEST_CASE("collision aborts with a partial log") {
    // two spacecraft closing at 10 m/s from 2 m apart
    ScenarioConfig cfg = three_craft_scenario(10);
    cfg.formation = FormationConfig::uniform(2, 5000.0, 0.1);
    cfg.mpc.xi_des = VectorXd::Constant(1, 2.0);
    cfg.mpc.Q = Eigen::Vector2d(1.0, 1.0).asDiagonal();
    cfg.mpc.R = MatrixXd::Zero(1, 1);
    cfg.mpc.R_delta = MatrixXd::Zero(1, 1);
    cfg.formation.state_min = Eigen::Vector2d(-100.0, -100.0);
    cfg.formation.state_max = Eigen::Vector2d(100.0, 100.0);
    cfg.formation.min_separation = 0.5;
    cfg.initial_state = Eigen::Vector2d(2.0, -10.0);
    const RunLog log = run_closed_loop(cfg);
    CHECK(log.status == RunStatus::Collision);
    CHECK(log.records.size() == 1);
    CHECK_FALSE(log.message.empty());
}

TEST_CASE("repeated solver faults stop the run") {
    ScenarioConfig cfg = three_craft_scenario(30);
    cfg.solver.max_iters = 1;
    cfg.max_consecutive_faults = 4;
    const RunLog log = run_closed_loop(cfg);
    CHECK(log.status == RunStatus::SolverCascade);
    CHECK(log.records.size() == 4);
    CHECK(log.summary.fault_count == 4);
    for (const StepRecord& r : log.records) {
        CHECK(r.fault);
        CHECK(r.charges.isZero());
    }
}

TEST_CASE("CSV header and empty log") {
    CHECK(csv_header(4) ==
          "k,t,xi_1,xi_2,xi_3,nu_1,nu_2,nu_3,q_1,q_2,q_3,q_4,u_1,u_2,u_3,u_4,u_5,u_6,"
          "rank_ratio,solver_status,iters,solve_time_s,saturated");
    std::ostringstream out;
    write_csv(out, {}, 3);
    CHECK(out.str() == csv_header(3) + "\n");
    std::istringstream in(out.str());
    int ns = 0;
    CHECK(read_csv(in, &ns).empty());
    CHECK(ns == 3);
}

TEST_CASE("CSV round trip is exact") {
    const ScenarioConfig cfg = three_craft_scenario(12);
    const RunLog log = run_closed_loop(cfg);
    const std::string text = to_csv(log, 3);
    std::istringstream in(text);
    const std::vector<StepRecord> back = read_csv(in);
    REQUIRE(back.size() == log.records.size());
    for (std::size_t k = 0; k < back.size(); ++k) {
        const StepRecord& a = log.records[k];
        const StepRecord& b = back[k];
        CHECK(a.k == b.k);
        CHECK(a.time == b.time);
        CHECK(a.measured == b.measured);
        CHECK(a.charges == b.charges);
        CHECK(a.products == b.products);
        CHECK(a.rank_ratio == b.rank_ratio);
        CHECK(a.status == b.status);
        CHECK(a.iterations == b.iterations);
        CHECK(a.solve_time == b.solve_time);
        CHECK(a.saturated == b.saturated);
    }
    CHECK(to_csv(RunLog{back, {}, RunStatus::Completed, {}, {}}, 3) == text);

    const auto path = std::filesystem::temp_directory_path() / "coulomb_mpc_roundtrip.csv";
    write_csv(log, 3, path.string());
    CHECK(read_csv(path.string()).size() == log.records.size());
    std::filesystem::remove(path);
}

TEST_CASE("CSV parse errors") {
    std::istringstream empty("");
    CHECK_THROWS(read_csv(empty));
    std::istringstream wrong_header("a,b,c\n");
    CHECK_THROWS(read_csv(wrong_header));
    std::istringstream short_row(csv_header(2) + "\n0,0,1\n");
    CHECK_THROWS(read_csv(short_row));
    std::istringstream bad_number(csv_header(2) + "\n0,0,5x,0,0,0,0,1,optimal,3,0.1,0\n");
    CHECK_THROWS(read_csv(bad_number));
    CHECK_THROWS(read_csv(std::string("/nonexistent/dir/file.csv")));
    CHECK_THROWS(write_csv(RunLog{}, 3, "/nonexistent/dir/file.csv"));
}

TEST_CASE("replayed cost matches the trajectory cost") {
    const ScenarioConfig cfg = three_craft_scenario(8);
    const RunLog log = run_closed_loop(cfg);
    std::vector<double> stages;
    const double total = replay_cost(cfg.mpc, log.records, &stages);
    REQUIRE(stages.size() == 7);
    double sum = 0.0;
    for (double c : stages) sum += c;
    CHECK(sum == Catch::Approx(total).epsilon(1e-12));
    CHECK_THROWS_AS(replay_cost(cfg.mpc, {log.records.front()}), std::invalid_argument);
}

TEST_CASE("sign change fraction") {
    std::vector<StepRecord> recs(5);
    const double q[] = {0.1, -0.1, 0.1, 0.0, 0.1};
    for (int k = 0; k < 5; ++k) recs[static_cast<std::size_t>(k)].charges = VectorXd::Constant(1, q[k]);
    CHECK(sign_change_fraction(recs, 0, 0) == Catch::Approx(0.5));
    CHECK(sign_change_fraction(recs, 3, 0) == 0.0);
    CHECK(sign_change_fraction(recs, 4, 0) == 0.0);
}

TEST_CASE("truth integration is converged at ten substeps") {
    const ScenarioConfig cfg = four_craft_scenario();
    RelativeState a = RelativeState::from_packed(cfg.initial_state);
    RelativeState b = a;
    const VectorXd q = (VectorXd(4) << -0.0448, -0.003, 0.1, 0.1).finished();
    for (int k = 0; k < 40; ++k) {
        a = propagate(a, q, cfg.sample_period, 10, cfg.formation);
        b = propagate(b, q, cfg.sample_period, 20, cfg.formation);
    }
    CHECK((a.packed() - b.packed()).lpNorm<Eigen::Infinity>() < 1e-6);
}

TEST_CASE("four-spacecraft defaults") {
    const ScenarioConfig cfg = four_craft_scenario();
    CHECK_NOTHROW(cfg.validate());
    CHECK(cfg.formation.masses == VectorXd::Constant(4, 600.0));
    CHECK(cfg.mpc.horizon == 9);
    CHECK(cfg.mpc.Q.diagonal() == (VectorXd(6) << 1, 1, 1, 400, 400, 400).finished());
    CHECK(cfg.mpc.R_delta == 1e8 * MatrixXd::Identity(6, 6));
    CHECK(cfg.mpc.trace_penalty == 1.5);
    CHECK(cfg.sample_period == 0.5);
    CHECK(cfg.steps == 600);
    CHECK(cfg.saturation_limit == 0.1);
    CHECK(cfg.formation.state_max - cfg.mpc.desired_state() == VectorXd::Constant(6, 10.0));

    ScenarioConfig bad = cfg;
    bad.steps = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.initial_state(0) = 0.0;  // spacecraft 2 on top of spacecraft 1
    CHECK_THROWS_AS(bad.validate(), SingularityError);
}

TEST_CASE("exhaustive search at equilibrium") {
    ScenarioConfig cfg = two_craft_scenario();
    const DiscreteModel model = build_discrete_model(cfg.mpc.xi_des, cfg.sample_period, cfg.formation);
    const RelativeState x(cfg.mpc.xi_des, VectorXd::Zero(1));
    const BruteForceResult r = brute_force_qcqp(x, model, cfg.mpc, cfg.formation, ChargeGrid{21});
    CHECK(r.evaluated == 21 * 21);
    CHECK(r.cost == Catch::Approx(0.0).margin(1e-12));
    CHECK(charge_products(r.charges.front())(0) == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("relaxation lower-bounds the exhaustive search") {
    const ScenarioConfig cfg = two_craft_scenario();
    const DiscreteModel model = build_discrete_model(cfg.mpc.xi_des, cfg.sample_period, cfg.formation);
    for (double dx : {-2.0, 1.0, 2.5}) {
        const RelativeState x(VectorXd::Constant(1, 50.0 + dx), VectorXd::Constant(1, 0.003));
        const OracleComparison r = compare_with_grid(x, model, cfg.mpc, cfg.formation, ChargeGrid{41}, cfg.solver);
        REQUIRE(r.status == SolveStatus::Optimal);
        CHECK(r.relaxed_objective <= r.grid.cost + 1e-6);
        CHECK(r.rounded_cost <= 1.05 * r.grid.cost);
        CHECK(r.rounded_cost >= r.relaxed_objective - 1e-6);
    }
}

TEST_CASE("three-spacecraft grid never has all products negative") {
    ScenarioConfig cfg = three_craft_scenario(1);
    cfg.mpc.horizon = 1;
    const DiscreteModel model = build_discrete_model(cfg.mpc.xi_des, cfg.sample_period, cfg.formation);
    const RelativeState x = RelativeState::from_packed(cfg.initial_state);
    const BruteForceResult r = brute_force_qcqp(x, model, cfg.mpc, cfg.formation, ChargeGrid{21});
    CHECK(r.evaluated == 21 * 21 * 21);
    // enumerate the same grid and inspect every lift
    long long all_negative = 0;
    for (int a = 0; a < 21; ++a)
        for (int b = 0; b < 21; ++b)
            for (int c = 0; c < 21; ++c) {
                const VectorXd q = (VectorXd(3) << -0.1 + 0.01 * a, -0.1 + 0.01 * b, -0.1 + 0.01 * c).finished();
                if ((charge_products(q).array() < 0.0).all()) ++all_negative;
            }
    CHECK(all_negative == 0);
    REQUIRE_FALSE(r.charges.empty());
    CHECK_FALSE((charge_products(r.charges.front()).array() < 0.0).all());
}

TEST_CASE("exhaustive search size guards") {
    const ScenarioConfig four = four_craft_scenario();
    const DiscreteModel model = build_discrete_model(four.mpc.xi_des, four.sample_period, four.formation);
    CHECK_THROWS_AS(brute_force_qcqp(RelativeState::from_packed(four.initial_state), model, four.mpc, four.formation),
                    std::invalid_argument);
    const ScenarioConfig two = two_craft_scenario();
    const DiscreteModel m2 = build_discrete_model(two.mpc.xi_des, two.sample_period, two.formation);
    const RelativeState x2 = RelativeState::from_packed(two.initial_state);
    CHECK_THROWS_AS(brute_force_qcqp(x2, m2, two.mpc, two.formation, ChargeGrid{11}), std::invalid_argument);
    MpcParams long_horizon = two.mpc;
    long_horizon.horizon = 3;
    CHECK_THROWS_AS(brute_force_qcqp(x2, m2, long_horizon, two.formation), std::invalid_argument);
}
