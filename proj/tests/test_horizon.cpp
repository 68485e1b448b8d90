#include "coulomb_mpc/admm_solver.hpp"
#include "coulomb_mpc/horizon.hpp"

#include <catch_amalgamated.hpp>

#include <random>

using namespace coulomb_mpc;

namespace {

struct Fixture {
    FormationConfig cfg;
    MpcParams params;
    DiscreteModel model;
};

Fixture make_fixture(int ns, int horizon, bool product_bounds = false) {
    Fixture f;
    f.cfg = FormationConfig::uniform(ns, 600.0, 0.1);
    const int n = 2 * (ns - 1);
    const int m = pair_count(ns);
    f.params.horizon = horizon;
    f.params.xi_des = VectorXd::LinSpaced(ns - 1, 50.0, 50.0 * (ns - 1));
    VectorXd qd(n);
    qd << VectorXd::Ones(ns - 1), VectorXd::Constant(ns - 1, 400.0);
    f.params.Q = qd.asDiagonal();
    f.params.R = 0.5 * MatrixXd::Identity(m, m);
    f.params.R_delta = 1e3 * MatrixXd::Identity(m, m);
    f.params.trace_penalty = 1.5;
    f.cfg.state_min = f.params.desired_state().array() - 10.0;
    f.cfg.state_max = f.params.desired_state().array() + 10.0;
    if (product_bounds) {
        f.cfg.product_min = VectorXd::Constant(m, -0.01);
        f.cfg.product_max = VectorXd::Constant(m, 0.01);
    }
    f.model = build_discrete_model(f.params.xi_des, 0.5, f.cfg);
    return f;
}

RelativeState offset_state(const Fixture& f, double dx) {
    VectorXd xi = f.params.xi_des;
    xi(0) += dx;
    return RelativeState(xi, VectorXd::Zero(xi.size()));
}

std::vector<VectorXd> random_charges(std::mt19937& rng, int ns, int N) {
    std::uniform_real_distribution<double> u(-0.1, 0.1);
    std::vector<VectorXd> out;
    for (int j = 0; j < N; ++j) {
        VectorXd q(ns);
        for (int i = 0; i < ns; ++i) q(i) = u(rng);
        out.push_back(q);
    }
    return out;
}

}  // namespace

TEST_CASE("pair matrices pick out charge products") {
    const VectorXd q = (VectorXd(4) << 0.3, -0.7, 1.1, 0.05).finished();
    const PairIndex pairs(4);
    const VectorXd u = charge_products(q);
    for (int l = 0; l < pairs.size(); ++l) {
        const auto [i, j] = pairs[l];
        const MatrixXd L = pair_matrix(i, j, 4);
        CHECK(L.isApprox(L.transpose()));
        CHECK(q.dot(L * q) == Catch::Approx(u(l)).epsilon(1e-14));
    }
    CHECK_THROWS_AS(pair_matrix(1, 1, 4), std::invalid_argument);
    CHECK_THROWS_AS(pair_matrix(2, 1, 4), std::invalid_argument);
}

TEST_CASE("conic dimensions of the four-spacecraft horizon") {
    const Fixture f = make_fixture(4, 9);
    const HorizonProblem hp = build_horizon_problem(offset_state(f, 3.0), f.model, f.params, f.cfg);
    const ConicProblem p = to_conic(hp);
    CHECK(p.num_variables() == 9 * (6 + 6 + 10));
    CHECK(p.cones.zero == 9 * (6 + 6));
    CHECK(p.cones.nonneg == 2 * 9 * 6);
    CHECK(p.cones.psd == std::vector<int>(9, 4));
    CHECK(p.num_constraints() == p.cones.total());
    CHECK_NOTHROW(p.validate());
    CHECK(conic_rhs(hp) == p.b);
}

TEST_CASE("lifted feasible points are feasible conic points") {
    std::mt19937 rng(29);
    for (bool bounds : {false, true}) {
        for (int ns : {2, 3, 4}) {
            const Fixture f = make_fixture(ns, 4, bounds);
            const HorizonProblem hp = build_horizon_problem(offset_state(f, 0.5), f.model, f.params, f.cfg);
            const ConicProblem p = to_conic(hp);
            std::vector<VectorXd> q = random_charges(rng, ns, 4);
            for (VectorXd& v : q) v *= 0.3;  // products stay inside +/- 0.01
            const HorizonTrajectory traj = lift_charges(hp, q);
            const VectorXd z = pack(hp, traj);
            const VectorXd s = p.b - p.A * z;
            CHECK((project_cone(s, p.cones) - s).lpNorm<Eigen::Infinity>() <= 1e-9);
        }
    }
}

TEST_CASE("conic objective equals the trajectory cost") {
    std::mt19937 rng(31);
    for (int ns : {2, 3, 4}) {
        const Fixture f = make_fixture(ns, 5);
        const HorizonProblem hp = build_horizon_problem(offset_state(f, 2.0), f.model, f.params, f.cfg);
        const ConicProblem p = to_conic(hp);
        for (int t = 0; t < 10; ++t) {
            HorizonTrajectory traj = lift_charges(hp, random_charges(rng, ns, 5));
            // the objective must also agree off the rank-one set
            traj.lifted[0] += 0.01 * MatrixXd::Identity(ns, ns);
            const double direct = evaluate_cost(hp, traj);
            CHECK(p.objective(pack(hp, traj)) == Catch::Approx(direct).epsilon(1e-10));
        }
    }
}

TEST_CASE("pack and unpack are inverse") {
    std::mt19937 rng(37);
    const Fixture f = make_fixture(3, 3);
    const HorizonProblem hp = build_horizon_problem(offset_state(f, 1.0), f.model, f.params, f.cfg);
    const HorizonTrajectory traj = lift_charges(hp, random_charges(rng, 3, 3));
    const HorizonTrajectory back = unpack(hp, pack(hp, traj));
    for (int j = 0; j <= 3; ++j) CHECK((back.states[j] - traj.states[j]).norm() <= 1e-15);
    for (int j = 0; j < 3; ++j) {
        CHECK((back.inputs[j] - traj.inputs[j]).norm() <= 1e-15);
        CHECK((back.lifted[j] - traj.lifted[j]).norm() <= 1e-15);
    }
    CHECK_THROWS_AS(unpack(hp, VectorXd::Zero(3)), std::invalid_argument);
}

TEST_CASE("relaxed optimum is no worse than any lifted charge sequence") {
    std::mt19937 rng(41);
    const Fixture f = make_fixture(3, 3);
    const HorizonProblem hp = build_horizon_problem(offset_state(f, 3.0), f.model, f.params, f.cfg);
    SolverSettings s;
    s.eps_abs = 1e-8;
    s.eps_rel = 1e-8;
    s.max_iters = 100000;
    const SolveResult r = solve(to_conic(hp), s);
    REQUIRE(r.status == SolveStatus::Optimal);
    for (int t = 0; t < 50; ++t) {
        const HorizonTrajectory traj = lift_charges(hp, random_charges(rng, 3, 3));
        CHECK(r.objective <= evaluate_cost(hp, traj) + 1e-6);
    }
    const HorizonTrajectory opt = unpack(hp, r.z);
    for (const MatrixXd& Q : opt.lifted)
        CHECK(Eigen::SelfAdjointEigenSolver<MatrixXd>(Q).eigenvalues().minCoeff() >= -1e-7);
}

TEST_CASE("horizon problem input checks") {
    Fixture f = make_fixture(3, 2);
    CHECK_THROWS_AS(build_horizon_problem(RelativeState(VectorXd::Zero(3), VectorXd::Zero(3)), f.model, f.params, f.cfg),
                    std::invalid_argument);
    MpcParams bad = f.params;
    bad.Q(0, 0) = -1.0;
    CHECK_THROWS_AS(build_horizon_problem(offset_state(f, 0.0), f.model, bad, f.cfg), std::invalid_argument);
    bad = f.params;
    bad.horizon = 0;
    CHECK_THROWS_AS(build_horizon_problem(offset_state(f, 0.0), f.model, bad, f.cfg), std::invalid_argument);
    bad = f.params;
    bad.trace_penalty = -1.0;
    CHECK_THROWS_AS(build_horizon_problem(offset_state(f, 0.0), f.model, bad, f.cfg), std::invalid_argument);
    FormationConfig unbounded = f.cfg;
    unbounded.state_max(0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(build_horizon_problem(offset_state(f, 0.0), f.model, f.params, unbounded), std::invalid_argument);
}
