#include <doctest.h>

#include <cmath>

#include "mssp/checks.hpp"
#include "mssp/stage.hpp"

using namespace mssp;

namespace {

/// 2-stage, 1-state, 1-scenario template with one variable per stage:
///   stage d:  y >= x * b_d   (row -y <= -x*b_d), cost 1
Instance tiny_instance(double b1 = 0.5, double b2 = 3.0) {
    Instance inst;
    inst.master.cost = {1.0};
    inst.master.lower = {0.0};
    inst.master.upper = {2.0};
    NodeSpec node;
    node.probability = 1.0;
    node.x_indices = {0};
    node.recourse_ref = "main";
    inst.master.nodes.push_back(node);

    RecourseTemplate tpl;
    tpl.stage_count = 2;
    tpl.M_y = 10.0;
    tpl.M_b = 10.0;
    tpl.stage_value_lb = {{0.0}, {0.0}};
    for (int d = 0; d < 2; ++d) {
        StageData sd;
        sd.cost = {1.0};
        sd.y_lower = {0.0};
        sd.y_upper = {50.0};
        sd.A.rows = 1;
        sd.A.cols = 1;
        sd.A.add(0, 0, -1.0);
        sd.B.push_back({0, 0, 0, -1.0});
        if (d == 1) {
            sd.C.rows = 1;
            sd.C.cols = 1;
        }
        tpl.stages.push_back(sd);
    }
    FoldedTree& tree = tpl.tree;
    tree.state_count = 1;
    tree.scenario_count = 1;
    tree.initial_probs = {1.0};
    tree.transition = {{{1.0}}};
    tree.realizations = {{{{{b1}}}}, {{{{b2}}}}};
    inst.recourse.emplace("main", tpl);
    return validate_instance(std::move(inst));
}

StageInput make_input(const Instance& inst, const EnvelopeSet& env, int d, int l, int m,
                      std::span<const double> x, std::span<const double> y_prev) {
    StageInput in;
    in.tpl = &inst.recourse.at("main");
    in.env = &env;
    in.d = d;
    in.l = l;
    in.m = m;
    in.x = x;
    in.y_prev = y_prev;
    return in;
}

}  // namespace

TEST_SUITE("stage") {

TEST_CASE("terminal stage is a plain LP with bundle sensitivity") {
    // y >= x*b with x = 1, b = 3, cost 1: theta = 3, nu = +1
    Instance inst = tiny_instance(0.5, 3.0);
    EnvelopeSet env(EnvelopeMode::enhanced, 2, 1);
    SimplexSolver solver;
    std::vector<double> x{1.0}, y_prev{0.0};
    StageResult res = solve_lower_stage(make_input(inst, env, 2, 0, 0, x, y_prev), solver);
    CHECK(res.theta == doctest::Approx(3.0));
    REQUIRE(res.nu.size() == 1);
    CHECK(res.nu[0] == doctest::Approx(1.0));
    REQUIRE(res.lambda.size() == 1);
    CHECK(res.lambda[0] == doctest::Approx(3.0));  // d theta / d x = b
}

TEST_CASE("non-terminal stage with empty stores is the myopic cost") {
    Instance inst = tiny_instance(0.5, 3.0);
    EnvelopeSet env(EnvelopeMode::enhanced, 2, 1);
    SimplexSolver solver;
    std::vector<double> x{1.0};
    StageResult res = solve_lower_stage(make_input(inst, env, 1, -1, 0, x, {}), solver);
    CHECK(res.theta == doctest::Approx(0.5));  // y1 = x*b1, cost-to-go floor 0
    CHECK(res.cost_to_go[0][0] == doctest::Approx(0.0));
}

TEST_CASE("terminal upper solve coincides with the lower solve") {
    Instance inst = tiny_instance();
    EnvelopeSet env(EnvelopeMode::enhanced, 2, 1);
    SimplexSolver solver;
    std::vector<double> x{1.3}, y_prev{0.2};
    StageResult lo = solve_lower_stage(make_input(inst, env, 2, 0, 0, x, y_prev), solver);
    StageResult hi = solve_upper_stage(make_input(inst, env, 2, 0, 0, x, y_prev), solver);
    CHECK(hi.theta == doctest::Approx(lo.theta).epsilon(1e-10));
}

TEST_CASE("upper solve returns infinity on an empty successor store") {
    Instance inst = tiny_instance();
    EnvelopeSet env(EnvelopeMode::enhanced, 2, 1);
    SimplexSolver solver;
    std::vector<double> x{1.0};
    StageResult hi = solve_upper_stage(make_input(inst, env, 1, -1, 0, x, {}), solver);
    CHECK(hi.theta == kInf);
}

TEST_CASE("single stored point: upper stage matches manual Lipschitz composition") {
    Instance inst = tiny_instance(0.5, 3.0);
    EnvelopeSet env(EnvelopeMode::enhanced, 2, 1);
    const RecourseTemplate& tpl = inst.recourse.at("main");
    UpperPoint pt;
    pt.theta = 4.0;
    pt.anchor_y = {1.0};
    pt.anchor_b = realization_bundle(tpl, 2, 0, 0);
    env.add_upper_point({2, -1, 0}, pt);

    SimplexSolver solver;
    std::vector<double> x{1.0};
    StageInput in = make_input(inst, env, 1, -1, 0, x, {});
    StageResult hi = solve_upper_stage(in, solver);
    // y1 is free to move: cost(y1) = y1 + theta-point + M_y|y1 - 1|; y1 >= 0.5
    // minimized at y1 = 1 -> 1 + 4 = 5
    CHECK(hi.theta == doctest::Approx(5.0));

    StageResult lo = solve_lower_stage(in, solver);
    auto fixed = solve_upper_stage_fixed(in, lo.y, solver);
    // trial y1 = 0.5: 4 + 10*|0.5-1| = 9
    CHECK(fixed[0][0] == doctest::Approx(9.0));
}

TEST_CASE("fixing y at the unconstrained upper optimum reproduces its cost-to-go") {
    RandomInstanceConfig cfg;
    cfg.stages = 3;
    cfg.states = 2;
    cfg.scenarios = 2;
    cfg.seed = 404;
    Instance inst = random_instance(cfg);
    const RecourseTemplate& tpl = inst.recourse.at("main");
    EnvelopeSet env(EnvelopeMode::enhanced, tpl.stage_count, tpl.tree.state_count);

    Rng rng(7);
    std::uniform_real_distribution<double> ut(0.0, 2.0);
    const int ny = tpl.stages[1].y_dim();
    for (int n = 0; n < tpl.tree.state_count; ++n) {
        for (int s = 0; s < 3; ++s) {
            UpperPoint pt;
            pt.theta = ut(rng) - 5.0;
            pt.anchor_y.assign(static_cast<size_t>(ny), 0.0);
            for (int k = 0; k < ny; ++k) pt.anchor_y[static_cast<size_t>(k)] = ut(rng);
            pt.anchor_b = realization_bundle(tpl, 3, 1, n);
            for (double& v : pt.anchor_b) v += 0.01 * s;
            env.add_upper_point({3, -1, n}, pt);
        }
    }

    SimplexSolver solver;
    std::vector<double> x = inst.master.upper;
    std::vector<double> y_prev(static_cast<size_t>(tpl.stages[0].y_dim()), 0.1);
    StageInput in = make_input(inst, env, 2, 0, 1, x, y_prev);
    StageResult hi = solve_upper_stage(in, solver);
    REQUIRE(std::isfinite(hi.theta));
    auto fixed = solve_upper_stage_fixed(in, hi.y, solver);
    for (int w = 0; w < tpl.tree.scenario_count; ++w) {
        for (int n = 0; n < tpl.tree.state_count; ++n) {
            if (tpl.tree.transition_prob(3, 1, n) <= 0.0) continue;
            CHECK(fixed[static_cast<size_t>(w)][static_cast<size_t>(n)] ==
                  doctest::Approx(hi.cost_to_go[static_cast<size_t>(w)][static_cast<size_t>(n)]).epsilon(1e-7));
        }
    }
}

TEST_CASE("paired solves: trial-point gaps bound the stage gap") {
    // the upper objective minus the lower objective never exceeds the worst
    // positive-probability cost-to-go gap at the lower trial point
    for (unsigned long long seed = 1; seed <= 6; ++seed) {
        RandomInstanceConfig cfg;
        cfg.stages = 2;
        cfg.states = 2;
        cfg.scenarios = 2;
        cfg.seed = 900 + seed;
        Instance inst = random_instance(cfg);
        const RecourseTemplate& tpl = inst.recourse.at("main");
        EnvelopeSet env(EnvelopeMode::enhanced, tpl.stage_count, tpl.tree.state_count);
        SimplexSolver solver;
        Rng rng(seed);
        std::vector<double> x = random_master_point(inst, rng);
        std::vector<double> xi = node_subvector(inst, 0, x);

        // populate stores with genuine terminal-stage solves at a few anchors
        const int ny = tpl.stages[0].y_dim();
        std::uniform_real_distribution<double> uy(0.0, 2.0);
        for (int s = 0; s < 3; ++s) {
            std::vector<double> anchor(static_cast<size_t>(ny));
            for (int k = 0; k < ny; ++k) anchor[static_cast<size_t>(k)] = uy(rng);
            for (int m = 0; m < tpl.tree.state_count; ++m) {
                StageInput tin = make_input(inst, env, 2, 0, m, xi, anchor);
                StageResult t = solve_lower_stage(tin, solver);
                LowerCut cut;
                cut.theta = t.theta;
                cut.lambda = t.lambda;
                cut.sigma = t.sigma;
                cut.nu = t.nu;
                cut.anchor_x = xi;
                cut.anchor_y = anchor;
                cut.anchor_b = realization_bundle(tpl, 2, 0, m);
                env.add_lower_cut({2, -1, m}, cut, tpl.M_y, tpl.M_b);
                UpperPoint pt;
                pt.theta = t.theta;
                pt.anchor_y = anchor;
                pt.anchor_b = realization_bundle(tpl, 2, 0, m);
                env.add_upper_point({2, -1, m}, pt);
            }
        }

        StageInput in = make_input(inst, env, 1, -1, 0, xi, {});
        StageResult lo = solve_lower_stage(in, solver);
        StageResult hi = solve_upper_stage(in, solver);
        auto fixed = solve_upper_stage_fixed(in, lo.y, solver);
        double worst = -kInf;
        for (int w = 0; w < tpl.tree.scenario_count; ++w) {
            for (int n = 0; n < tpl.tree.state_count; ++n) {
                if (tpl.tree.transition_prob(2, 0, n) <= 0.0) continue;
                double gap = fixed[static_cast<size_t>(w)][static_cast<size_t>(n)] -
                             lo.cost_to_go[static_cast<size_t>(w)][static_cast<size_t>(n)];
                worst = std::max(worst, gap);
                CHECK(gap >= -1e-7);  // fixed-trial values sandwich the lower ones
            }
        }
        CHECK(hi.theta - lo.theta <= worst + 1e-7);
    }
}

TEST_CASE("subgradients underestimate under joint perturbations") {
    for (unsigned long long seed = 21; seed <= 26; ++seed) {
        RandomInstanceConfig cfg;
        cfg.stages = 2;
        cfg.states = 1;
        cfg.scenarios = 2;
        cfg.seed = seed;
        Instance inst = random_instance(cfg);
        const RecourseTemplate& tpl = inst.recourse.at("main");
        EnvelopeSet env(EnvelopeMode::enhanced, tpl.stage_count, tpl.tree.state_count);
        SimplexSolver solver;
        Rng rng(seed * 3 + 1);
        std::vector<double> x = random_master_point(inst, rng);
        std::vector<double> xi = node_subvector(inst, 0, x);
        std::vector<double> y_prev(static_cast<size_t>(tpl.stages[0].y_dim()), 0.3);

        StageResult base = solve_lower_stage(make_input(inst, env, 2, 0, 0, xi, y_prev), solver);

        std::uniform_real_distribution<double> bump(-0.05, 0.05);
        for (int t = 0; t < 10; ++t) {
            Instance pert = inst;
            auto& tree = pert.recourse.at("main").tree;
            double predicted = base.theta;
            std::vector<double> x2 = xi, y2 = y_prev;
            std::vector<double> dx(xi.size(), 0.0);
            int mode = t % 3;  // x alone, (y, b) jointly, everything
            if (mode != 1) {
                for (size_t j = 0; j < xi.size(); ++j) {
                    dx[j] = bump(rng);
                    x2[j] += dx[j];
                    predicted += base.lambda[j] * dx[j];
                }
            }
            int nb = pert.recourse.at("main").b_dim[1];
            int W = tree.scenario_count;
            std::vector<double> db(static_cast<size_t>(W * nb), 0.0);
            if (mode != 0) {
                for (size_t q = 0; q < y_prev.size(); ++q) {
                    double dy = bump(rng);
                    y2[q] += dy;
                    predicted += base.sigma[q] * dy;
                }
                for (int w = 0; w < W; ++w) {
                    for (int k = 0; k < nb; ++k) {
                        double d = bump(rng);
                        db[static_cast<size_t>(w * nb + k)] = d;
                        tree.realizations[1][0][0][static_cast<size_t>(w)][static_cast<size_t>(k)] += d;
                        predicted += base.nu[static_cast<size_t>(w * nb + k)] * d;
                    }
                }
            }
            // the stage rhs is bilinear in (x, b): the exact first-order
            // bound carries the dual-weighted cross term
            for (const auto& e : base.cross)
                predicted += e.value * dx[static_cast<size_t>(e.row)] * db[static_cast<size_t>(e.col)];
            EnvelopeSet env2(EnvelopeMode::enhanced, 2, 1);
            StageResult moved = solve_lower_stage(make_input(pert, env2, 2, 0, 0, x2, y2), solver);
            CHECK(moved.theta >= predicted - 1e-7);
        }
    }
}

TEST_CASE("basic and enhanced modes agree on equivalent cut data") {
    RandomInstanceConfig cfg;
    cfg.stages = 2;
    cfg.states = 2;
    cfg.scenarios = 2;
    cfg.seed = 777;
    Instance inst = random_instance(cfg);
    const RecourseTemplate& tpl = inst.recourse.at("main");
    Rng rng(5);
    std::vector<double> x = random_master_point(inst, rng);
    std::vector<double> xi = node_subvector(inst, 0, x);

    EnvelopeSet basic(EnvelopeMode::basic, 2, 2);
    EnvelopeSet enhanced(EnvelopeMode::enhanced, 2, 2);
    const int ny = tpl.stages[0].y_dim();
    std::uniform_real_distribution<double> uy(0.0, 1.0);
    for (int n = 0; n < 2; ++n) {
        for (int s = 0; s < 2; ++s) {
            LowerCut c;
            c.theta = uy(rng) - 3.0;
            c.sigma.assign(static_cast<size_t>(ny), 0.0);
            for (int k = 0; k < ny; ++k) c.sigma[static_cast<size_t>(k)] = 0.3 * uy(rng);
            c.anchor_y.assign(static_cast<size_t>(ny), uy(rng));
            basic.add_lower_cut({2, 0, n}, c, tpl.M_y, tpl.M_b);
            // same slopes, zero x/b dependence
            c.lambda.assign(xi.size(), 0.0);
            c.nu.assign(static_cast<size_t>(tpl.b_dim[1] * tpl.tree.scenario_count), 0.0);
            c.anchor_x = xi;
            c.anchor_b = realization_bundle(tpl, 2, 0, n);
            enhanced.add_lower_cut({2, -1, n}, c, tpl.M_y, tpl.M_b);
        }
    }
    SimplexSolver solver;
    StageResult a = solve_lower_stage(make_input(inst, basic, 1, -1, 0, xi, {}), solver);
    StageResult b = solve_lower_stage(make_input(inst, enhanced, 1, -1, 0, xi, {}), solver);
    CHECK(a.theta == doctest::Approx(b.theta).epsilon(1e-9));
}

TEST_CASE("infeasible recourse names the offending stage") {
    Instance inst = tiny_instance();
    // cap y below the required level: y >= x*b2 = 3 but y <= 1
    inst.recourse.at("main").stages[1].y_upper[0] = 1.0;
    EnvelopeSet env(EnvelopeMode::enhanced, 2, 1);
    SimplexSolver solver;
    std::vector<double> x{2.0}, y_prev{0.0};
    CHECK_THROWS_WITH_AS(solve_lower_stage(make_input(inst, env, 2, 0, 0, x, y_prev), solver),
                         doctest::Contains("stage 2"), RecourseInfeasibleError);
}

}  // TEST_SUITE
