#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "mssp/benders.hpp"
#include "mssp/checks.hpp"
#include "mssp/extform.hpp"

using namespace mssp;

namespace {

Instance tiny_mp(unsigned long long seed) {
    RandomInstanceConfig cfg;
    cfg.seed = seed;
    Rng rng(seed * 31 + 7);
    cfg.stages = 2 + static_cast<int>(seed % 2);
    cfg.states = 1 + static_cast<int>((seed / 2) % 2);
    cfg.scenarios = 1 + static_cast<int>((seed / 4) % 2);
    cfg.master_vars = 2;
    cfg.nodes = 2;
    return random_instance(cfg);
}

double prob_sum(const Instance& inst) {
    double s = 0.0;
    for (const auto& n : inst.master.nodes) s += n.probability;
    return s;
}

}  // namespace

TEST_SUITE("benders") {

TEST_CASE("epsilon below the convergence precondition is rejected") {
    Instance inst = tiny_mp(1);
    BendersOptions opts;
    opts.delta = 1e-3;
    opts.epsilon = 1.9 * opts.delta * prob_sum(inst);
    CHECK_THROWS_WITH_AS(run_benders(inst, opts), doctest::Contains("epsilon"), ValidationError);
}

TEST_CASE("relaxed master: one node, one constant cut") {
    // f = c x with c > 0 and x in [0, 1]: x = 0, lower = pi * 5
    Instance inst = tiny_mp(2);
    inst.master.cost = {1.0, 1.0};
    inst.master.lower = {0.0, 0.0};
    inst.master.upper = {1.0, 1.0};
    inst.master.constraints = {};
    inst.master.nodes.resize(1);
    inst.master.nodes[0].probability = 0.7;

    BendersState state;
    state.instance = &inst;
    state.cut_pool.assign(1, {});
    state.cut_pool[0].push_back({5.0, {0.0, 0.0}, {0.0, 0.0}});
    SimplexSolver solver;
    RmpSolution rmp = solve_rmp(state, solver);
    CHECK(rmp.x[0] == doctest::Approx(0.0));
    CHECK(rmp.x[1] == doctest::Approx(0.0));
    CHECK(rmp.lower == doctest::Approx(0.7 * 5.0));
    CHECK(rmp.beta[0] == doctest::Approx(5.0));
}

TEST_CASE("relaxed master without any cut is reported as missing its seed") {
    Instance inst = tiny_mp(3);
    BendersState state;
    state.instance = &inst;
    state.cut_pool.assign(inst.master.nodes.size(), {});
    SimplexSolver solver;
    CHECK_THROWS_WITH_AS(solve_rmp(state, solver), doctest::Contains("seed cut"), ValidationError);
}

TEST_CASE("adding cuts never lowers the relaxed master optimum") {
    Instance inst = tiny_mp(4);
    BendersState state;
    state.instance = &inst;
    state.cut_pool.assign(inst.master.nodes.size(), {});
    for (auto& pool : state.cut_pool) pool.push_back({-10.0, {0.0, 0.0}, {0.0, 0.0}});
    SimplexSolver solver;
    double first = solve_rmp(state, solver).lower;
    for (auto& pool : state.cut_pool) pool.push_back({-8.0, {-0.2, -0.1}, {0.5, 0.5}});
    double second = solve_rmp(state, solver).lower;
    CHECK(second >= first - 1e-9);
}

TEST_CASE("full driver converges and brackets the extensive-form optimum") {
    for (unsigned long long seed = 11; seed < 15; ++seed) {
        Instance inst = tiny_mp(seed);
        ExtformFullResult truth = extform_full(inst);
        double scale = 1.0 + std::abs(truth.objective);
        BendersOptions opts;
        opts.epsilon = 1e-3 * scale;
        opts.delta = opts.epsilon / (4.0 * prob_sum(inst));
        BendersResult res = run_benders(inst, opts);
        CHECK(res.upper - res.lower <= opts.epsilon + 1e-9);
        CHECK(res.lower <= truth.objective + 1e-7 * scale);
        CHECK(truth.objective <= res.upper + 1e-7 * scale);

        double prev_lower = -kInf, prev_upper = kInf;
        for (const auto& row : res.trace) {
            CHECK(row.lower >= prev_lower - 1e-9);
            CHECK(row.upper <= prev_upper + 1e-9);
            prev_lower = row.lower;
            prev_upper = row.upper;
        }
    }
}

TEST_CASE("a linear subproblem closes in very few master iterations") {
    // one node, recourse value linear in x: a single exact cut is tight
    Instance inst = tiny_mp(6);
    inst.master.nodes.resize(1);
    inst.master.nodes[0].probability = 1.0;
    // strip the recourse to one stage variable with a fixed unit row so the
    // value is exactly -sum_j x_j * mean(b): linear in x
    for (auto& [ref, tpl] : inst.recourse) {
        (void)ref;
        for (auto& sd : tpl.stages) {
            sd.cost.assign(1, -1.0);
            sd.y_lower.assign(1, 0.0);
            sd.y_upper.assign(1, 1000.0);
            sd.A = {};
            sd.A.rows = 1;
            sd.A.cols = 1;
            sd.A.add(0, 0, 1.0);
            sd.C = {};
            sd.C.rows = 1;
            sd.C.cols = sd.C.cols;
            sd.B.clear();
            sd.B.push_back({0, 0, 0, 1.0});
        }
        tpl.stages[1].C.cols = 1;
        double worst = 1000.0 * static_cast<double>(tpl.stage_count);
        for (auto& row : tpl.stage_value_lb) row.assign(row.size(), -worst);
    }
    Instance fixed = validate_instance(inst);
    ExtformFullResult truth = extform_full(fixed);
    BendersOptions opts;
    opts.epsilon = 1e-4 * (1.0 + std::abs(truth.objective));
    opts.delta = opts.epsilon / (4.0 * prob_sum(fixed));
    BendersResult res = run_benders(fixed, opts);
    CHECK(res.iterations <= 3);
    CHECK(res.lower <= truth.objective + 1e-7);
    CHECK(truth.objective <= res.upper + 1e-7);
}

TEST_CASE("iteration cap raises a diagnostic") {
    Instance inst = tiny_mp(7);
    BendersOptions opts;
    opts.epsilon = 1e-9 + 2.0 * 1e-10 * prob_sum(inst);
    opts.delta = 1e-10;
    opts.iteration_cap = 0;
    CHECK_THROWS_AS(run_benders(inst, opts), CapExceededError);
}

TEST_CASE("every improving pass adds exactly one oracle record") {
    Instance inst = tiny_mp(8);
    ExtformFullResult truth = extform_full(inst);
    BendersOptions opts;
    opts.epsilon = 1e-3 * (1.0 + std::abs(truth.objective));
    opts.delta = opts.epsilon / (4.0 * prob_sum(inst));
    BendersResult res = run_benders(inst, opts);
    // per-iteration exact solves are counted in the trace; a pass either
    // improves (one record, loop ends) or moves to the next worst node
    int solves_in_trace = 0;
    for (const auto& row : res.trace) solves_in_trace += row.exact_solves;
    CHECK(solves_in_trace + 1 == res.total_exact_solves);  // +1 for the seed
}

TEST_CASE("trace csv format") {
    Instance inst = tiny_mp(9);
    ExtformFullResult truth = extform_full(inst);
    BendersOptions opts;
    opts.epsilon = 5e-3 * (1.0 + std::abs(truth.objective));
    opts.delta = opts.epsilon / (4.0 * prob_sum(inst));
    BendersResult res = run_benders(inst, opts);
    const char* path = "benders_trace_test.csv";
    write_benders_trace(path, res.trace, {"tolerances"});
    std::ifstream f(path);
    std::string line;
    std::getline(f, line);
    CHECK(line == "# tolerances");
    std::getline(f, line);
    CHECK(line == "w,lower,upper,chosen_node,exact_solves,wall_ms");
    f.close();
    std::remove(path);
}

}  // TEST_SUITE
