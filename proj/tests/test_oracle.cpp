#include <doctest.h>

#include <cmath>

#include "mssp/checks.hpp"
#include "mssp/extform.hpp"
#include "mssp/oracle.hpp"
#include "mssp/sddp.hpp"

using namespace mssp;

namespace {

OracleRecord rec(std::vector<double> x, double lo, double hi, std::vector<double> lambda) {
    return {std::move(x), lo, hi, std::move(lambda)};
}

/// Brute-force upper oracle: minimize over a fine grid of convex weights.
double brute_force_upper_2pt(const OracleRecord& a, const OracleRecord& b, const std::vector<double>& x) {
    double best = kInf;
    for (int i = 0; i <= 1000; ++i) {
        double mu = static_cast<double>(i) / 1000.0;
        bool ok = true;
        for (size_t j = 0; j < x.size(); ++j) {
            if (mu * a.x[j] + (1.0 - mu) * b.x[j] > x[j] + 1e-12) ok = false;
        }
        if (ok) best = std::min(best, mu * a.theta_ub + (1.0 - mu) * b.theta_ub);
    }
    return best;
}

}  // namespace

TEST_SUITE("oracle") {

TEST_CASE("empty store refuses queries") {
    OracleStore store({1}, 1.0);
    std::vector<double> x{1.0};
    SimplexSolver solver;
    CHECK_THROWS_AS(store.lower(x), ValidationError);
    CHECK_THROWS_AS(store.upper(x, solver), ValidationError);
}

TEST_CASE("single-record lower cut evaluation") {
    OracleStore store({1}, 1.0);
    store.add(rec({1.0}, 3.0, 3.5, {-1.0}));
    std::vector<double> q{2.0};
    OracleBound lo = store.lower(q);
    CHECK(lo.theta == doctest::Approx(2.0));
    CHECK(lo.lambda == std::vector<double>{-1.0});
}

TEST_CASE("query at a stored point recovers at least its own bound") {
    OracleStore store({1, 1}, 1.0);
    store.add(rec({1.0, 2.0}, 5.0, 5.5, {-0.5, -0.25}));
    std::vector<double> q{1.0, 2.0};
    CHECK(store.lower(q).theta >= 5.0 - 1e-12);
}

TEST_CASE("two records: lower oracle is the cut maximum") {
    OracleStore store({1}, 1.0);
    store.add(rec({0.0}, 1.0, 1.5, {-2.0}));
    store.add(rec({2.0}, 0.0, 0.5, {-0.1}));
    std::vector<double> q{1.0};
    // cut 1: 1 - 2*1 = -1; cut 2: 0 - 0.1*(-1) = 0.1
    CHECK(store.lower(q).theta == doctest::Approx(0.1));
    CHECK(store.lower(q).lambda == std::vector<double>{-0.1});
}

TEST_CASE("upper oracle: single dominating record") {
    OracleStore store({1, 1}, 1.0);
    store.add(rec({1.0, 1.0}, 9.5, 10.0, {0.0, 0.0}));
    SimplexSolver solver;
    std::vector<double> hi{2.0, 2.0}, lo{0.0, 0.0};
    CHECK(store.upper(hi, solver) == doctest::Approx(10.0));
    CHECK(store.upper(lo, solver) == kInf);
}

TEST_CASE("upper oracle takes convex combinations, verified by brute force") {
    OracleStore store({1, 1}, 1.0);
    OracleRecord a = rec({0.0, 0.0}, 7.5, 8.0, {0.0, 0.0});
    OracleRecord b = rec({2.0, 2.0}, 3.5, 4.0, {0.0, 0.0});
    store.add(a);
    store.add(b);
    SimplexSolver solver;
    std::vector<double> q{1.0, 1.0};
    double brute = brute_force_upper_2pt(a, b, q);
    CHECK(brute == doctest::Approx(6.0));  // mu = 1/2 mixes to exactly (1,1)
    CHECK(store.upper(q, solver) == doctest::Approx(brute));
}

TEST_CASE("direction signs flip the domination sense") {
    // second component is demand-like: stored demand must sit at or above
    // the query for the record to dominate
    OracleStore store({1, -1}, 1.0);
    store.add(rec({1.0, 1.5}, 9.0, 9.5, {0.0, 0.0}));
    SimplexSolver solver;
    std::vector<double> ok{1.5, 1.2};   // more capacity, less demand: dominated
    std::vector<double> bad{1.5, 1.8};  // more demand than any record: not dominated
    CHECK(store.upper(ok, solver) == doctest::Approx(9.5));
    CHECK(store.upper(bad, solver) == kInf);
}

TEST_CASE("records violating the solve tolerance are rejected") {
    OracleStore store({1}, 1e-3);
    CHECK_THROWS_AS(store.add(rec({1.0}, 0.0, 1.0, {0.0})), ValidationError);
}

TEST_CASE("monotone tightening: adding records never loosens the oracles") {
    Rng rng(5150);
    std::uniform_real_distribution<double> ux(0.0, 2.0);
    OracleStore store({1, 1}, kInf);
    SimplexSolver solver;
    std::vector<std::vector<double>> queries;
    for (int q = 0; q < 10; ++q) queries.push_back({ux(rng), ux(rng)});
    std::vector<double> lo_prev(queries.size(), -kInf), hi_prev(queries.size(), kInf);
    for (int round = 0; round < 15; ++round) {
        std::vector<double> x{ux(rng), ux(rng)};
        double v = 5.0 - x[0] - 0.5 * x[1];  // a decreasing convex (linear) truth
        store.add(rec(x, v - 0.01, v + 0.01, {-1.0, -0.5}));
        for (size_t q = 0; q < queries.size(); ++q) {
            double lo = store.lower(queries[q]).theta;
            double hi = store.upper(queries[q], solver);
            CHECK(lo >= lo_prev[q] - 1e-9);
            CHECK(hi <= hi_prev[q] + 1e-9);
            lo_prev[q] = lo;
            hi_prev[q] = hi;
        }
    }
}

TEST_CASE("oracle bounds bracket the true value on tiny instances") {
    for (unsigned long long seed = 130; seed < 134; ++seed) {
        RandomInstanceConfig cfg;
        cfg.seed = seed;
        cfg.stages = 2;
        cfg.states = 2;
        cfg.scenarios = 2;
        Instance inst = random_instance(cfg);

        SddpOptions opts;
        opts.delta = 1e-5;
        OracleStore store(inst.master.monotone_direction, opts.delta);

        // seed at the dominating corner plus two interior exact solves
        Rng rng(seed + 999);
        std::vector<std::vector<double>> points{inst.master.lower, random_master_point(inst, rng),
                                                random_master_point(inst, rng)};
        for (const auto& x : points) {
            std::vector<double> xi = node_subvector(inst, 0, x);
            SddpResult r = run_sddp(inst, 0, xi, opts);
            store.add({xi, r.theta_lb, r.theta_ub, r.lambda});
        }

        SimplexSolver solver;
        for (int q = 0; q < 50; ++q) {
            std::vector<double> xq = random_master_point(inst, rng);
            std::vector<double> xqi = node_subvector(inst, 0, xq);
            double g = extform_value(inst, 0, xqi);
            double tol = 1e-7 * (1.0 + std::abs(g));
            CHECK(store.lower(xqi).theta <= g + tol);
            double hi = store.upper(xqi, solver);
            if (std::isfinite(hi)) CHECK(g <= hi + tol);
        }
    }
}

TEST_CASE("json round-trip") {
    OracleStore store({1, -1}, 0.5);
    store.add(rec({1.0, 2.0}, 3.0, 3.25, {-1.0, 0.5}));
    OracleStore back = OracleStore::from_json(store.to_json());
    CHECK(back.size() == 1);
    CHECK(back.direction() == store.direction());
    std::vector<double> q{1.5, 1.5};
    CHECK(back.lower(q).theta == doctest::Approx(store.lower(q).theta));
}

}  // TEST_SUITE
