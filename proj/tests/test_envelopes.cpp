#include <doctest.h>

#include <cmath>

#include "mssp/envelopes.hpp"

using namespace mssp;

namespace {

LowerCut cut1d(double theta, double sigma, double y0) {
    LowerCut c;
    c.theta = theta;
    c.sigma = {sigma};
    c.anchor_y = {y0};
    return c;
}

UpperPoint pt1d(double theta, double y0) {
    UpperPoint p;
    p.theta = theta;
    p.anchor_y = {y0};
    return p;
}

double lo(const EnvelopeSet& env, double y, double floor = -1e18) {
    std::vector<double> yy{y};
    return env.eval_lower({2, -1, 0}, {}, yy, {}, floor);
}

double up(const EnvelopeSet& env, double y, double M_y, SimplexSolver& s) {
    std::vector<double> yy{y};
    return env.eval_upper({2, -1, 0}, yy, {}, M_y, 1.0, s);
}

}  // namespace

TEST_SUITE("envelopes") {

TEST_CASE("constant cut dominates everywhere") {
    EnvelopeSet env(EnvelopeMode::enhanced, 2, 1);
    env.add_lower_cut({2, -1, 0}, cut1d(5.0, 0.0, 0.0), 10.0, 10.0);
    CHECK(lo(env, -3.0) == doctest::Approx(5.0));
    CHECK(lo(env, 7.0) == doctest::Approx(5.0));
}

TEST_CASE("two-cut maximum at the midpoint") {
    EnvelopeSet env(EnvelopeMode::enhanced, 2, 1);
    env.add_lower_cut({2, -1, 0}, cut1d(0.0, 1.0, 0.0), 10.0, 10.0);
    env.add_lower_cut({2, -1, 0}, cut1d(1.0, -1.0, 1.0), 10.0, 10.0);
    CHECK(lo(env, 0.5) == doctest::Approx(1.5));
}

TEST_CASE("empty store falls back to the stage floor") {
    EnvelopeSet env(EnvelopeMode::enhanced, 2, 1);
    CHECK(lo(env, 1.0, 0.0) == doctest::Approx(0.0));
    SimplexSolver solver;
    CHECK(up(env, 1.0, 2.0, solver) == kInf);
}

TEST_CASE("single point extrapolates at the Lipschitz rate") {
    EnvelopeSet env(EnvelopeMode::enhanced, 2, 1);
    env.add_upper_point({2, -1, 0}, pt1d(10.0, 0.0));
    SimplexSolver solver;
    CHECK(up(env, 1.0, 2.0, solver) == doctest::Approx(12.0));
    CHECK(up(env, 0.0, 2.0, solver) == doctest::Approx(10.0));  // at the anchor, <= theta
}

TEST_CASE("interior interpolation beats Lipschitz extrapolation") {
    EnvelopeSet env(EnvelopeMode::enhanced, 2, 1);
    env.add_upper_point({2, -1, 0}, pt1d(4.0, 0.0));
    env.add_upper_point({2, -1, 0}, pt1d(8.0, 2.0));
    SimplexSolver solver;
    CHECK(up(env, 1.0, 10.0, solver) == doctest::Approx(6.0));
}

TEST_CASE("lipschitz violation on insertion is an error") {
    EnvelopeSet env(EnvelopeMode::enhanced, 2, 1);
    CHECK_THROWS_WITH_AS(env.add_lower_cut({2, -1, 0}, cut1d(0.0, 2.0, 0.0), 1.0, 1.0),
                         doctest::Contains("Lipschitz-violation"), ValidationError);
}

TEST_CASE("duplicate cuts do not change the evaluation or the count") {
    EnvelopeSet env(EnvelopeMode::enhanced, 2, 1);
    env.add_lower_cut({2, -1, 0}, cut1d(1.0, 0.5, 0.0), 10.0, 10.0);
    double before = lo(env, 0.7);
    env.add_lower_cut({2, -1, 0}, cut1d(1.0, 0.5, 0.0), 10.0, 10.0);
    CHECK(env.total_cuts() == 1);
    CHECK(lo(env, 0.7) == doctest::Approx(before));
}

TEST_CASE("insert then evaluate at the anchor recovers at least theta") {
    EnvelopeSet env(EnvelopeMode::enhanced, 2, 1);
    env.add_lower_cut({2, -1, 0}, cut1d(3.0, -0.5, 2.0), 10.0, 10.0);
    CHECK(lo(env, 2.0) >= 3.0 - 1e-12);
}

TEST_CASE("monotone tightening under insertions") {
    Rng rng(314);
    std::uniform_real_distribution<double> uy(-2.0, 2.0);
    std::uniform_real_distribution<double> ut(-1.0, 3.0);
    std::uniform_real_distribution<double> us(-0.9, 0.9);
    EnvelopeSet env(EnvelopeMode::enhanced, 2, 1);
    SimplexSolver solver;
    std::vector<double> qs;
    for (int i = 0; i < 8; ++i) qs.push_back(uy(rng));
    std::vector<double> lo_prev(qs.size(), -kInf), up_prev(qs.size(), kInf);
    for (int round = 0; round < 20; ++round) {
        env.add_lower_cut({2, -1, 0}, cut1d(ut(rng), us(rng), uy(rng)), 1.0, 1.0);
        env.add_upper_point({2, -1, 0}, pt1d(ut(rng) + 3.0, uy(rng)));
        for (size_t i = 0; i < qs.size(); ++i) {
            double lv = lo(env, qs[i], -100.0);
            double uv = up(env, qs[i], 1.0, solver);
            CHECK(lv >= lo_prev[i] - 1e-9);
            CHECK(uv <= up_prev[i] + 1e-9);
            lo_prev[i] = lv;
            up_prev[i] = uv;
        }
    }
}

TEST_CASE("both envelopes are convex in the query point") {
    Rng rng(2718);
    std::uniform_real_distribution<double> uy(-2.0, 2.0);
    std::uniform_real_distribution<double> ut(0.0, 4.0);
    std::uniform_real_distribution<double> us(-0.9, 0.9);
    EnvelopeSet env(EnvelopeMode::enhanced, 2, 1);
    for (int i = 0; i < 6; ++i) {
        env.add_lower_cut({2, -1, 0}, cut1d(ut(rng), us(rng), uy(rng)), 1.0, 1.0);
        env.add_upper_point({2, -1, 0}, pt1d(ut(rng) + 2.0, uy(rng)));
    }
    SimplexSolver solver;
    for (int t = 0; t < 50; ++t) {
        double a = uy(rng), c = uy(rng);
        double mid = 0.5 * (a + c);
        CHECK(lo(env, mid, -100.0) <= 0.5 * (lo(env, a, -100.0) + lo(env, c, -100.0)) + 1e-9);
        CHECK(up(env, mid, 1.0, solver) <= 0.5 * (up(env, a, 1.0, solver) + up(env, c, 1.0, solver)) + 1e-9);
    }
}

TEST_CASE("enhanced cuts use x and b slopes") {
    EnvelopeSet env(EnvelopeMode::enhanced, 2, 1);
    LowerCut c;
    c.theta = 1.0;
    c.lambda = {2.0};
    c.sigma = {0.0};
    c.nu = {-1.0};
    c.anchor_x = {1.0};
    c.anchor_y = {0.0};
    c.anchor_b = {0.5};
    env.add_lower_cut({2, -1, 0}, c, 10.0, 10.0);
    std::vector<double> x{2.0}, y{0.0}, b{1.0};
    // 1 + 2*(2-1) + (-1)*(1-0.5) = 2.5
    CHECK(env.eval_lower({2, -1, 0}, x, y, b, -100.0) == doctest::Approx(2.5));
}

TEST_CASE("basic mode stores are keyed by predecessor") {
    EnvelopeSet env(EnvelopeMode::basic, 3, 2);
    env.add_lower_cut({2, 0, 1}, cut1d(7.0, 0.0, 0.0), 10.0, 10.0);
    std::vector<double> y{0.0};
    CHECK(env.eval_lower({2, 0, 1}, {}, y, {}, 0.0) == doctest::Approx(7.0));
    CHECK(env.eval_lower({2, 1, 1}, {}, y, {}, 0.0) == doctest::Approx(0.0));  // other predecessor untouched
}

TEST_CASE("json round-trip preserves evaluations") {
    EnvelopeSet env(EnvelopeMode::enhanced, 3, 2);
    env.add_lower_cut({2, -1, 0}, cut1d(1.5, 0.25, 0.5), 10.0, 10.0);
    env.add_upper_point({3, -1, 1}, pt1d(9.0, 0.25));
    EnvelopeSet back = EnvelopeSet::from_json(env.to_json());
    CHECK(back.total_cuts() == env.total_cuts());
    CHECK(back.total_points() == env.total_points());
    std::vector<double> y{1.0};
    CHECK(back.eval_lower({2, -1, 0}, {}, y, {}, -10.0) == doctest::Approx(env.eval_lower({2, -1, 0}, {}, y, {}, -10.0)));
}

}  // TEST_SUITE
