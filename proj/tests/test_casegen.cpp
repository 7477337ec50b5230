#include <doctest.h>

#include <cmath>

#include "mssp/casegen.hpp"
#include "mssp/extform.hpp"
#include "mssp/model_io.hpp"

using namespace mssp;

namespace {

PowerConfig desk_config(unsigned long long seed = 42) {
    PowerConfig cfg = PowerConfig::defaults();
    cfg.stage_count = 3;
    cfg.state_count = 2;
    cfg.scenario_count = 2;
    cfg.hours_per_stage = 4;
    cfg.slices = 1;
    cfg.seed = seed;
    return cfg;
}

}  // namespace

TEST_SUITE("casegen") {

TEST_CASE("default configuration matches the documented shape") {
    PowerConfig cfg = PowerConfig::defaults();
    Instance inst = generate_instance(cfg);
    CHECK(cfg.technologies.size() == 9);
    CHECK(inst.master.nodes.size() == 7 * 4);
    const RecourseTemplate& tpl = inst.recourse.at("slice0");
    CHECK(tpl.stage_count == 7);
    CHECK(tpl.tree.state_count == 5);
    CHECK(tpl.tree.scenario_count == 3);
    CHECK(inst.recourse.size() == 4);
    CHECK(inst.validated);
    std::string summary = describe_instance(cfg, inst);
    CHECK(summary.find("coal") != std::string::npos);
    CHECK(summary.find("7 stages") != std::string::npos);
}

TEST_CASE("same seed twice gives byte-identical instances") {
    PowerConfig cfg = desk_config(7);
    std::string a = instance_to_json(generate_instance(cfg));
    std::string b = instance_to_json(generate_instance(cfg));
    CHECK(a == b);
    cfg.seed = 8;
    std::string c = instance_to_json(generate_instance(cfg));
    CHECK(a != c);
}

TEST_CASE("desk-scale instance stays under the extensive-form cap") {
    PowerConfig cfg = desk_config();
    Instance inst = generate_instance(cfg);
    std::vector<double> xi = node_subvector(inst, 0, inst.master.upper);
    double value = extform_value(inst, 0, xi);
    CHECK(std::isfinite(value));
    CHECK(value >= 0.0);  // all costs nonnegative
}

TEST_CASE("coupling columns are sign-pure in the declared monotone direction") {
    PowerConfig cfg = desk_config();
    Instance inst = generate_instance(cfg);
    for (const auto& node : inst.master.nodes) {
        const auto& tpl = inst.recourse.at(node.recourse_ref);
        for (const auto& sd : tpl.stages) {
            for (const auto& e : sd.B) {
                int master_idx = node.x_indices[static_cast<size_t>(e.x_index)];
                int dir = inst.master.monotone_direction[static_cast<size_t>(master_idx)];
                if (dir > 0) CHECK(e.coeff >= 0.0);   // capacity only relaxes rows
                if (dir < 0) CHECK(e.coeff <= 0.0);   // demand only tightens rows
            }
        }
    }
}

TEST_CASE("more capacity never raises the dispatch cost") {
    PowerConfig cfg = desk_config(3);
    Instance inst = generate_instance(cfg);
    std::vector<double> lo_x = inst.master.lower;
    std::vector<double> hi_x = inst.master.upper;
    // keep demand components identical (they are fixed by bounds anyway)
    double v_lo = extform_value(inst, 0, node_subvector(inst, 0, lo_x));
    double v_hi = extform_value(inst, 0, node_subvector(inst, 0, hi_x));
    CHECK(v_hi <= v_lo + 1e-6);
}

TEST_CASE("construction lag: first-stage builds reach only later nodes") {
    PowerConfig cfg = PowerConfig::defaults();
    cfg.stage_count = 2;
    cfg.state_count = 1;
    cfg.scenario_count = 1;
    cfg.hours_per_stage = 2;
    cfg.slices = 1;
    Instance inst = generate_instance(cfg);
    const int P = static_cast<int>(cfg.technologies.size());
    // master layout per investment node: build (P), acc (P), demand (1)
    auto acc_col = [&](int node, int p) { return node * (2 * P + 1) + P + p; };
    // node 0 accumulation rows force acc = historical exactly: check bounds
    // via the paired inequalities by solving the full extensive form and
    // reading the master solution
    ExtformFullResult res = extform_full(inst);
    for (int p = 0; p < P; ++p) {
        CHECK(res.x[static_cast<size_t>(acc_col(0, p))] ==
              doctest::Approx(cfg.technologies[static_cast<size_t>(p)].historical).epsilon(1e-6));
    }
}

TEST_CASE("kmeans: degenerate cluster counts") {
    PowerConfig cfg = desk_config(11);
    Instance inst = generate_instance(cfg);
    const RecourseTemplate& tpl = inst.recourse.at("slice0");

    TrajectoryPool one = cluster_trajectories(tpl, 40, 1, 5);
    CHECK(one.centers.size() == 1);
    CHECK(one.weights[0] == doctest::Approx(1.0));

    TrajectoryPool all = cluster_trajectories(tpl, 12, 12, 5);
    CHECK(all.centers.size() == 12);
    double wsum = 0.0;
    for (double w : all.weights) {
        CHECK(w >= 0.0);
        wsum += w;
    }
    CHECK(wsum == doctest::Approx(1.0));
}

TEST_CASE("kmeans: two distinct constant trajectories become the two centers") {
    // lock the chain in one of two persistent states so the pool holds
    // exactly two distinct full-horizon trajectories
    PowerConfig cfg = desk_config(13);
    cfg.state_count = 2;
    cfg.scenario_count = 1;
    Instance inst = generate_instance(cfg);
    RecourseTemplate tpl = inst.recourse.at("slice0");
    tpl.tree.initial_probs = {0.5, 0.5};
    for (auto& td : tpl.tree.transition) td = {{1.0, 0.0}, {0.0, 1.0}};
    for (int d = 1; d <= tpl.stage_count; ++d) {
        auto& rd = tpl.tree.realizations[static_cast<size_t>(d - 1)];
        for (auto& rl : rd) {
            for (int m = 0; m < 2; ++m) {
                auto& b = rl[static_cast<size_t>(m)][0];
                for (size_t k = 1; k < b.size(); ++k) b[k] = m == 0 ? 0.25 : 0.75;
            }
        }
    }
    TrajectoryPool pool = cluster_trajectories(tpl, 64, 2, 9);
    REQUIRE(pool.centers.size() == 2);
    double a = pool.centers[0][0][1];
    double b = pool.centers[1][0][1];
    CHECK(std::min(a, b) == doctest::Approx(0.25));
    CHECK(std::max(a, b) == doctest::Approx(0.75));
    CHECK(pool.weights[0] + pool.weights[1] == doctest::Approx(1.0));
}

TEST_CASE("deterministic benchmark equals the extensive form on a deterministic tree") {
    PowerConfig cfg = desk_config(17);
    cfg.state_count = 1;
    cfg.scenario_count = 1;
    Instance inst = generate_instance(cfg);
    const RecourseTemplate& tpl = inst.recourse.at("slice0");
    TrajectoryPool pool = cluster_trajectories(tpl, 5, 1, 3);  // all samples identical
    std::vector<double> xi = node_subvector(inst, 0, inst.master.upper);
    double det = deterministic_value(inst, 0, xi, pool);
    double ext = extform_value(inst, 0, xi);
    CHECK(det == doctest::Approx(ext).epsilon(1e-7));
}

TEST_CASE("benchmark value lies between the per-trajectory extremes") {
    PowerConfig cfg = desk_config(19);
    Instance inst = generate_instance(cfg);
    const RecourseTemplate& tpl = inst.recourse.at("slice0");
    TrajectoryPool pool = cluster_trajectories(tpl, 30, 4, 21);
    std::vector<double> xi = node_subvector(inst, 0, inst.master.upper);
    double mix = deterministic_value(inst, 0, xi, pool);
    double lo = kInf, hi = -kInf;
    for (size_t t = 0; t < pool.centers.size(); ++t) {
        TrajectoryPool single;
        single.centers = {pool.centers[t]};
        single.weights = {1.0};
        double v = deterministic_value(inst, 0, xi, single);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    CHECK(mix >= lo - 1e-9);
    CHECK(mix <= hi + 1e-9);
}

TEST_CASE("generated instances pass a json round-trip") {
    PowerConfig cfg = desk_config(23);
    Instance inst = generate_instance(cfg);
    Instance back = parse_instance(instance_to_json(inst));
    CHECK(back.master.nodes.size() == inst.master.nodes.size());
    CHECK(instance_to_json(back) == instance_to_json(inst));
}

}  // TEST_SUITE
