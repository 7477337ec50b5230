#include "mssp/checks.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mssp/envelopes.hpp"
#include "mssp/extform.hpp"
#include "mssp/oracle.hpp"
#include "mssp/sddp.hpp"

namespace mssp {

namespace {

double uni(Rng& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uni_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

}  // namespace

Instance random_instance(const RandomInstanceConfig& cfg) {
    Rng rng(cfg.seed);
    const int D = cfg.stages;
    const int M = cfg.states;
    const int W = cfg.scenarios;
    const int nx = cfg.master_vars;
    const int ny = uni_int(rng, 1, cfg.max_vars_per_stage);
    const int nb = uni_int(rng, 1, 2);

    Instance inst;
    MasterInstance& mi = inst.master;
    for (int j = 0; j < nx; ++j) {
        mi.cost.push_back(uni(rng, 0.3, 1.5));
        double lo = uni(rng, 0.2, 0.8);
        mi.lower.push_back(lo);
        mi.upper.push_back(lo + uni(rng, 0.4, 1.2));
    }
    mi.monotone_direction.assign(static_cast<size_t>(nx), 1);

    RecourseTemplate tpl;
    tpl.stage_count = D;

    FoldedTree& tree = tpl.tree;
    tree.state_count = M;
    tree.scenario_count = W;
    auto random_probs = [&](bool allow_zero) {
        std::vector<double> p(static_cast<size_t>(M));
        for (int m = 0; m < M; ++m) p[static_cast<size_t>(m)] = uni(rng, 0.05, 1.0);
        if (allow_zero && M >= 2 && uni(rng, 0.0, 1.0) < 0.3) p[static_cast<size_t>(uni_int(rng, 0, M - 1))] = 0.0;
        double s = 0.0;
        for (double v : p) s += v;
        if (s <= 0.0) p[0] = s = 1.0;
        for (double& v : p) v /= s;
        // exact re-normalization so the probability-sum validation passes
        double acc = 0.0;
        for (int m = 0; m < M - 1; ++m) acc += p[static_cast<size_t>(m)];
        p[static_cast<size_t>(M - 1)] = 1.0 - acc;
        return p;
    };
    tree.initial_probs = random_probs(cfg.allow_zero_transitions);
    tree.transition.resize(static_cast<size_t>(D - 1));
    for (int d = 2; d <= D; ++d) {
        auto& td = tree.transition[static_cast<size_t>(d - 2)];
        td.resize(static_cast<size_t>(M));
        for (int l = 0; l < M; ++l) td[static_cast<size_t>(l)] = random_probs(cfg.allow_zero_transitions);
    }
    tree.realizations.resize(static_cast<size_t>(D));
    for (int d = 1; d <= D; ++d) {
        int lsize = d == 1 ? 1 : M;
        auto& rd = tree.realizations[static_cast<size_t>(d - 1)];
        rd.resize(static_cast<size_t>(lsize));
        for (int l = 0; l < lsize; ++l) {
            rd[static_cast<size_t>(l)].resize(static_cast<size_t>(M));
            for (int m = 0; m < M; ++m) {
                rd[static_cast<size_t>(l)][static_cast<size_t>(m)].resize(static_cast<size_t>(W));
                for (int w = 0; w < W; ++w) {
                    std::vector<double> b(static_cast<size_t>(nb));
                    for (int k = 0; k < nb; ++k) b[static_cast<size_t>(k)] = uni(rng, 0.3, 1.0);
                    rd[static_cast<size_t>(l)][static_cast<size_t>(m)][static_cast<size_t>(w)] = std::move(b);
                }
            }
        }
    }

    // stages: one unit capacity row per variable, nonnegative C and B
    // coupling, mixed-sign costs with value-producing capped variables
    std::vector<double> cmax(static_cast<size_t>(D), 0.0);
    std::vector<double> Gsum(static_cast<size_t>(D), 0.0);  // sum of C row L1 norms
    std::vector<double> Hsum(static_cast<size_t>(D), 0.0);  // worst-case rhs/b slopes
    for (int d = 1; d <= D; ++d) {
        StageData sd;
        sd.cost.resize(static_cast<size_t>(ny));
        sd.y_lower.assign(static_cast<size_t>(ny), 0.0);
        sd.y_upper.assign(static_cast<size_t>(ny), 50.0);
        sd.A.cols = ny;
        sd.C.cols = d >= 2 ? ny : 0;
        for (int k = 0; k < ny; ++k) {
            sd.cost[static_cast<size_t>(k)] = uni(rng, -2.0, -0.1);
            cmax[static_cast<size_t>(d - 1)] = std::max(cmax[static_cast<size_t>(d - 1)], std::abs(sd.cost[static_cast<size_t>(k)]));
            int r = sd.A.rows;
            sd.A.rows += 1;
            sd.A.add(r, k, 1.0);
            int couplings = uni_int(rng, 1, 2);
            for (int t = 0; t < couplings; ++t) {
                int xj = uni_int(rng, 0, nx - 1);
                int bk = uni_int(rng, 0, nb - 1);
                double coeff = uni(rng, 0.2, 1.0);
                sd.B.push_back({r, xj, bk, coeff});
                Hsum[static_cast<size_t>(d - 1)] += mi.upper[static_cast<size_t>(xj)] * coeff;
            }
            if (d >= 2 && uni(rng, 0.0, 1.0) < 0.8) {
                int q = uni_int(rng, 0, ny - 1);
                double cv = uni(rng, 0.1, 0.6);
                sd.C.add(r, q, cv);
                Gsum[static_cast<size_t>(d - 1)] += cv;
            }
        }
        sd.C.rows = sd.A.rows;
        tpl.stages.push_back(std::move(sd));
    }

    // conservative dual-magnitude recursion: a unit capacity row's dual is
    // bounded by the variable's effective cost, |c| plus the downstream slope
    std::vector<double> slope_cap(static_cast<size_t>(D + 2), 0.0);
    double M_y = 1e-6, M_b = 1e-6;
    for (int d = D; d >= 2; --d) {
        double s = Gsum[static_cast<size_t>(d - 1)] * (cmax[static_cast<size_t>(d - 1)] + slope_cap[static_cast<size_t>(d + 1)]);
        double n = Hsum[static_cast<size_t>(d - 1)] * (cmax[static_cast<size_t>(d - 1)] + slope_cap[static_cast<size_t>(d + 1)]);
        slope_cap[static_cast<size_t>(d)] = s;
        M_y = std::max(M_y, s);
        M_b = std::max(M_b, n);
    }
    tpl.M_y = M_y + 1e-9;
    tpl.M_b = M_b + 1e-9;

    // valid cost-to-go floor: the most negative achievable remaining cost
    tpl.stage_value_lb.assign(static_cast<size_t>(D), std::vector<double>(static_cast<size_t>(M), 0.0));
    double tail = 0.0;
    for (int d = D; d >= 1; --d) {
        double stage_min = 0.0;
        for (int k = 0; k < ny; ++k)
            stage_min += std::min(0.0, tpl.stages[static_cast<size_t>(d - 1)].cost[static_cast<size_t>(k)]) * 50.0;
        tail += stage_min;
        for (int m = 0; m < M; ++m) tpl.stage_value_lb[static_cast<size_t>(d - 1)][static_cast<size_t>(m)] = tail;
    }

    inst.recourse.emplace("main", std::move(tpl));

    for (int i = 0; i < cfg.nodes; ++i) {
        NodeSpec node;
        node.probability = uni(rng, 0.2, 0.8);
        node.recourse_ref = "main";
        for (int j = 0; j < nx; ++j) node.x_indices.push_back(j);
        inst.master.nodes.push_back(std::move(node));
    }

    return validate_instance(std::move(inst));
}

std::vector<double> random_master_point(const Instance& inst, Rng& rng) {
    std::vector<double> x(static_cast<size_t>(inst.master.num_vars()));
    for (int j = 0; j < inst.master.num_vars(); ++j) {
        x[static_cast<size_t>(j)] = uni(rng, inst.master.lower[static_cast<size_t>(j)], inst.master.upper[static_cast<size_t>(j)]);
    }
    return x;
}

std::vector<CheckOutcome> run_randomized_checks(unsigned long long seed, int instances, std::ostream* log) {
    CheckOutcome bracketing{"sddp-brackets-extensive-form"};
    CheckOutcome per_iteration{"valid-bounds-every-iteration"};
    CheckOutcome oracle_bounds{"oracle-bounds-vs-extensive-form"};
    CheckOutcome cut_validity{"first-stage-cut-validity"};

    for (int t = 0; t < instances; ++t) {
        RandomInstanceConfig cfg;
        cfg.seed = seed + static_cast<unsigned long long>(t);
        Rng rng(cfg.seed * 977 + 13);
        cfg.stages = uni_int(rng, 2, 3);
        cfg.states = uni_int(rng, 1, 2);
        cfg.scenarios = uni_int(rng, 1, 2);
        Instance inst = random_instance(cfg);

        std::vector<double> x = random_master_point(inst, rng);
        std::vector<double> xi = node_subvector(inst, 0, x);
        double truth = extform_value(inst, 0, xi);

        SddpOptions opts;
        opts.mode = SddpMode::enhanced;
        opts.delta = 1e-4 * (1.0 + std::abs(truth));
        SddpResult run = run_sddp(inst, 0, xi, opts);

        double tol = 1e-6 * (1.0 + std::abs(truth));
        if (run.theta_lb <= truth + tol && truth <= run.theta_ub + tol && run.theta_ub - run.theta_lb <= opts.delta + tol) {
            bracketing.passed += 1;
        } else {
            bracketing.failed += 1;
            std::ostringstream msg;
            msg << "seed " << cfg.seed << ": truth " << truth << " vs [" << run.theta_lb << ", " << run.theta_ub << "]";
            bracketing.failures.push_back(msg.str());
        }

        bool rows_ok = true;
        for (const auto& row : run.trace) {
            double rtol = 1e-7 * (1.0 + std::abs(truth));
            if (!(row.theta_lb <= truth + rtol && truth <= row.theta_ub + rtol)) rows_ok = false;
        }
        rows_ok ? per_iteration.passed += 1 : per_iteration.failed += 1;
        if (!rows_ok) per_iteration.failures.push_back("seed " + std::to_string(cfg.seed));

        // a two-record oracle store must bracket the truth everywhere
        OracleStore store(inst.master.monotone_direction, opts.delta);
        {
            std::vector<double> corner = inst.master.lower;
            std::vector<double> ci = node_subvector(inst, 0, corner);
            SddpResult seed_run = run_sddp(inst, 0, ci, opts);
            store.add({ci, seed_run.theta_lb, seed_run.theta_ub, seed_run.lambda});
            store.add({xi, run.theta_lb, run.theta_ub, run.lambda});
        }
        SimplexSolver solver;
        bool oracle_ok = true, cut_ok = true;
        for (int q = 0; q < 5; ++q) {
            std::vector<double> xq = random_master_point(inst, rng);
            std::vector<double> xqi = node_subvector(inst, 0, xq);
            double g = extform_value(inst, 0, xqi);
            double gtol = 1e-7 * (1.0 + std::abs(g));
            OracleBound lo = store.lower(xqi);
            double hi = store.upper(xqi, solver);
            if (!(lo.theta <= g + gtol && (!std::isfinite(hi) || g <= hi + gtol))) oracle_ok = false;
            double cut_val = run.theta_lb;
            for (size_t j = 0; j < xqi.size(); ++j) cut_val += run.lambda[j] * (xqi[j] - xi[j]);
            if (!(cut_val <= g + gtol)) cut_ok = false;
        }
        oracle_ok ? oracle_bounds.passed += 1 : oracle_bounds.failed += 1;
        if (!oracle_ok) oracle_bounds.failures.push_back("seed " + std::to_string(cfg.seed));
        cut_ok ? cut_validity.passed += 1 : cut_validity.failed += 1;
        if (!cut_ok) cut_validity.failures.push_back("seed " + std::to_string(cfg.seed));
    }

    std::vector<CheckOutcome> out{bracketing, per_iteration, oracle_bounds, cut_validity};
    if (log != nullptr) {
        for (const auto& c : out) {
            (*log) << (c.failed == 0 ? "[PASS] " : "[FAIL] ") << c.name << ": " << c.passed << " passed, " << c.failed
                   << " failed\n";
            for (const auto& f : c.failures) (*log) << "       " << f << "\n";
        }
    }
    return out;
}

}  // namespace mssp
