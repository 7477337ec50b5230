#include "mssp/benders.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>

#include <json.hpp>

namespace mssp {

namespace {

double master_cost(const MasterInstance& mi, std::span<const double> x) {
    double f = 0.0;
    for (int j = 0; j < mi.num_vars(); ++j) f += mi.cost[static_cast<size_t>(j)] * x[static_cast<size_t>(j)];
    return f;
}

double prob_sum(const MasterInstance& mi) {
    double s = 0.0;
    for (const auto& n : mi.nodes) s += n.probability;
    return s;
}

/// Direction signs of a node subvector, from the master-level declaration.
std::vector<int> node_direction(const MasterInstance& mi, const NodeSpec& node) {
    std::vector<int> dir;
    dir.reserve(node.x_indices.size());
    for (int idx : node.x_indices) dir.push_back(mi.monotone_direction[static_cast<size_t>(idx)]);
    return dir;
}

/// Componentwise extreme of the node boxes sharing a template, taken in the
/// monotone direction so the upper oracle is feasible at every reachable
/// subvector once this point is solved.
std::vector<double> seed_point(const MasterInstance& mi, const std::vector<int>& node_ids,
                               const std::vector<int>& dir) {
    const NodeSpec& first = mi.nodes[static_cast<size_t>(node_ids.front())];
    std::vector<double> seed(first.x_indices.size(), 0.0);
    for (size_t j = 0; j < seed.size(); ++j) {
        bool decreasing = dir[j] > 0;
        double v = decreasing ? kInf : -kInf;
        for (int ni : node_ids) {
            int idx = mi.nodes[static_cast<size_t>(ni)].x_indices[j];
            double b = decreasing ? mi.lower[static_cast<size_t>(idx)] : mi.upper[static_cast<size_t>(idx)];
            v = decreasing ? std::min(v, b) : std::max(v, b);
        }
        seed[j] = v;
    }
    return seed;
}

}  // namespace

RmpSolution solve_rmp(const BendersState& state, SimplexSolver& solver) {
    const MasterInstance& mi = state.instance->master;
    const int nx = mi.num_vars();
    const int ni = static_cast<int>(mi.nodes.size());

    LpProblem lp;
    for (int j = 0; j < nx; ++j)
        lp.add_var(mi.cost[static_cast<size_t>(j)], mi.lower[static_cast<size_t>(j)], mi.upper[static_cast<size_t>(j)]);
    for (int i = 0; i < ni; ++i) lp.add_var(mi.nodes[static_cast<size_t>(i)].probability, -kInf, kInf);

    if (!mi.constraints.empty()) {
        int row0 = lp.num_rows();
        for (int r = 0; r < mi.constraints.A.rows; ++r)
            lp.add_row(mi.constraints.sense[static_cast<size_t>(r)], mi.constraints.rhs[static_cast<size_t>(r)]);
        for (const auto& e : mi.constraints.A.entries) lp.A.add(row0 + e.row, e.col, e.value);
    }
    for (int i = 0; i < ni; ++i) {
        const NodeSpec& node = mi.nodes[static_cast<size_t>(i)];
        for (const RmpCut& cut : state.cut_pool[static_cast<size_t>(i)]) {
            double base = cut.theta;
            for (size_t j = 0; j < cut.lambda.size(); ++j) base -= cut.lambda[j] * cut.anchor[j];
            int r = lp.add_row(RowSense::ge, base);
            lp.A.add(r, nx + i, 1.0);
            for (size_t j = 0; j < cut.lambda.size(); ++j) {
                if (cut.lambda[j] != 0.0) lp.A.add(r, node.x_indices[j], -cut.lambda[j]);
            }
        }
    }

    LpSolution sol = solver.solve(lp);
    if (sol.status == LpStatus::infeasible) throw ValidationError("master model infeasible");
    if (sol.status == LpStatus::unbounded)
        throw ValidationError("relaxed master unbounded: a node is missing its seed cut");
    if (sol.status != LpStatus::optimal) throw NumericalError("relaxed master solve failed");

    RmpSolution out;
    out.x.assign(sol.x.begin(), sol.x.begin() + nx);
    out.beta.assign(sol.x.begin() + nx, sol.x.end());
    out.lower = sol.objective;
    return out;
}

BendersResult run_benders(const Instance& instance, const BendersOptions& opts, const ExactSubproblemFn& exact_in) {
    if (!instance.validated) throw ValidationError("run_benders needs a validated instance");
    const MasterInstance& mi = instance.master;
    const int ni = static_cast<int>(mi.nodes.size());
    const double psum = prob_sum(mi);
    if (!(opts.delta > 0.0)) throw ValidationError("run_benders needs delta > 0");
    if (!(opts.epsilon > 2.0 * opts.delta * psum)) {
        throw ValidationError("epsilon must exceed 2 * delta * (sum of node probabilities) = " +
                              std::to_string(2.0 * opts.delta * psum) + ", got " + std::to_string(opts.epsilon));
    }

    BendersState state;
    state.instance = &instance;
    state.opts = opts;
    state.cut_pool.assign(static_cast<size_t>(ni), {});

    // group nodes by recourse template and check the shared-family premise
    std::map<std::string, std::vector<int>> families;
    for (int i = 0; i < ni; ++i) families[mi.nodes[static_cast<size_t>(i)].recourse_ref].push_back(i);
    for (const auto& [ref, ids] : families) {
        std::vector<int> dir = node_direction(mi, mi.nodes[static_cast<size_t>(ids.front())]);
        for (int id : ids) {
            if (node_direction(mi, mi.nodes[static_cast<size_t>(id)]) != dir)
                throw ValidationError("nodes sharing recourse '" + ref + "' declare conflicting monotone directions");
        }
        state.oracles.emplace(ref, OracleStore(dir, opts.delta));
        const RecourseTemplate& tpl = instance.recourse.at(ref);
        state.envelopes.emplace(ref, EnvelopeSet(EnvelopeMode::enhanced, tpl.stage_count, tpl.tree.state_count));
    }

    ExactSubproblemFn exact = exact_in;
    if (!exact) {
        exact = [&state, &instance, &opts](int node_index, std::span<const double> x) {
            SddpOptions sopts;
            sopts.mode = SddpMode::enhanced;
            sopts.delta = opts.delta;
            sopts.iteration_cap = opts.sddp_iteration_cap;
            sopts.workers = opts.workers;
            sopts.lp = opts.lp;
            EnvelopeSet& env = state.envelopes.at(instance.master.nodes[static_cast<size_t>(node_index)].recourse_ref);
            env.clear_upper_points();
            SddpResult r = run_sddp(instance, node_index, x, sopts, &env);
            return SubproblemExact{r.theta_lb, r.theta_ub, r.lambda};
        };
    }

    BendersResult res;
    res.node_lower.assign(static_cast<size_t>(ni), -kInf);
    res.node_upper.assign(static_cast<size_t>(ni), kInf);
    auto t0 = std::chrono::steady_clock::now();

    // seed each family with one exact solve at its monotone-dominating corner
    for (auto& [ref, ids] : families) {
        OracleStore& store = state.oracles.at(ref);
        std::vector<double> seed = seed_point(mi, ids, store.direction());
        auto t_seed = std::chrono::steady_clock::now();
        SubproblemExact r = exact(ids.front(), seed);
        if (opts.verbose) {
            std::cerr << "[benders] seeded " << ref << " at its corner: [" << r.theta_lb << ", " << r.theta_ub
                      << "] in " << std::chrono::duration<double>(std::chrono::steady_clock::now() - t_seed).count()
                      << " s\n";
        }
        store.add({seed, r.theta_lb, r.theta_ub, r.lambda});
        res.total_exact_solves += 1;
        for (int id : ids) state.cut_pool[static_cast<size_t>(id)].push_back({r.theta_lb, r.lambda, seed});
    }

    SimplexSolver rmp_solver(opts.lp);
    for (;;) {
        if (state.w >= opts.iteration_cap) {
            throw CapExceededError("benders iteration cap of " + std::to_string(opts.iteration_cap) + " exceeded");
        }
        state.w += 1;

        RmpSolution rmp = solve_rmp(state, rmp_solver);
        state.lower = rmp.lower;
        if (opts.verbose) std::cerr << "[benders] w=" << state.w << " rmp lower " << rmp.lower << "\n";

        std::vector<std::vector<double>> xi(static_cast<size_t>(ni));
        for (int i = 0; i < ni; ++i) xi[static_cast<size_t>(i)] = node_subvector(instance, i, rmp.x);

        std::vector<double> theta_lo(static_cast<size_t>(ni)), theta_hi(static_cast<size_t>(ni));
        std::vector<std::vector<double>> lambdas(static_cast<size_t>(ni));
        auto query_all = [&] {
            parallel_for(ni, opts.workers, [&](int i) {
                SimplexSolver solver(opts.lp);
                const OracleStore& store = state.oracles.at(mi.nodes[static_cast<size_t>(i)].recourse_ref);
                OracleBound lo = store.lower(xi[static_cast<size_t>(i)]);
                theta_lo[static_cast<size_t>(i)] = lo.theta;
                lambdas[static_cast<size_t>(i)] = std::move(lo.lambda);
                theta_hi[static_cast<size_t>(i)] = store.upper(xi[static_cast<size_t>(i)], solver);
            });
        };
        query_all();

        // exact-solve loop: worst weighted gap first, one store update per
        // improving solve
        int chosen = -1;
        int exact_count = 0;
        std::set<int> solved_here;
        for (;;) {
            int pick = -1;
            double best = 0.0;
            bool all_solved = true;
            for (int i = 0; i < ni; ++i) {
                double gap = mi.nodes[static_cast<size_t>(i)].probability *
                             (theta_hi[static_cast<size_t>(i)] - theta_lo[static_cast<size_t>(i)]);
                if (std::isnan(gap)) gap = kInf;
                if (gap <= 0.0) continue;
                if (!solved_here.count(i)) all_solved = false;
                if (solved_here.count(i)) continue;
                if (gap > best) {
                    best = gap;
                    pick = i;
                }
            }
            if (pick < 0 || all_solved) break;

            const std::string& ref = mi.nodes[static_cast<size_t>(pick)].recourse_ref;
            OracleStore& store = state.oracles.at(ref);
            double oracle_lo = theta_lo[static_cast<size_t>(pick)];
            auto t_solve = std::chrono::steady_clock::now();
            SubproblemExact r = exact(pick, xi[static_cast<size_t>(pick)]);
            if (opts.verbose) {
                std::cerr << "  [benders] w=" << state.w << " exact node " << pick << " ("
                          << ref << "): [" << r.theta_lb << ", " << r.theta_ub << "] in "
                          << std::chrono::duration<double>(std::chrono::steady_clock::now() - t_solve).count()
                          << " s\n";
            }
            store.add({xi[static_cast<size_t>(pick)], r.theta_lb, r.theta_ub, r.lambda});
            solved_here.insert(pick);
            chosen = pick;
            exact_count += 1;
            res.total_exact_solves += 1;
            bool improved = r.theta_lb > oracle_lo + 1e-9 * (1.0 + std::abs(r.theta_lb));
            if (improved) break;
        }

        // refresh oracle bounds everywhere and extend the master relaxation
        query_all();
        for (int i = 0; i < ni; ++i) {
            state.cut_pool[static_cast<size_t>(i)].push_back(
                {theta_lo[static_cast<size_t>(i)], lambdas[static_cast<size_t>(i)], xi[static_cast<size_t>(i)]});
        }

        double upper_cand = master_cost(mi, rmp.x);
        bool finite = true;
        for (int i = 0; i < ni; ++i) {
            double p = mi.nodes[static_cast<size_t>(i)].probability;
            if (p <= 0.0) continue;
            if (!std::isfinite(theta_hi[static_cast<size_t>(i)])) {
                finite = false;
                break;
            }
            upper_cand += p * theta_hi[static_cast<size_t>(i)];
        }
        if (finite && upper_cand < state.upper) {
            state.upper = upper_cand;
            res.x = rmp.x;
            res.node_lower = theta_lo;
            res.node_upper = theta_hi;
        }

        BendersTraceRow row;
        row.w = state.w;
        row.lower = state.lower;
        row.upper = state.upper;
        row.chosen_node = chosen;
        row.exact_solves = exact_count;
        row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        res.trace.push_back(row);
        if (!opts.trace_path.empty()) write_benders_trace(opts.trace_path, res.trace, opts.trace_header);
        if (opts.verbose) {
            std::cerr << "[benders] w=" << state.w << " L=" << state.lower << " U=" << state.upper
                      << " gap=" << state.upper - state.lower << " exact=" << exact_count << "\n";
        }

        res.lower = state.lower;
        res.upper = state.upper;
        res.iterations = state.w;
        if (state.upper - state.lower <= opts.epsilon) break;
    }
    return res;
}

void write_benders_trace(const std::string& path, const std::vector<BendersTraceRow>& trace,
                         const std::vector<std::string>& header_lines) {
    std::ofstream f(path);
    if (!f) throw ValidationError("cannot open trace file for writing: " + path);
    for (const auto& line : header_lines) f << "# " << line << "\n";
    f << "w,lower,upper,chosen_node,exact_solves,wall_ms\n";
    f.precision(17);
    for (const auto& r : trace) {
        f << r.w << "," << r.lower << "," << r.upper << "," << r.chosen_node << "," << r.exact_solves << ","
          << r.wall_ms << "\n";
    }
}

std::string benders_solution_json(const BendersResult& res) {
    nlohmann::json j;
    j["x"] = res.x;
    j["lower"] = res.lower;
    j["upper"] = res.upper;
    j["iterations"] = res.iterations;
    j["exact_solves"] = res.total_exact_solves;
    nlohmann::json nodes = nlohmann::json::array();
    for (size_t i = 0; i < res.node_lower.size(); ++i) {
        nodes.push_back({{"lower", res.node_lower[i]}, {"upper", res.node_upper[i]}});
    }
    j["nodes"] = nodes;
    return j.dump(1);
}

}  // namespace mssp
