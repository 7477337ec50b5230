#include "mssp/sddp.hpp"

#include <chrono>
#include <cstdlib>
#include <cmath>
#include <fstream>

namespace mssp {

namespace {

long long basis_key(int d, int l, int m, bool upper) {
    return ((static_cast<long long>(d) * 4096 + (l + 1)) * 4096 + m) * 2 + (upper ? 1 : 0);
}

const Basis* cached_basis(const SddpRun& run, long long key) {
    static const bool disabled = std::getenv("MSSP_NO_WARM_START") != nullptr;
    if (disabled) return nullptr;
    auto it = run.basis_cache.find(key);
    return it == run.basis_cache.end() ? nullptr : &it->second;
}

StageInput stage_input(const SddpRun& run, int d, int l, int m, std::span<const double> y_prev) {
    StageInput in;
    in.tpl = run.tpl;
    in.env = run.env;
    in.d = d;
    in.l = l;
    in.m = m;
    in.x = run.x;
    in.y_prev = y_prev;
    return in;
}

int upper_problem_rows(const RecourseTemplate& tpl, int d, int m) {
    const int W = tpl.tree.scenario_count;
    const StageData& sd = tpl.stages[static_cast<size_t>(d - 1)];
    int blocks = 0;
    for (int n = 0; n < tpl.tree.state_count; ++n) {
        if (tpl.tree.transition_prob(d + 1, m, n) > 0.0) ++blocks;
    }
    blocks *= W;
    int nbs = d < tpl.stage_count ? tpl.b_dim[static_cast<size_t>(d)] * W : 0;
    return W * sd.A.rows + (sd.shared.empty() ? 0 : sd.shared.A.rows) + blocks * (sd.y_dim() + nbs + 2);
}

/// Upper value at the trial point: exact free minimization when the problem
/// is small, otherwise the fixed-trial completion (valid, looser).
double upper_stage_value(SddpRun& run, const StageInput& in, SimplexSolver& solver, const StageResult& low,
                         long long ukey, Basis* basis_out) {
    const RecourseTemplate& tpl = *run.tpl;
    if (in.d == tpl.stage_count) return low.theta;
    if (upper_problem_rows(tpl, in.d, in.m) <= run.opts.upper_exact_row_limit) {
        StageResult up = solve_upper_stage(in, solver, cached_basis(run, ukey));
        if (basis_out != nullptr && std::isfinite(up.theta)) *basis_out = std::move(up.basis);
        return up.theta;
    }
    std::vector<std::vector<double>> fixed = solve_upper_stage_fixed(in, low.y, solver, &run.envelope_basis);
    const int W = tpl.tree.scenario_count;
    const StageData& sd = tpl.stages[static_cast<size_t>(in.d - 1)];
    const double pw = 1.0 / static_cast<double>(W);
    double total = 0.0;
    for (int w = 0; w < W; ++w) {
        double stage_cost = 0.0;
        for (int k = 0; k < sd.y_dim(); ++k)
            stage_cost += sd.cost[static_cast<size_t>(k)] * low.y[static_cast<size_t>(w)][static_cast<size_t>(k)];
        double ctg = 0.0;
        for (int n = 0; n < tpl.tree.state_count; ++n) {
            double p = tpl.tree.transition_prob(in.d + 1, in.m, n);
            if (p <= 0.0) continue;
            double v = fixed[static_cast<size_t>(w)][static_cast<size_t>(n)];
            if (!std::isfinite(v)) return kInf;
            ctg += p * v;
        }
        total += pw * (stage_cost + ctg);
    }
    return total;
}

/// argmax of ub-lb over positive-probability (scenario, successor) pairs,
/// ties broken by lowest scenario then lowest state index.
struct GapPick {
    int omega = -1;
    int state = -1;
    double gap = -kInf;
};

GapPick pick_gap(const RecourseTemplate& tpl, int d_next, int m_prev,
                 const std::vector<std::vector<double>>& lower_ctg,
                 const std::vector<std::vector<double>>& upper_ctg) {
    GapPick best;
    const int W = tpl.tree.scenario_count;
    for (int w = 0; w < W; ++w) {
        for (int n = 0; n < tpl.tree.state_count; ++n) {
            if (tpl.tree.transition_prob(d_next, m_prev, n) <= 0.0) continue;
            double lo = lower_ctg[static_cast<size_t>(w)][static_cast<size_t>(n)];
            double hi = upper_ctg[static_cast<size_t>(w)][static_cast<size_t>(n)];
            double gap = hi - lo;  // +inf while the upper store is empty
            if (std::isnan(gap)) gap = kInf;
            if (gap > best.gap) {
                best.gap = gap;
                best.omega = w;
                best.state = n;
            }
        }
    }
    return best;
}

}  // namespace

ForwardResult forward_pass(SddpRun& run, SimplexSolver& solver) {
    const RecourseTemplate& tpl = *run.tpl;
    const int D = tpl.stage_count;

    ForwardResult out;

    // first-stage state: worst first-stage bound gap among reachable states
    int m1 = -1;
    double best_gap = -kInf;
    for (int m = 0; m < tpl.tree.state_count; ++m) {
        if (tpl.tree.initial_probs[static_cast<size_t>(m)] <= 0.0) continue;
        double gap = run.ub1[static_cast<size_t>(m)] - run.lb1[static_cast<size_t>(m)];
        if (std::isnan(gap)) gap = kInf;
        if (gap > best_gap) {
            best_gap = gap;
            m1 = m;
        }
    }

    StageInput in1 = stage_input(run, 1, -1, m1, {});
    StageResult low = solve_lower_stage(in1, solver, cached_basis(run, basis_key(1, -1, m1, false)));
    run.basis_cache[basis_key(1, -1, m1, false)] = low.basis;
    std::vector<std::vector<double>> upper_ctg = solve_upper_stage_fixed(in1, low.y, solver, &run.envelope_basis);

    out.path.push_back({1, m1, -1, -1, low.y});
    std::vector<std::vector<double>> lower_ctg = std::move(low.cost_to_go);

    int d = 1;
    out.depth_hat = D;
    while (d < D) {
        int d_next = d + 1;
        GapPick pick = pick_gap(tpl, d_next, out.path.back().m, lower_ctg, upper_ctg);
        double threshold = run.opts.delta * static_cast<double>(D - d_next + 1) / static_cast<double>(D - 1);
        if (!(pick.gap > threshold)) {
            out.depth_hat = d;
            out.early_stop = true;
            break;
        }
        const TrajectoryEntry& parent = out.path.back();
        std::span<const double> y_prev = parent.y[static_cast<size_t>(pick.omega)];
        StageInput in = stage_input(run, d_next, parent.m, pick.state, y_prev);
        long long key = basis_key(d_next, parent.m, pick.state, false);
        StageResult st = solve_lower_stage(in, solver, cached_basis(run, key));
        run.basis_cache[key] = st.basis;
        upper_ctg = solve_upper_stage_fixed(in, st.y, solver, &run.envelope_basis);
        out.path.push_back({d_next, pick.state, parent.m, pick.omega, st.y});
        lower_ctg = std::move(st.cost_to_go);
        d = d_next;
    }
    return out;
}

double backward_pass(SddpRun& run, const ForwardResult& fwd) {
    const RecourseTemplate& tpl = *run.tpl;
    const EnvelopeSet& env = *run.env;
    const bool enhanced = env.mode() == EnvelopeMode::enhanced;
    double pair_gap = kInf;

    for (int d = fwd.depth_hat; d >= 2; --d) {
        const TrajectoryEntry& entry = fwd.path[static_cast<size_t>(d - 1)];
        const TrajectoryEntry& parent = fwd.path[static_cast<size_t>(d - 2)];
        std::span<const double> y_prev = parent.y[static_cast<size_t>(entry.omega_prev)];

        if (!enhanced) {
            SimplexSolver solver(run.opts.lp);
            StageInput in = stage_input(run, d, entry.pred, entry.m, y_prev);
            long long lkey = basis_key(d, entry.pred, entry.m, false);
            StageResult low = solve_lower_stage(in, solver, cached_basis(run, lkey));
            run.basis_cache[lkey] = low.basis;
            long long ukey = basis_key(d, entry.pred, entry.m, true);
            Basis ubasis;
            double theta_up = upper_stage_value(run, in, solver, low, ukey, &ubasis);
            if (!ubasis.empty()) run.basis_cache[ukey] = std::move(ubasis);
            LowerCut cut;
            cut.theta = low.theta;
            cut.sigma = low.sigma;
            cut.anchor_y.assign(y_prev.begin(), y_prev.end());
            run.env->add_lower_cut({d, entry.pred, entry.m}, std::move(cut), tpl.M_y, tpl.M_b);
            if (std::isfinite(theta_up)) {
                UpperPoint pt;
                pt.theta = theta_up;
                pt.anchor_y.assign(y_prev.begin(), y_prev.end());
                run.env->add_upper_point({d, entry.pred, entry.m}, std::move(pt));
            }
            if (d == fwd.depth_hat) pair_gap = theta_up - low.theta;
        } else {
            // cut sharing: solve every state at the trial point, publish the
            // cut and point to the single per-(stage, state) stores
            const int M = tpl.tree.state_count;
            std::vector<StageResult> lows(static_cast<size_t>(M));
            std::vector<double> uppers(static_cast<size_t>(M), kInf);
            std::vector<Basis> new_lbasis(static_cast<size_t>(M)), new_ubasis(static_cast<size_t>(M));
            parallel_for(M, run.opts.workers, [&](int m) {
                SimplexSolver solver(run.opts.lp);
                StageInput in = stage_input(run, d, entry.pred, m, y_prev);
                StageResult low = solve_lower_stage(in, solver, cached_basis(run, basis_key(d, entry.pred, m, false)));
                new_lbasis[static_cast<size_t>(m)] = low.basis;
                uppers[static_cast<size_t>(m)] = upper_stage_value(run, in, solver, low, basis_key(d, entry.pred, m, true),
                                                                   &new_ubasis[static_cast<size_t>(m)]);
                lows[static_cast<size_t>(m)] = std::move(low);
            });
            const auto& varying = tpl.b_varying[static_cast<size_t>(d - 1)];
            const int nb = tpl.b_dim[static_cast<size_t>(d - 1)];
            for (int m = 0; m < M; ++m) {
                run.basis_cache[basis_key(d, entry.pred, m, false)] = std::move(new_lbasis[static_cast<size_t>(m)]);
                if (!new_ubasis[static_cast<size_t>(m)].empty())
                    run.basis_cache[basis_key(d, entry.pred, m, true)] = std::move(new_ubasis[static_cast<size_t>(m)]);
                std::vector<double> bundle = realization_bundle(tpl, d, entry.pred, m);
                LowerCut cut;
                cut.theta = lows[static_cast<size_t>(m)].theta;
                cut.lambda = lows[static_cast<size_t>(m)].lambda;
                cut.sigma = lows[static_cast<size_t>(m)].sigma;
                cut.nu = lows[static_cast<size_t>(m)].nu;
                // constant bundle coordinates never move between the tree's
                // evaluation points; dropping their slopes keeps the L1 cap
                // meaningful without changing the cut on any reachable bundle
                for (int w = 0; w < tpl.tree.scenario_count; ++w) {
                    for (int k = 0; k < nb; ++k) {
                        if (!varying[static_cast<size_t>(k)]) cut.nu[static_cast<size_t>(w * nb + k)] = 0.0;
                    }
                }
                cut.cross = lows[static_cast<size_t>(m)].cross;
                cut.anchor_x = run.x;
                cut.anchor_y.assign(y_prev.begin(), y_prev.end());
                cut.anchor_b = bundle;
                run.env->add_lower_cut({d, -1, m}, std::move(cut), tpl.M_y, tpl.M_b);
                if (std::isfinite(uppers[static_cast<size_t>(m)])) {
                    UpperPoint pt;
                    pt.theta = uppers[static_cast<size_t>(m)];
                    pt.anchor_y.assign(y_prev.begin(), y_prev.end());
                    pt.anchor_b = std::move(bundle);
                    run.env->add_upper_point({d, -1, m}, std::move(pt));
                }
                if (d == fwd.depth_hat && m == entry.m)
                    pair_gap = uppers[static_cast<size_t>(m)] - lows[static_cast<size_t>(m)].theta;
            }
        }
    }
    return pair_gap;
}

SddpResult run_sddp(const Instance& instance, int node_index, std::span<const double> x, const SddpOptions& opts,
                    EnvelopeSet* shared_env) {
    if (!instance.validated) throw ValidationError("run_sddp needs a validated instance");
    if (!(opts.delta > 0.0)) throw ValidationError("run_sddp needs delta > 0");

    SddpRun run;
    run.instance = &instance;
    run.node_index = node_index;
    run.tpl = &instance.recourse_for(node_index);
    run.x.assign(x.begin(), x.end());
    run.opts = opts;

    const RecourseTemplate& tpl = *run.tpl;
    EnvelopeSet local_env;
    if (shared_env != nullptr) {
        run.env = shared_env;
        if ((shared_env->mode() == EnvelopeMode::enhanced) != (opts.mode == SddpMode::enhanced))
            throw ValidationError("shared envelope mode does not match the requested sddp mode");
    } else {
        local_env = EnvelopeSet(opts.mode == SddpMode::enhanced ? EnvelopeMode::enhanced : EnvelopeMode::basic,
                                tpl.stage_count, tpl.tree.state_count);
        run.env = &local_env;
    }

    const int M = tpl.tree.state_count;
    run.lb1.resize(static_cast<size_t>(M));
    for (int m = 0; m < M; ++m) run.lb1[static_cast<size_t>(m)] = tpl.value_lb(1, m);
    run.ub1.assign(static_cast<size_t>(M), kInf);
    run.lambda1.assign(static_cast<size_t>(M), std::vector<double>(x.size(), 0.0));
    for (int d = 2; d <= tpl.stage_count; ++d) {
        for (int m = 0; m < M; ++m) {
            for (int n = 0; n < M; ++n) {
                run.envelope_basis.emplace(((static_cast<long long>(d) * 4096) + m) * 4096 + n, Basis{});
            }
        }
    }

    SddpResult res;
    const bool enhanced = opts.mode == SddpMode::enhanced;
    auto t0 = std::chrono::steady_clock::now();

    for (;;) {
        if (run.k >= opts.iteration_cap) {
            throw CapExceededError("sddp iteration cap of " + std::to_string(opts.iteration_cap) +
                                   " exceeded at node " + std::to_string(node_index));
        }
        run.k += 1;

        SimplexSolver solver(opts.lp);
        ForwardResult fwd = forward_pass(run, solver);
        double pair_gap = backward_pass(run, fwd);

        // first-stage refresh
        if (enhanced) {
            std::vector<StageResult> lows(static_cast<size_t>(M));
            std::vector<double> uppers(static_cast<size_t>(M), kInf);
            std::vector<Basis> lb_basis(static_cast<size_t>(M)), ub_basis(static_cast<size_t>(M));
            parallel_for(M, opts.workers, [&](int m) {
                SimplexSolver worker(opts.lp);
                StageInput in = stage_input(run, 1, -1, m, {});
                StageResult low = solve_lower_stage(in, worker, cached_basis(run, basis_key(1, -1, m, false)));
                lb_basis[static_cast<size_t>(m)] = low.basis;
                uppers[static_cast<size_t>(m)] = upper_stage_value(run, in, worker, low, basis_key(1, -1, m, true),
                                                                   &ub_basis[static_cast<size_t>(m)]);
                lows[static_cast<size_t>(m)] = std::move(low);
            });
            for (int m = 0; m < M; ++m) {
                run.basis_cache[basis_key(1, -1, m, false)] = std::move(lb_basis[static_cast<size_t>(m)]);
                if (!ub_basis[static_cast<size_t>(m)].empty())
                    run.basis_cache[basis_key(1, -1, m, true)] = std::move(ub_basis[static_cast<size_t>(m)]);
                run.lb1[static_cast<size_t>(m)] = lows[static_cast<size_t>(m)].theta;
                run.ub1[static_cast<size_t>(m)] = uppers[static_cast<size_t>(m)];
                run.lambda1[static_cast<size_t>(m)] = lows[static_cast<size_t>(m)].lambda;
            }
        } else {
            int m1 = fwd.path.front().m;
            SimplexSolver worker(opts.lp);
            StageInput in = stage_input(run, 1, -1, m1, {});
            StageResult low = solve_lower_stage(in, worker, cached_basis(run, basis_key(1, -1, m1, false)));
            run.basis_cache[basis_key(1, -1, m1, false)] = low.basis;
            Basis ubasis;
            double up_value = upper_stage_value(run, in, worker, low, basis_key(1, -1, m1, true), &ubasis);
            if (!ubasis.empty()) run.basis_cache[basis_key(1, -1, m1, true)] = std::move(ubasis);
            run.lb1[static_cast<size_t>(m1)] = low.theta;
            run.ub1[static_cast<size_t>(m1)] = up_value;
        }
        if (fwd.depth_hat == 1) pair_gap = run.ub1[static_cast<size_t>(fwd.path.front().m)] - run.lb1[static_cast<size_t>(fwd.path.front().m)];

        double lb = 0.0, ub = 0.0;
        std::vector<double> lambda(x.size(), 0.0);
        for (int m = 0; m < M; ++m) {
            double p = tpl.tree.initial_probs[static_cast<size_t>(m)];
            if (p <= 0.0) continue;
            lb += p * run.lb1[static_cast<size_t>(m)];
            ub += p * run.ub1[static_cast<size_t>(m)];
            for (size_t j = 0; j < lambda.size(); ++j) lambda[j] += p * run.lambda1[static_cast<size_t>(m)][j];
        }

        if (std::getenv("MSSP_SDDP_TRACE")) {
            fprintf(stderr, "[sddp] k=%d lb=%.9g ub=%.9g depth=%d early=%d cuts=%zu points=%zu\n", run.k, lb, ub,
                    fwd.depth_hat, (int)fwd.early_stop, run.env->total_cuts(), run.env->total_points());
        }
        SddpTraceRow row;
        row.k = run.k;
        row.theta_lb = lb;
        row.theta_ub = ub;
        row.depth = fwd.depth_hat;
        row.early_stop = fwd.early_stop;
        row.pair_gap = pair_gap;
        row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        res.trace.push_back(row);

        res.theta_lb = lb;
        res.theta_ub = ub;
        res.iterations = run.k;
        if (enhanced) res.lambda = lambda;

        if (ub - lb <= opts.delta) break;
    }
    return res;
}

void write_sddp_trace(const std::string& path, const std::vector<SddpTraceRow>& trace,
                      const std::vector<std::string>& header_lines) {
    std::ofstream f(path);
    if (!f) throw ValidationError("cannot open trace file for writing: " + path);
    for (const auto& line : header_lines) f << "# " << line << "\n";
    f << "k,theta_lb,theta_ub,depth,wall_ms\n";
    f.precision(17);
    for (const auto& r : trace) {
        f << r.k << "," << r.theta_lb << "," << r.theta_ub << "," << r.depth << "," << r.wall_ms << "\n";
    }
}

}  // namespace mssp
