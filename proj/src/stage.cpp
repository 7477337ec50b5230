#include "mssp/stage.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdlib>
#include <map>
#include <sstream>

#include "mssp/mps.hpp"

namespace mssp {

namespace {

std::string where_str(const StageInput& in) {
    std::ostringstream s;
    s << "stage " << in.d << ", state " << in.m;
    if (in.l >= 0) s << ", predecessor " << in.l;
    return s.str();
}

struct RowLayout {
    int a_rows_per_copy = 0;
    int shared_offset = 0;
    int first_extra_row = 0;  // cut rows (lower) / envelope rows (upper)
};

// Shared part of both stage problems: scenario copies of the stage decision
// variables, the A-rows with parametric rhs, and the shared coupling system.
// Also fills the rhs dependence on (x, y_prev, bundle) for dual composition.
RowLayout build_base(const StageInput& in, LpProblem& lp, std::vector<MatrixEntry>& rhs_dep) {
    const RecourseTemplate& tpl = *in.tpl;
    const StageData& sd = tpl.stages[static_cast<size_t>(in.d - 1)];
    const int W = tpl.tree.scenario_count;
    const int ny = sd.y_dim();
    const int nb = tpl.b_dim[static_cast<size_t>(in.d - 1)];
    const int nx = static_cast<int>(in.x.size());
    const auto& links = in.d >= 2 ? tpl.link_rows[static_cast<size_t>(in.d - 1)] : std::vector<int>{};
    const int nl = static_cast<int>(links.size());
    const double pw = 1.0 / static_cast<double>(W);

    for (int w = 0; w < W; ++w) {
        for (int k = 0; k < ny; ++k) {
            lp.add_var(pw * sd.cost[static_cast<size_t>(k)], sd.y_lower[static_cast<size_t>(k)],
                       sd.y_upper[static_cast<size_t>(k)]);
        }
    }

    RowLayout layout;
    layout.a_rows_per_copy = sd.A.rows;
    for (int w = 0; w < W; ++w) {
        const std::vector<double>& b = tpl.tree.realization(in.d, in.l, in.m, w);
        std::vector<double> rhs(static_cast<size_t>(sd.A.rows), 0.0);
        for (const auto& e : sd.B) {
            rhs[static_cast<size_t>(e.row)] += in.x[static_cast<size_t>(e.x_index)] * e.coeff * b[static_cast<size_t>(e.b_index)];
        }
        if (in.d >= 2) {
            for (const auto& e : sd.C.entries) rhs[static_cast<size_t>(e.row)] += e.value * in.y_prev[static_cast<size_t>(e.col)];
        }
        int row0 = lp.num_rows();
        for (int r = 0; r < sd.A.rows; ++r) lp.add_row(RowSense::le, rhs[static_cast<size_t>(r)]);
        for (const auto& e : sd.A.entries) lp.A.add(row0 + e.row, w * ny + e.col, e.value);
        for (const auto& e : sd.B) {
            // d rhs / d x and d rhs / d bundle
            rhs_dep.push_back({row0 + e.row, e.x_index, e.coeff * b[static_cast<size_t>(e.b_index)]});
            rhs_dep.push_back({row0 + e.row, nx + nl + w * nb + e.b_index,
                               in.x[static_cast<size_t>(e.x_index)] * e.coeff});
        }
        // the previous stage enters only through its linked image: one unit
        // of parameter i shifts the rhs of link row i in every copy
        for (int i = 0; i < nl; ++i) {
            rhs_dep.push_back({row0 + links[static_cast<size_t>(i)], nx + i, 1.0});
        }
    }

    layout.shared_offset = lp.num_rows();
    if (!sd.shared.empty()) {
        int row0 = lp.num_rows();
        for (int r = 0; r < sd.shared.A.rows; ++r)
            lp.add_row(sd.shared.sense[static_cast<size_t>(r)], sd.shared.rhs[static_cast<size_t>(r)]);
        for (const auto& e : sd.shared.A.entries) lp.A.add(row0 + e.row, e.col, e.value);
    }
    layout.first_extra_row = lp.num_rows();
    return layout;
}

std::vector<int> positive_successors(const RecourseTemplate& tpl, int d, int m) {
    std::vector<int> out;
    if (d >= tpl.stage_count) return out;
    for (int n = 0; n < tpl.tree.state_count; ++n) {
        if (tpl.tree.transition_prob(d + 1, m, n) > 0.0) out.push_back(n);
    }
    return out;
}

StoreKey cut_key(const EnvelopeSet& env, int d_next, int m, int n) {
    if (env.mode() == EnvelopeMode::basic) return {d_next, m, n};
    return {d_next, -1, n};
}

struct SolveCheck {
    const StageInput& in;
    const LpProblem* lp = nullptr;
    LpSolution check(LpSolution sol) const {
        if (sol.status == LpStatus::infeasible) {
            throw RecourseInfeasibleError("recourse problem infeasible at " + where_str(in) +
                                          ": instance lacks relatively complete recourse at this point");
        }
        if (sol.status != LpStatus::optimal) {
            if (lp != nullptr) {
                if (const char* dump = std::getenv("MSSP_DUMP_FAILED_LP")) write_mps(*lp, dump, "FAILED");
            }
            throw NumericalError("stage solve failed (status " + std::to_string(static_cast<int>(sol.status)) +
                                 ") at " + where_str(in));
        }
        return sol;
    }
};

}  // namespace

std::vector<double> realization_bundle(const RecourseTemplate& tpl, int d, int l, int m) {
    std::vector<double> out;
    const int W = tpl.tree.scenario_count;
    out.reserve(static_cast<size_t>(W * tpl.b_dim[static_cast<size_t>(d - 1)]));
    for (int w = 0; w < W; ++w) {
        const auto& b = tpl.tree.realization(d, l, m, w);
        out.insert(out.end(), b.begin(), b.end());
    }
    return out;
}

StageResult solve_lower_stage(const StageInput& in, SimplexSolver& solver, const Basis* warm) {
    const RecourseTemplate& tpl = *in.tpl;
    const EnvelopeSet& env = *in.env;
    const int W = tpl.tree.scenario_count;
    const int ny = tpl.stages[static_cast<size_t>(in.d - 1)].y_dim();
    const int nb = tpl.b_dim[static_cast<size_t>(in.d - 1)];
    const int nx = static_cast<int>(in.x.size());
    const int nl = in.d >= 2 ? static_cast<int>(tpl.link_rows[static_cast<size_t>(in.d - 1)].size()) : 0;
    const double pw = 1.0 / static_cast<double>(W);
    const bool enhanced = env.mode() == EnvelopeMode::enhanced;

    LpProblem lp;
    std::vector<MatrixEntry> rhs_dep;
    RowLayout layout = build_base(in, lp, rhs_dep);

    const std::vector<int> succs = positive_successors(tpl, in.d, in.m);
    // cost-to-go variable per (scenario, successor)
    std::vector<std::vector<int>> theta_col(static_cast<size_t>(W), std::vector<int>(tpl.tree.state_count, -1));
    for (int w = 0; w < W; ++w) {
        for (int n : succs) {
            double p = tpl.tree.transition_prob(in.d + 1, in.m, n);
            theta_col[static_cast<size_t>(w)][static_cast<size_t>(n)] =
                lp.add_var(pw * p, tpl.value_lb(in.d + 1, n), kInf);
        }
    }

    // cut rows, ordered by insertion id so re-solves only append rows
    struct CutRef {
        std::uint64_t id;
        int n;
        const LowerCut* cut;
    };
    std::vector<CutRef> refs;
    for (int n : succs) {
        for (const LowerCut& c : env.cuts(cut_key(env, in.d + 1, in.m, n))) refs.push_back({c.id, n, &c});
    }
    std::sort(refs.begin(), refs.end(), [](const CutRef& a, const CutRef& b) { return a.id < b.id; });

    // Cuts describe the successor value as a function of the linked image
    // C_{d+1} y; rows below compose their sigma with the successor C.
    const SparseMatrix& succ_C = in.d < tpl.stage_count ? tpl.stages[static_cast<size_t>(in.d)].C : SparseMatrix{};
    const auto& succ_links = in.d < tpl.stage_count ? tpl.link_rows[static_cast<size_t>(in.d)] : std::vector<int>{};
    for (const CutRef& ref : refs) {
        const LowerCut& c = *ref.cut;
        std::vector<double> lam_eff;
        double base = c.theta;
        if (enhanced) {
            std::vector<double> succ_bundle = realization_bundle(tpl, in.d + 1, in.m, ref.n);
            lam_eff = c.lambda_at(succ_bundle);
            for (size_t j = 0; j < lam_eff.size(); ++j) base += lam_eff[j] * (in.x[j] - c.anchor_x[j]);
            for (size_t j = 0; j < c.nu.size(); ++j) base += c.nu[j] * (succ_bundle[j] - c.anchor_b[j]);
        }
        double sy = 0.0;
        for (size_t j = 0; j < c.sigma.size(); ++j) sy += c.sigma[j] * c.anchor_y[j];
        std::vector<double> ycoef(static_cast<size_t>(ny), 0.0);
        for (const auto& e : succ_C.entries) {
            auto it = std::lower_bound(succ_links.begin(), succ_links.end(), e.row);
            ycoef[static_cast<size_t>(e.col)] -= c.sigma[static_cast<size_t>(it - succ_links.begin())] * e.value;
        }
        for (int w = 0; w < W; ++w) {
            int r = lp.add_row(RowSense::ge, base - sy);
            lp.A.add(r, theta_col[static_cast<size_t>(w)][static_cast<size_t>(ref.n)], 1.0);
            for (int k = 0; k < ny; ++k) {
                if (ycoef[static_cast<size_t>(k)] != 0.0) lp.A.add(r, w * ny + k, ycoef[static_cast<size_t>(k)]);
            }
            if (enhanced) {
                for (size_t j = 0; j < lam_eff.size(); ++j) {
                    if (lam_eff[j] != 0.0) rhs_dep.push_back({r, static_cast<int>(j), lam_eff[j]});
                }
            }
        }
    }

    LpSolution sol = SolveCheck{in, &lp}.check(solver.solve(lp, warm));

    StageResult res;
    res.status = sol.status;
    res.theta = sol.objective;
    res.basis = std::move(sol.basis);
    res.y.assign(static_cast<size_t>(W), std::vector<double>(static_cast<size_t>(ny), 0.0));
    for (int w = 0; w < W; ++w) {
        for (int k = 0; k < ny; ++k) res.y[static_cast<size_t>(w)][static_cast<size_t>(k)] = sol.x[static_cast<size_t>(w * ny + k)];
    }
    res.cost_to_go.assign(static_cast<size_t>(W), std::vector<double>(static_cast<size_t>(tpl.tree.state_count), 0.0));
    for (int w = 0; w < W; ++w) {
        for (int n : succs) {
            res.cost_to_go[static_cast<size_t>(w)][static_cast<size_t>(n)] =
                sol.x[static_cast<size_t>(theta_col[static_cast<size_t>(w)][static_cast<size_t>(n)])];
        }
    }

    std::vector<double> grads = value_sensitivity(sol, rhs_dep, nx + nl + W * nb);
    if (enhanced) {
        res.lambda.assign(grads.begin(), grads.begin() + nx);
        res.nu.assign(grads.begin() + nx + nl, grads.end());
        const auto& varying = tpl.b_varying[static_cast<size_t>(in.d - 1)];
        const StageData& sd = tpl.stages[static_cast<size_t>(in.d - 1)];
        std::map<std::pair<int, int>, double> acc;
        for (int w = 0; w < W; ++w) {
            for (const auto& e : sd.B) {
                if (!varying[static_cast<size_t>(e.b_index)]) continue;
                double d = sol.duals[static_cast<size_t>(w * layout.a_rows_per_copy + e.row)];
                if (d != 0.0) acc[{e.x_index, w * nb + e.b_index}] += d * e.coeff;
            }
        }
        for (const auto& [key, v] : acc) {
            if (v != 0.0) res.cross.push_back({key.first, key.second, v});
        }
    }
    res.sigma.assign(grads.begin() + nx, grads.begin() + nx + nl);
    return res;
}

StageResult solve_upper_stage(const StageInput& in, SimplexSolver& solver, const Basis* warm) {
    const RecourseTemplate& tpl = *in.tpl;
    const EnvelopeSet& env = *in.env;
    if (in.d == tpl.stage_count) {
        // terminal stage: upper and lower problems are the same LP
        StageResult res = solve_lower_stage(in, solver, warm);
        res.lambda.clear();
        res.sigma.clear();
        res.nu.clear();
        return res;
    }

    const int W = tpl.tree.scenario_count;
    const int ny = tpl.stages[static_cast<size_t>(in.d - 1)].y_dim();
    const double pw = 1.0 / static_cast<double>(W);
    const bool enhanced = env.mode() == EnvelopeMode::enhanced;
    const std::vector<int> succs = positive_successors(tpl, in.d, in.m);

    for (int n : succs) {
        if (env.points(cut_key(env, in.d + 1, in.m, n)).empty()) {
            StageResult res;
            res.status = LpStatus::optimal;
            res.theta = kInf;
            return res;
        }
    }

    LpProblem lp;
    std::vector<MatrixEntry> rhs_dep;
    build_base(in, lp, rhs_dep);

    const int nbs = enhanced ? tpl.b_dim[static_cast<size_t>(in.d)] * W : 0;  // successor bundle length

    struct Block {
        int w, n;
        int theta = -1, gamma = -1, zeta = -1;  // first column of each group
        int link_row = -1, blink_row = -1, conv_row = -1, epi_row = -1;
    };
    std::vector<Block> blocks;
    for (int w = 0; w < W; ++w) {
        for (int n : succs) {
            Block blk;
            blk.w = w;
            blk.n = n;
            double p = tpl.tree.transition_prob(in.d + 1, in.m, n);
            blk.theta = lp.add_var(pw * p, -kInf, kInf);
            blocks.push_back(blk);
        }
    }
    for (auto& blk : blocks) {
        blk.gamma = lp.num_vars();
        for (int i = 0; i < 2 * ny; ++i) lp.add_var(0.0, 0.0, kInf);
        if (enhanced) {
            blk.zeta = lp.num_vars();
            for (int i = 0; i < 2 * nbs; ++i) lp.add_var(0.0, 0.0, kInf);
        }
    }
    for (auto& blk : blocks) {
        blk.link_row = lp.num_rows();
        for (int i = 0; i < ny; ++i) {
            int r = lp.add_row(RowSense::eq, 0.0);
            lp.A.add(r, blk.w * ny + i, -1.0);
            lp.A.add(r, blk.gamma + i, -1.0);
            lp.A.add(r, blk.gamma + ny + i, 1.0);
        }
        if (enhanced) {
            std::vector<double> succ_bundle = realization_bundle(tpl, in.d + 1, in.m, blk.n);
            blk.blink_row = lp.num_rows();
            for (int i = 0; i < nbs; ++i) {
                int r = lp.add_row(RowSense::eq, succ_bundle[static_cast<size_t>(i)]);
                lp.A.add(r, blk.zeta + i, -1.0);
                lp.A.add(r, blk.zeta + nbs + i, 1.0);
            }
        }
        blk.conv_row = lp.add_row(RowSense::eq, 1.0);
        blk.epi_row = lp.add_row(RowSense::ge, 0.0);
        lp.A.add(blk.epi_row, blk.theta, 1.0);
        for (int i = 0; i < 2 * ny; ++i) lp.A.add(blk.epi_row, blk.gamma + i, -tpl.M_y);
        if (enhanced) {
            for (int i = 0; i < 2 * nbs; ++i) lp.A.add(blk.epi_row, blk.zeta + i, -tpl.M_b);
        }
    }

    // mu columns, ordered by point insertion id for stable appends
    struct PointRef {
        std::uint64_t id;
        size_t block;
        const UpperPoint* pt;
    };
    std::vector<PointRef> refs;
    for (size_t bi = 0; bi < blocks.size(); ++bi) {
        for (const UpperPoint& p : env.points(cut_key(env, in.d + 1, in.m, blocks[bi].n))) refs.push_back({p.id, bi, &p});
    }
    std::sort(refs.begin(), refs.end(), [](const PointRef& a, const PointRef& b) {
        return a.id != b.id ? a.id < b.id : a.block < b.block;
    });
    for (const PointRef& ref : refs) {
        const Block& blk = blocks[ref.block];
        int mu = lp.add_var(0.0, 0.0, kInf);
        for (int i = 0; i < ny; ++i) {
            double v = ref.pt->anchor_y[static_cast<size_t>(i)];
            if (v != 0.0) lp.A.add(blk.link_row + i, mu, v);
        }
        if (enhanced) {
            for (int i = 0; i < nbs; ++i) {
                double v = ref.pt->anchor_b[static_cast<size_t>(i)];
                if (v != 0.0) lp.A.add(blk.blink_row + i, mu, v);
            }
        }
        lp.A.add(blk.conv_row, mu, 1.0);
        lp.A.add(blk.epi_row, mu, -ref.pt->theta);
    }

    LpSolution sol = SolveCheck{in, &lp}.check(solver.solve(lp, warm));

    StageResult res;
    res.status = sol.status;
    res.theta = sol.objective;
    res.basis = std::move(sol.basis);
    res.y.assign(static_cast<size_t>(W), std::vector<double>(static_cast<size_t>(ny), 0.0));
    for (int w = 0; w < W; ++w) {
        for (int k = 0; k < ny; ++k) res.y[static_cast<size_t>(w)][static_cast<size_t>(k)] = sol.x[static_cast<size_t>(w * ny + k)];
    }
    res.cost_to_go.assign(static_cast<size_t>(W), std::vector<double>(static_cast<size_t>(tpl.tree.state_count), 0.0));
    for (const Block& blk : blocks) {
        res.cost_to_go[static_cast<size_t>(blk.w)][static_cast<size_t>(blk.n)] = sol.x[static_cast<size_t>(blk.theta)];
    }
    return res;
}

std::vector<std::vector<double>> solve_upper_stage_fixed(const StageInput& in,
                                                         const std::vector<std::vector<double>>& y_trial,
                                                         SimplexSolver& solver,
                                                         std::map<long long, Basis>* basis_cache) {
    const RecourseTemplate& tpl = *in.tpl;
    const EnvelopeSet& env = *in.env;
    const int W = tpl.tree.scenario_count;
    const bool enhanced = env.mode() == EnvelopeMode::enhanced;
    std::vector<std::vector<double>> out(static_cast<size_t>(W),
                                         std::vector<double>(static_cast<size_t>(tpl.tree.state_count), kInf));
    if (in.d >= tpl.stage_count) return out;
    std::vector<double> empty;
    for (int n : positive_successors(tpl, in.d, in.m)) {
        std::vector<double> succ_bundle = enhanced ? realization_bundle(tpl, in.d + 1, in.m, n) : empty;
        Basis* warm = nullptr;
        if (basis_cache != nullptr) {
            long long key = ((static_cast<long long>(in.d + 1) * 4096) + in.m) * 4096 + n;
            auto it = basis_cache->find(key);
            if (it != basis_cache->end()) warm = &it->second;
        }
        for (int w = 0; w < W; ++w) {
            out[static_cast<size_t>(w)][static_cast<size_t>(n)] = env.eval_upper(
                cut_key(env, in.d + 1, in.m, n), y_trial[static_cast<size_t>(w)], succ_bundle, tpl.M_y, tpl.M_b,
                solver, warm);
        }
    }
    return out;
}

}  // namespace mssp
