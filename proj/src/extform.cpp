#include "mssp/extform.hpp"

#include <cmath>
#include <string>

namespace mssp {

namespace {

struct Block {
    int d = 1;
    int state = 0;
    int pred = -1;
    int parent = -1;       // block index
    int parent_copy = 0;   // which scenario copy of the parent it chains from
    double prob = 0.0;     // probability of reaching this block
    int col0 = 0;
};

// Enumerates the unfolded block tree for one node and appends its variables
// and rows to `lp`. When x_cols is empty the master point `x` is fixed data;
// otherwise x_cols maps the node subvector onto master LP columns.
void append_tree(LpProblem& lp, const Instance& inst, int node_index, std::span<const double> x,
                 std::span<const int> x_cols, double weight, long long var_cap, const std::string& who) {
    const NodeSpec& node = inst.master.nodes[static_cast<size_t>(node_index)];
    const RecourseTemplate& tpl = inst.recourse_for(node);
    const int W = tpl.tree.scenario_count;
    const int M = tpl.tree.state_count;
    const double pw = 1.0 / static_cast<double>(W);

    std::vector<Block> blocks;
    for (int m = 0; m < M; ++m) {
        if (tpl.tree.initial_probs[static_cast<size_t>(m)] <= 0.0) continue;
        blocks.push_back({1, m, -1, -1, 0, tpl.tree.initial_probs[static_cast<size_t>(m)], 0});
    }
    for (size_t bi = 0; bi < blocks.size(); ++bi) {
        Block blk = blocks[bi];  // copy: vector grows below
        if (blk.d == tpl.stage_count) continue;
        for (int w = 0; w < W; ++w) {
            for (int n = 0; n < M; ++n) {
                double p = tpl.tree.transition_prob(blk.d + 1, blk.state, n);
                if (p <= 0.0) continue;
                blocks.push_back({blk.d + 1, n, blk.state, static_cast<int>(bi), w, blk.prob * pw * p, 0});
            }
        }
        if (static_cast<long long>(blocks.size()) * W > var_cap) {
            throw CapExceededError("extensive form for " + who + " exceeds the variable cap of " +
                                   std::to_string(var_cap));
        }
    }

    long long vars = 0;
    for (const Block& blk : blocks) vars += static_cast<long long>(W) * tpl.stages[static_cast<size_t>(blk.d - 1)].y_dim();
    if (vars + lp.num_vars() > var_cap) {
        throw CapExceededError("extensive form for " + who + " needs " + std::to_string(vars) +
                               " variables, above the cap of " + std::to_string(var_cap));
    }

    for (Block& blk : blocks) {
        const StageData& sd = tpl.stages[static_cast<size_t>(blk.d - 1)];
        const int ny = sd.y_dim();
        blk.col0 = lp.num_vars();
        for (int w = 0; w < W; ++w) {
            for (int k = 0; k < ny; ++k) {
                lp.add_var(weight * blk.prob * pw * sd.cost[static_cast<size_t>(k)], sd.y_lower[static_cast<size_t>(k)],
                           sd.y_upper[static_cast<size_t>(k)]);
            }
        }
    }

    for (const Block& blk : blocks) {
        const StageData& sd = tpl.stages[static_cast<size_t>(blk.d - 1)];
        const int ny = sd.y_dim();
        for (int w = 0; w < W; ++w) {
            const auto& b = tpl.tree.realization(blk.d, blk.pred, blk.state, w);
            std::vector<double> rhs(static_cast<size_t>(sd.A.rows), 0.0);
            if (x_cols.empty()) {
                for (const auto& e : sd.B)
                    rhs[static_cast<size_t>(e.row)] += x[static_cast<size_t>(e.x_index)] * e.coeff * b[static_cast<size_t>(e.b_index)];
            }
            int row0 = lp.num_rows();
            for (int r = 0; r < sd.A.rows; ++r) lp.add_row(RowSense::le, rhs[static_cast<size_t>(r)]);
            for (const auto& e : sd.A.entries) lp.A.add(row0 + e.row, blk.col0 + w * ny + e.col, e.value);
            if (!x_cols.empty()) {
                for (const auto& e : sd.B) {
                    lp.A.add(row0 + e.row, x_cols[static_cast<size_t>(e.x_index)], -e.coeff * b[static_cast<size_t>(e.b_index)]);
                }
            }
            if (blk.d >= 2) {
                const Block& par = blocks[static_cast<size_t>(blk.parent)];
                int prev_ny = tpl.stages[static_cast<size_t>(blk.d - 2)].y_dim();
                for (const auto& e : sd.C.entries) {
                    lp.A.add(row0 + e.row, par.col0 + blk.parent_copy * prev_ny + e.col, -e.value);
                }
            }
        }
        if (!sd.shared.empty()) {
            int row0 = lp.num_rows();
            for (int r = 0; r < sd.shared.A.rows; ++r)
                lp.add_row(sd.shared.sense[static_cast<size_t>(r)], sd.shared.rhs[static_cast<size_t>(r)]);
            for (const auto& e : sd.shared.A.entries) lp.A.add(row0 + e.row, blk.col0 + e.col, e.value);
        }
    }
}

}  // namespace

double extform_value(const Instance& instance, int node_index, std::span<const double> x, const ExtformOptions& opts) {
    LpProblem lp;
    append_tree(lp, instance, node_index, x, {}, 1.0, opts.var_cap, "node " + std::to_string(node_index));
    SimplexSolver solver(opts.lp);
    LpSolution sol = solver.solve(lp);
    if (sol.status == LpStatus::infeasible) {
        throw RecourseInfeasibleError("extensive form infeasible for node " + std::to_string(node_index));
    }
    if (sol.status != LpStatus::optimal) {
        throw NumericalError("extensive form solve failed for node " + std::to_string(node_index));
    }
    return sol.objective;
}

ExtformFullResult extform_full(const Instance& instance, const ExtformOptions& opts) {
    const MasterInstance& mi = instance.master;
    LpProblem lp;
    for (int j = 0; j < mi.num_vars(); ++j)
        lp.add_var(mi.cost[static_cast<size_t>(j)], mi.lower[static_cast<size_t>(j)], mi.upper[static_cast<size_t>(j)]);
    if (!mi.constraints.empty()) {
        int row0 = lp.num_rows();
        for (int r = 0; r < mi.constraints.A.rows; ++r)
            lp.add_row(mi.constraints.sense[static_cast<size_t>(r)], mi.constraints.rhs[static_cast<size_t>(r)]);
        for (const auto& e : mi.constraints.A.entries) lp.A.add(row0 + e.row, e.col, e.value);
    }

    for (size_t i = 0; i < mi.nodes.size(); ++i) {
        const NodeSpec& node = mi.nodes[i];
        if (node.probability <= 0.0) continue;
        append_tree(lp, instance, static_cast<int>(i), {}, node.x_indices, node.probability, opts.var_cap,
                    "node " + std::to_string(i));
    }

    SimplexSolver solver(opts.lp);
    LpSolution sol = solver.solve(lp);
    if (sol.status == LpStatus::infeasible) throw RecourseInfeasibleError("full extensive form infeasible");
    if (sol.status != LpStatus::optimal) throw NumericalError("full extensive form solve failed");

    ExtformFullResult out;
    out.objective = sol.objective;
    out.x.assign(sol.x.begin(), sol.x.begin() + mi.num_vars());
    return out;
}

}  // namespace mssp
