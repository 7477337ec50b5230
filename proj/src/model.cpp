#include "mssp/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace mssp {

namespace {

void check(bool ok, const std::string& msg) {
    if (!ok) throw ValidationError(msg);
}

std::string at_stage(const std::string& ref, int d) {
    std::ostringstream s;
    s << " (recourse '" << ref << "', stage " << d << ")";
    return s.str();
}

void validate_matrix(const SparseMatrix& M, int rows, int cols, const std::string& what) {
    check(M.rows == rows && M.cols == cols,
          "dimension-mismatch: " + what + " must be " + std::to_string(rows) + "x" + std::to_string(cols) +
              ", got " + std::to_string(M.rows) + "x" + std::to_string(M.cols));
    for (const auto& e : M.entries) {
        check(e.row >= 0 && e.row < rows && e.col >= 0 && e.col < cols, "dimension-mismatch: entry out of range in " + what);
        check(std::isfinite(e.value), "dimension-mismatch: non-finite coefficient in " + what);
    }
}

void validate_template(const std::string& ref, RecourseTemplate& t) {
    check(t.stage_count >= 2, "stage-count error: recourse '" + ref + "' needs at least 2 stages (path-search threshold divides by stage_count - 1)");
    check(static_cast<int>(t.stages.size()) == t.stage_count, "dimension-mismatch: stage list size" + at_stage(ref, 0));
    check(std::isfinite(t.M_y) && t.M_y > 0, "nonpositive-Lipschitz: M_y must be finite and > 0 in recourse '" + ref + "'");
    check(std::isfinite(t.M_b) && t.M_b > 0, "nonpositive-Lipschitz: M_b must be finite and > 0 in recourse '" + ref + "'");

    const FoldedTree& tree = t.tree;
    check(tree.state_count >= 1, "dimension-mismatch: state_count < 1 in recourse '" + ref + "'");
    check(tree.scenario_count >= 1, "dimension-mismatch: scenario_count < 1 in recourse '" + ref + "'");
    check(static_cast<int>(tree.initial_probs.size()) == tree.state_count,
          "dimension-mismatch: initial_probs size" + at_stage(ref, 1));
    double sum = 0.0;
    for (double p : tree.initial_probs) {
        check(p >= 0.0, "probability-sum: negative initial state probability in recourse '" + ref + "'");
        sum += p;
    }
    check(std::abs(sum - 1.0) <= 1e-9,
          "probability-sum: initial state probabilities sum to " + std::to_string(sum) + " in recourse '" + ref + "'");
    check(static_cast<int>(tree.transition.size()) == t.stage_count - 1,
          "dimension-mismatch: transition probability stages" + at_stage(ref, 2));
    for (int d = 2; d <= t.stage_count; ++d) {
        const auto& td = tree.transition[static_cast<size_t>(d - 2)];
        check(static_cast<int>(td.size()) == tree.state_count, "dimension-mismatch: transition rows" + at_stage(ref, d));
        for (int l = 0; l < tree.state_count; ++l) {
            check(static_cast<int>(td[static_cast<size_t>(l)].size()) == tree.state_count,
                  "dimension-mismatch: transition cols" + at_stage(ref, d));
            double s = 0.0;
            for (double p : td[static_cast<size_t>(l)]) {
                check(p >= 0.0, "probability-sum: negative transition probability" + at_stage(ref, d));
                s += p;
            }
            check(std::abs(s - 1.0) <= 1e-9,
                  "probability-sum: transition probabilities from state " + std::to_string(l) + " sum to " +
                      std::to_string(s) + at_stage(ref, d));
        }
    }

    check(static_cast<int>(tree.realizations.size()) == t.stage_count, "dimension-mismatch: realization stages" + at_stage(ref, 0));
    t.b_dim.assign(static_cast<size_t>(t.stage_count), 0);
    t.b_varying.assign(static_cast<size_t>(t.stage_count), {});
    t.link_rows.assign(static_cast<size_t>(t.stage_count), {});
    for (int d = 2; d <= t.stage_count; ++d) {
        std::set<int> rows;
        for (const auto& e : t.stages[static_cast<size_t>(d - 1)].C.entries) rows.insert(e.row);
        t.link_rows[static_cast<size_t>(d - 1)].assign(rows.begin(), rows.end());
    }

    int max_x = -1;
    for (int d = 1; d <= t.stage_count; ++d) {
        StageData& sd = t.stages[static_cast<size_t>(d - 1)];
        int ny = sd.y_dim();
        check(ny >= 1, "dimension-mismatch: empty stage decision vector" + at_stage(ref, d));
        check(static_cast<int>(sd.y_lower.size()) == ny && static_cast<int>(sd.y_upper.size()) == ny,
              "dimension-mismatch: stage bound vectors" + at_stage(ref, d));
        for (int k = 0; k < ny; ++k) {
            check(std::isfinite(sd.y_lower[static_cast<size_t>(k)]) && std::isfinite(sd.y_upper[static_cast<size_t>(k)]),
                  "unbounded-variable: stage decision variable " + std::to_string(k) + " needs finite bounds" + at_stage(ref, d));
            check(sd.y_lower[static_cast<size_t>(k)] <= sd.y_upper[static_cast<size_t>(k)],
                  "unbounded-variable: crossed bounds on stage variable " + std::to_string(k) + at_stage(ref, d));
        }
        validate_matrix(sd.A, sd.A.rows, ny, "A" + at_stage(ref, d));
        if (d >= 2) {
            int prev_ny = t.stages[static_cast<size_t>(d - 2)].y_dim();
            validate_matrix(sd.C, sd.A.rows, prev_ny, "C" + at_stage(ref, d));
        } else {
            check(sd.C.entries.empty(), "dimension-mismatch: first stage cannot reference previous decisions" + at_stage(ref, d));
        }
        // realizations at this stage: [l][m][w], with l collapsed at d = 1
        const auto& rd = tree.realizations[static_cast<size_t>(d - 1)];
        int lsize = d == 1 ? 1 : tree.state_count;
        check(static_cast<int>(rd.size()) == lsize, "dimension-mismatch: realization predecessor dimension" + at_stage(ref, d));
        int bdim = -1;
        for (const auto& rl : rd) {
            check(static_cast<int>(rl.size()) == tree.state_count, "dimension-mismatch: realization state dimension" + at_stage(ref, d));
            for (const auto& rm : rl) {
                check(static_cast<int>(rm.size()) == tree.scenario_count,
                      "dimension-mismatch: realization scenario dimension" + at_stage(ref, d));
                for (const auto& rv : rm) {
                    if (bdim < 0) bdim = static_cast<int>(rv.size());
                    check(static_cast<int>(rv.size()) == bdim, "dimension-mismatch: realization vector length varies" + at_stage(ref, d));
                    for (double v : rv) check(std::isfinite(v), "dimension-mismatch: non-finite realization" + at_stage(ref, d));
                }
            }
        }
        check(bdim >= 1, "dimension-mismatch: empty realization vectors" + at_stage(ref, d));
        t.b_dim[static_cast<size_t>(d - 1)] = bdim;
        std::vector<bool> varying(static_cast<size_t>(bdim), false);
        const std::vector<double>& first = rd[0][0][0];
        for (const auto& rl : rd) {
            for (const auto& rm : rl) {
                for (const auto& rv : rm) {
                    for (int k = 0; k < bdim; ++k) {
                        if (std::abs(rv[static_cast<size_t>(k)] - first[static_cast<size_t>(k)]) > 1e-12)
                            varying[static_cast<size_t>(k)] = true;
                    }
                }
            }
        }
        t.b_varying[static_cast<size_t>(d - 1)] = std::move(varying);

        for (const auto& e : sd.B) {
            check(e.row >= 0 && e.row < sd.A.rows, "dimension-mismatch: coupling row out of range" + at_stage(ref, d));
            check(e.b_index >= 0 && e.b_index < bdim,
                  "dimension-mismatch: coupling b index " + std::to_string(e.b_index) + " exceeds realization length" + at_stage(ref, d));
            check(e.x_index >= 0, "dimension-mismatch: negative coupling x index" + at_stage(ref, d));
            check(std::isfinite(e.coeff), "dimension-mismatch: non-finite coupling coefficient" + at_stage(ref, d));
            max_x = std::max(max_x, e.x_index);
        }
    }
    t.x_dim = max_x + 1;

    // shared constraint systems span all scenario copies of the stage
    for (int d = 1; d <= t.stage_count; ++d) {
        StageData& sd = t.stages[static_cast<size_t>(d - 1)];
        if (sd.shared.empty()) continue;
        int want_cols = sd.y_dim() * tree.scenario_count;
        check(sd.shared.A.cols == want_cols,
              "dimension-mismatch: shared constraints expect " + std::to_string(want_cols) + " columns" + at_stage(ref, d));
        check(static_cast<int>(sd.shared.sense.size()) == sd.shared.A.rows &&
                  static_cast<int>(sd.shared.rhs.size()) == sd.shared.A.rows,
              "dimension-mismatch: shared constraint row data" + at_stage(ref, d));
    }

    check(static_cast<int>(t.stage_value_lb.size()) == t.stage_count,
          "dimension-mismatch: stage_value_lb needs one row per stage in recourse '" + ref + "'");
    for (int d = 1; d <= t.stage_count; ++d) {
        check(static_cast<int>(t.stage_value_lb[static_cast<size_t>(d - 1)].size()) == tree.state_count,
              "dimension-mismatch: stage_value_lb needs one entry per state" + at_stage(ref, d));
        for (double v : t.stage_value_lb[static_cast<size_t>(d - 1)])
            check(std::isfinite(v), "dimension-mismatch: non-finite stage_value_lb" + at_stage(ref, d));
    }
}

}  // namespace

Instance validate_instance(Instance instance) {
    MasterInstance& mi = instance.master;
    int nx = mi.num_vars();
    check(nx >= 1, "dimension-mismatch: master has no variables");
    check(static_cast<int>(mi.lower.size()) == nx && static_cast<int>(mi.upper.size()) == nx,
          "dimension-mismatch: master bound vectors");
    for (int j = 0; j < nx; ++j) {
        check(std::isfinite(mi.lower[static_cast<size_t>(j)]) && std::isfinite(mi.upper[static_cast<size_t>(j)]),
              "unbounded-variable: master variable " + std::to_string(j) + " needs finite bounds");
        check(mi.lower[static_cast<size_t>(j)] <= mi.upper[static_cast<size_t>(j)],
              "unbounded-variable: crossed bounds on master variable " + std::to_string(j));
        check(std::isfinite(mi.cost[static_cast<size_t>(j)]), "dimension-mismatch: non-finite master cost");
    }
    if (mi.monotone_direction.empty()) mi.monotone_direction.assign(static_cast<size_t>(nx), 1);
    check(static_cast<int>(mi.monotone_direction.size()) == nx, "dimension-mismatch: monotone_direction size");
    for (int v : mi.monotone_direction) check(v == 1 || v == -1, "dimension-mismatch: monotone_direction entries must be +1 or -1");

    if (!mi.constraints.empty()) {
        validate_matrix(mi.constraints.A, mi.constraints.A.rows, nx, "master constraints");
        check(static_cast<int>(mi.constraints.sense.size()) == mi.constraints.A.rows &&
                  static_cast<int>(mi.constraints.rhs.size()) == mi.constraints.A.rows,
              "dimension-mismatch: master constraint row data");
        for (RowSense s : mi.constraints.sense)
            check(s != RowSense::eq, "dimension-mismatch: master constraints use paired inequalities instead of equalities");
    }

    check(!mi.nodes.empty(), "dimension-mismatch: instance has no decision nodes");
    for (size_t i = 0; i < mi.nodes.size(); ++i) {
        const NodeSpec& node = mi.nodes[i];
        check(node.probability >= 0.0, "probability-sum: node " + std::to_string(i) + " has negative probability");
        check(!node.x_indices.empty(), "dimension-mismatch: node " + std::to_string(i) + " has empty x_indices");
        for (int xi : node.x_indices)
            check(xi >= 0 && xi < nx, "dimension-mismatch: node " + std::to_string(i) + " references master variable " + std::to_string(xi));
        check(node.demand_level > 0.0, "dimension-mismatch: node " + std::to_string(i) + " needs demand_level > 0");
        check(instance.recourse.count(node.recourse_ref) == 1,
              "dimension-mismatch: node " + std::to_string(i) + " references unknown recourse '" + node.recourse_ref + "'");
    }

    for (auto& [ref, tpl] : instance.recourse) validate_template(ref, tpl);

    // node subvectors must cover every x index the coupling tensor touches
    for (size_t i = 0; i < mi.nodes.size(); ++i) {
        const auto& tpl = instance.recourse.at(mi.nodes[i].recourse_ref);
        check(static_cast<int>(mi.nodes[i].x_indices.size()) >= tpl.x_dim,
              "dimension-mismatch: node " + std::to_string(i) + " supplies " +
                  std::to_string(mi.nodes[i].x_indices.size()) + " master components but recourse '" +
                  mi.nodes[i].recourse_ref + "' couples " + std::to_string(tpl.x_dim));
    }

    instance.validated = true;
    return instance;
}

std::vector<double> link_image(const RecourseTemplate& tpl, int d, std::span<const double> y_prev) {
    std::vector<double> out;
    if (d < 2) return out;
    const auto& rows = tpl.link_rows[static_cast<size_t>(d - 1)];
    out.assign(rows.size(), 0.0);
    const SparseMatrix& C = tpl.stages[static_cast<size_t>(d - 1)].C;
    for (const auto& e : C.entries) {
        auto it = std::lower_bound(rows.begin(), rows.end(), e.row);
        out[static_cast<size_t>(it - rows.begin())] += e.value * y_prev[static_cast<size_t>(e.col)];
    }
    return out;
}

std::vector<double> node_subvector(const Instance& inst, int node_index, std::span<const double> x_full) {
    const NodeSpec& node = inst.master.nodes[static_cast<size_t>(node_index)];
    std::vector<double> x;
    x.reserve(node.x_indices.size());
    for (int j : node.x_indices) x.push_back(x_full[static_cast<size_t>(j)]);
    return x;
}

}  // namespace mssp
