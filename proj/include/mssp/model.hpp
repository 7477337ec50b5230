#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "mssp/sparse.hpp"

namespace mssp {

// Problem instances: a master LP over investment-like variables x plus a set
// of decision nodes, each pricing a multistage stochastic recourse problem at
// the node's subvector x_i. Recourse stages couple through
//
//     A_d y_d <= xᵀB_d b_d + C_d y_{d-1},
//
// where b_d is drawn from a folded (Markov-state) scenario tree. Instances
// are immutable after validation and safe to share across threads.

/// rhs[row] += x[x_index] * coeff * b[b_index]
struct CouplingEntry {
    int row = 0;
    int x_index = 0;
    int b_index = 0;
    double coeff = 0.0;
};

struct StageData {
    SparseMatrix A;                   // rows x y_dim, every row <= sense
    SparseMatrix C;                   // rows x y_dim, previous-stage linkage
    std::vector<double> cost;         // y_dim
    std::vector<CouplingEntry> B;     // x/b coupling into row rhs
    LinearSystem shared;              // optional rows over all scenario copies
    std::vector<double> y_lower;      // y_dim, finite
    std::vector<double> y_upper;      // y_dim, finite
    int y_dim() const { return static_cast<int>(cost.size()); }
};

struct FoldedTree {
    int state_count = 0;
    int scenario_count = 0;
    std::vector<double> initial_probs;                            // [m]
    std::vector<std::vector<std::vector<double>>> transition;     // [d-2][l][m], d = 2..stage_count
    // realizations[d-1][l][m][w] -> coefficient vector; l has size 1 at d=1
    std::vector<std::vector<std::vector<std::vector<std::vector<double>>>>> realizations;

    double transition_prob(int d, int l, int m) const {
        if (d == 1) return initial_probs[static_cast<size_t>(m)];
        return transition[static_cast<size_t>(d - 2)][static_cast<size_t>(l)][static_cast<size_t>(m)];
    }
    const std::vector<double>& realization(int d, int l, int m, int w) const {
        int li = d == 1 ? 0 : l;
        return realizations[static_cast<size_t>(d - 1)][static_cast<size_t>(li)][static_cast<size_t>(m)]
                           [static_cast<size_t>(w)];
    }
};

struct RecourseTemplate {
    int stage_count = 0;  // >= 2
    double M_y = 0.0;     // Lipschitz cap on subgradients w.r.t. previous-stage decisions (L1)
    double M_b = 0.0;     // Lipschitz cap on subgradients w.r.t. realization bundles (L1)
    std::vector<std::vector<double>> stage_value_lb;  // [d][m], valid cost-to-go underestimate
    std::vector<StageData> stages;                    // size stage_count
    FoldedTree tree;

    // derived by validation
    int x_dim = 0;                  // length of the node subvector this template expects
    std::vector<int> b_dim;         // per stage, realization vector length
    // b_varying[d-1][k]: whether coordinate k differs across the stage's
    // realizations; constant coordinates carry no bundle sensitivity
    std::vector<std::vector<bool>> b_varying;
    // link_rows[d-1]: sorted rows of A_d that C_d feeds. Only the linked
    // image C_d y_{d-1} reaches stage d, so value functions are anchored on
    // that (usually tiny) subspace rather than on the full decision vector.
    std::vector<std::vector<int>> link_rows;

    double value_lb(int d, int m) const { return stage_value_lb[static_cast<size_t>(d - 1)][static_cast<size_t>(m)]; }
};

struct NodeSpec {
    double probability = 0.0;
    std::vector<int> x_indices;  // selects x_i from the master vector
    std::string recourse_ref;
    double demand_level = 1.0;
};

struct MasterInstance {
    std::vector<double> cost;
    LinearSystem constraints;  // senses restricted to <= and >=
    std::vector<double> lower;  // finite
    std::vector<double> upper;  // finite
    std::vector<NodeSpec> nodes;
    // +1: the recourse value is nonincreasing in this variable (capacity-like),
    // -1: nondecreasing (demand-like). Drives the monotone upper oracle.
    std::vector<int> monotone_direction;

    int num_vars() const { return static_cast<int>(cost.size()); }
};

struct Instance {
    MasterInstance master;
    std::map<std::string, RecourseTemplate> recourse;
    bool validated = false;

    const RecourseTemplate& recourse_for(const NodeSpec& node) const { return recourse.at(node.recourse_ref); }
    const RecourseTemplate& recourse_for(int node_index) const {
        return recourse_for(master.nodes[static_cast<size_t>(node_index)]);
    }
};

/// Checks every structural invariant and fills derived dimensions. Throws
/// ValidationError naming the offending stage/node. Idempotent.
Instance validate_instance(Instance instance);

/// Selects the node subvector x_i from a full master vector.
std::vector<double> node_subvector(const Instance& inst, int node_index, std::span<const double> x_full);

/// The stage-d linked image C_d y of a previous-stage copy, one entry per
/// link row of stage d. Empty at d == 1.
std::vector<double> link_image(const RecourseTemplate& tpl, int d, std::span<const double> y_prev);

}  // namespace mssp
