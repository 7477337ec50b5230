#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mssp/envelopes.hpp"
#include "mssp/model.hpp"
#include "mssp/oracle.hpp"
#include "mssp/sddp.hpp"

namespace mssp {

// Adaptive Benders decomposition: iterate a relaxed master over cutting
// planes, query the adaptive oracles at every node, and solve exactly (via
// enhanced SDDP by default) only the worst-weighted-gap node until the gap
// closes to epsilon. Oracle records and SDDP envelopes persist across
// iterations, one family per recourse template.

struct SubproblemExact {
    double theta_lb = 0.0;
    double theta_ub = 0.0;
    std::vector<double> lambda;
};

/// Exact (delta-optimal) subproblem solver at a node subvector.
using ExactSubproblemFn = std::function<SubproblemExact(int node_index, std::span<const double> x)>;

struct BendersOptions {
    double epsilon = 1e-3;
    double delta = 1e-4;
    int iteration_cap = 1000;
    int sddp_iteration_cap = 10000;
    int workers = 1;
    LpOptions lp;
    std::string trace_path;  // when set, the trace is rewritten every iteration
    std::vector<std::string> trace_header;
    bool verbose = false;    // per-iteration progress on stderr
};

struct BendersTraceRow {
    int w = 0;
    double lower = -kInf;
    double upper = kInf;
    int chosen_node = -1;  // last exactly solved node this iteration
    int exact_solves = 0;
    double wall_ms = 0.0;
};

struct BendersResult {
    std::vector<double> x;  // incumbent master decisions (at the best upper bound)
    double lower = -kInf;
    double upper = kInf;
    std::vector<BendersTraceRow> trace;
    int iterations = 0;
    int total_exact_solves = 0;
    std::vector<double> node_lower, node_upper;  // oracle bounds at the incumbent
};

struct RmpCut {
    double theta = 0.0;
    std::vector<double> lambda;
    std::vector<double> anchor;
};

struct BendersState {
    const Instance* instance = nullptr;
    BendersOptions opts;
    std::vector<std::vector<RmpCut>> cut_pool;  // per node
    std::map<std::string, OracleStore> oracles;  // per recourse template
    std::map<std::string, EnvelopeSet> envelopes;
    double lower = -kInf;
    double upper = kInf;
    int w = 0;
};

struct RmpSolution {
    std::vector<double> x;
    std::vector<double> beta;
    double lower = 0.0;  // optimal RMP objective
};

/// Throws ValidationError on an infeasible master; an unbounded RMP means a
/// node has no seed cut and is reported as such.
RmpSolution solve_rmp(const BendersState& state, SimplexSolver& solver);

BendersResult run_benders(const Instance& instance, const BendersOptions& opts,
                          const ExactSubproblemFn& exact = nullptr);

void write_benders_trace(const std::string& path, const std::vector<BendersTraceRow>& trace,
                         const std::vector<std::string>& header_lines);

std::string benders_solution_json(const BendersResult& result);

}  // namespace mssp
