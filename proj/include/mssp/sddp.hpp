#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "mssp/envelopes.hpp"
#include "mssp/stage.hpp"

namespace mssp {

// SDDP with deterministic valid bounds on both sides, a gap-driven
// path-search forward pass, and (in enhanced mode) cuts parametric in the
// master point and realization bundle that are shared across all predecessor
// states. One run solves one node's recourse problem at a fixed master
// subvector to delta-optimality.

enum class SddpMode { basic, enhanced };

struct SddpOptions {
    SddpMode mode = SddpMode::enhanced;
    double delta = 1e-4;
    int iteration_cap = 10000;
    int workers = 1;
    LpOptions lp;
    // Upper stage problems beyond this row count are valued by the
    // fixed-trial completion (stage cost at the trial plus per-successor
    // envelope evaluations) instead of the free minimization: the same
    // candidate the convergence argument bounds, so still a valid upper
    // value, just not the tightest one.
    int upper_exact_row_limit = 900;
};

struct SddpTraceRow {
    int k = 0;
    double theta_lb = -kInf;
    double theta_ub = kInf;
    int depth = 0;  // forward stop depth
    double wall_ms = 0.0;
    bool early_stop = false;  // forward pass stopped by the gap rule
    double pair_gap = kInf;   // upper-lower gap of the paired solve at the stop depth
};

struct SddpResult {
    double theta_lb = -kInf;
    double theta_ub = kInf;
    std::vector<double> lambda;  // subgradient w.r.t. x (enhanced mode)
    std::vector<SddpTraceRow> trace;
    int iterations = 0;
};

struct TrajectoryEntry {
    int d = 1;
    int m = 0;
    int pred = -1;        // previous-stage state (-1 at d == 1)
    int omega_prev = -1;  // scenario copy of the parent the path descends through
    std::vector<std::vector<double>> y;  // trial decisions, [scenario][var]
};

struct ForwardResult {
    std::vector<TrajectoryEntry> path;  // solved depths 1..depth_hat
    int depth_hat = 0;
    bool early_stop = false;
};

/// In-progress solve of one subproblem; owns first-stage bounds and the
/// per-(stage, state) basis cache. The envelope set may outlive the run.
struct SddpRun {
    const Instance* instance = nullptr;
    int node_index = 0;
    const RecourseTemplate* tpl = nullptr;
    std::vector<double> x;
    SddpOptions opts;
    EnvelopeSet* env = nullptr;
    std::vector<double> lb1, ub1;          // first-stage bounds per state
    std::vector<std::vector<double>> lambda1;
    int k = 0;
    std::map<long long, Basis> basis_cache;
    // pre-created per (stage, state, successor) so parallel workers touch
    // disjoint entries without reshaping the map
    std::map<long long, Basis> envelope_basis;
};

ForwardResult forward_pass(SddpRun& run, SimplexSolver& solver);

/// Re-solves the trajectory depths bottom-up inserting cuts and points;
/// returns the paired solve gap at the stop depth (depth >= 2 handled here,
/// depth 1 by the first-stage refresh).
double backward_pass(SddpRun& run, const ForwardResult& fwd);

SddpResult run_sddp(const Instance& instance, int node_index, std::span<const double> x, const SddpOptions& opts,
                    EnvelopeSet* shared_env = nullptr);

/// Trace CSV: columns k, theta_lb, theta_ub, depth, wall_ms. `header_lines`
/// are written first as '#' comments.
void write_sddp_trace(const std::string& path, const std::vector<SddpTraceRow>& trace,
                      const std::vector<std::string>& header_lines);

}  // namespace mssp
