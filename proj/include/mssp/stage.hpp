#pragma once

#include <map>
#include <span>
#include <vector>

#include "mssp/envelopes.hpp"
#include "mssp/lp.hpp"
#include "mssp/model.hpp"

namespace mssp {

// Per-stage problems. The lower problem minimizes stage cost plus cut-max
// cost-to-go variables; the upper problem replaces them with the Lipschitz
// convex-combination system over stored points. At the terminal stage both
// coincide with the plain stage LP.

struct StageInput {
    const RecourseTemplate* tpl = nullptr;
    const EnvelopeSet* env = nullptr;
    int d = 1;  // stage, 1-based
    int l = -1; // predecessor state, -1 at d == 1
    int m = 0;  // state
    std::span<const double> x;       // node subvector
    std::span<const double> y_prev;  // realized previous-stage copy, empty at d == 1
};

struct StageResult {
    LpStatus status = LpStatus::numerical_failure;
    double theta = kInf;
    std::vector<std::vector<double>> y;           // [scenario][var]
    std::vector<std::vector<double>> cost_to_go;  // [scenario][successor], valid where transition prob > 0
    std::vector<double> lambda;  // w.r.t. x (lower solves, enhanced mode)
    std::vector<double> sigma;   // w.r.t. y_prev (lower solves)
    std::vector<double> nu;      // w.r.t. this stage's realization bundle (lower solves, enhanced mode)
    std::vector<MatrixEntry> cross;  // dual-weighted coupling tensor, see LowerCut::cross
    Basis basis;
};

/// Concatenated realization vectors {b^{lmw}_d, w in scenarios}.
std::vector<double> realization_bundle(const RecourseTemplate& tpl, int d, int l, int m);

StageResult solve_lower_stage(const StageInput& in, SimplexSolver& solver, const Basis* warm = nullptr);

/// Returns theta = +inf (without solving) when a successor point store
/// needed with positive probability is empty.
StageResult solve_upper_stage(const StageInput& in, SimplexSolver& solver, const Basis* warm = nullptr);

/// Upper problem with y fixed to a trial decision: decomposes into one
/// envelope evaluation per (scenario, successor); +inf entries allowed.
/// `basis_cache`, when given, must hold pre-created entries for every key
/// ((stage * 4096) + state) * 4096 + successor used here.
std::vector<std::vector<double>> solve_upper_stage_fixed(const StageInput& in,
                                                         const std::vector<std::vector<double>>& y_trial,
                                                         SimplexSolver& solver,
                                                         std::map<long long, Basis>* basis_cache = nullptr);

}  // namespace mssp
