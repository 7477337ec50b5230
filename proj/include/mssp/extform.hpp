#pragma once

#include <span>
#include <vector>

#include "mssp/lp.hpp"
#include "mssp/model.hpp"

namespace mssp {

// Brute-force deterministic equivalent: unfolds the folded tree of one
// recourse problem (or the whole instance) into a single LP. Exists for
// desk-scale validation only.

struct ExtformOptions {
    long long var_cap = 200000;  // refuse to build anything larger
    LpOptions lp;
};

/// Exact recourse value g(x_i) for one node at a fixed subvector x.
double extform_value(const Instance& instance, int node_index, std::span<const double> x,
                     const ExtformOptions& opts = {});

struct ExtformFullResult {
    double objective = 0.0;
    std::vector<double> x;  // optimal master decisions
};

/// Exact optimum of the full problem (master plus every node's tree).
ExtformFullResult extform_full(const Instance& instance, const ExtformOptions& opts = {});

}  // namespace mssp
