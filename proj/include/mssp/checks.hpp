#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "mssp/model.hpp"

namespace mssp {

// Seeded random instances for cross-validation against the extensive form.
// The family is built so that correctness prerequisites hold by
// construction: y = 0 is always feasible (relatively complete recourse),
// all coupling coefficients are nonnegative (the recourse value is
// nonincreasing in x), and the Lipschitz caps M_y / M_b follow from a
// conservative dual-magnitude recursion over the stages.

struct RandomInstanceConfig {
    int stages = 2;        // 2..3 keeps the extensive form tiny
    int states = 2;
    int scenarios = 2;
    int max_vars_per_stage = 5;
    int master_vars = 2;
    int nodes = 2;
    bool allow_zero_transitions = true;
    unsigned long long seed = 1;
};

Instance random_instance(const RandomInstanceConfig& config);

/// Draws a uniformly random master vector within the instance bounds.
std::vector<double> random_master_point(const Instance& instance, Rng& rng);

struct CheckOutcome {
    std::string name;
    int passed = 0;
    int failed = 0;
    std::vector<std::string> failures;
};

/// Randomized cross-validation suite against the extensive form. Prints one
/// line per check to `log` when non-null; returns per-check tallies.
std::vector<CheckOutcome> run_randomized_checks(unsigned long long seed, int instances, std::ostream* log);

}  // namespace mssp
