#pragma once

#include <string>
#include <vector>

#include "mssp/benders.hpp"
#include "mssp/model.hpp"

namespace mssp {

// Synthetic power-system investment instances: accumulated-capacity master
// variables per (technology, investment node) with a 5-year construction
// lag, hourly dispatch recourse stages with ramping and storage carry-over,
// and a folded Markov wind tree. All magnitudes are synthetic.

enum class TechType { thermal, storage, renewable };

struct Technology {
    std::string name;
    TechType type = TechType::thermal;
    double capital_cost = 0.0;    // currency per unit capacity
    double operating_cost = 0.0;  // currency per unit energy
    double ramp_limit = 1.0;      // fraction of capacity per hour, (0, 1]
    double efficiency = 1.0;      // storage round-trip, (0, 1]
    double historical = 0.0;      // preinstalled capacity
    double build_cap = 100.0;     // per-node investment limit
};

struct PowerConfig {
    std::vector<Technology> technologies;  // defaults: 6 thermal, 1 storage, 2 renewable
    int investment_nodes = 7;              // binary tree 1 + 2 + 4
    int slices = 4;                        // seasons
    int stage_count = 7;
    int state_count = 5;
    int scenario_count = 3;
    int hours_per_stage = 24;
    double demand_base = 40.0;        // peak-ish demand at level 1.0
    double shed_cost = 6000.0;        // value of lost load
    double storage_power_ratio = 0.25;
    double storage_energy_hours = 6.0;
    double years_per_period = 5.0;
    unsigned long long seed = 42;

    static PowerConfig defaults();
};

struct TrajectoryPool {
    // centers[i][d] is the stage-d coefficient vector of representative
    // trajectory i (constant element included)
    std::vector<std::vector<std::vector<double>>> centers;
    std::vector<double> weights;
};

Instance generate_instance(const PowerConfig& config);

/// Human-readable one-page description of a generated instance.
std::string describe_instance(const PowerConfig& config, const Instance& instance);

/// Samples `pool_size` full-horizon trajectories from the template's folded
/// tree and reduces them to `iota` representatives by Lloyd kmeans
/// (squared L2, greedy farthest-point seeding). Weights are cluster shares.
TrajectoryPool cluster_trajectories(const RecourseTemplate& tpl, int pool_size, int iota,
                                    unsigned long long seed);

/// Probability-weighted perfect-foresight dispatch value at a node subvector.
double deterministic_value(const Instance& instance, int node_index, std::span<const double> x,
                           const TrajectoryPool& pool, const LpOptions& lp = {}, int workers = 1);

/// Wraps the perfect-foresight evaluator as the exact subproblem solver for
/// run_benders (bounds coincide; subgradients from the dispatch duals).
ExactSubproblemFn deterministic_evaluator(const Instance& instance,
                                          const std::map<std::string, TrajectoryPool>& pools,
                                          const LpOptions& lp = {}, int workers = 1);

}  // namespace mssp
