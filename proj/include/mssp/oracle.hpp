#pragma once

#include <span>
#include <string>
#include <vector>

#include "mssp/lp.hpp"

namespace mssp {

// Adaptive oracles: valid bounds and subgradients for a subproblem at
// arbitrary master points, built from previously solved points. The lower
// oracle is the cut maximum (convexity); the upper oracle is the cheapest
// convex combination of solved points that dominates the query componentwise
// in the declared monotone direction.

struct OracleRecord {
    std::vector<double> x;
    double theta_lb = 0.0;
    double theta_ub = 0.0;
    std::vector<double> lambda;
};

struct OracleBound {
    double theta = 0.0;
    std::vector<double> lambda;
};

class OracleStore {
  public:
    OracleStore() = default;
    /// direction[j] = +1 where the subproblem value is nonincreasing in
    /// x[j], -1 where it is nondecreasing.
    OracleStore(std::vector<int> direction, double delta) : direction_(std::move(direction)), delta_(delta) {}

    /// Records must come from delta-optimal solves: theta_ub - theta_lb <= delta.
    void add(OracleRecord record);

    bool empty() const { return records_.empty(); }
    size_t size() const { return records_.size(); }
    const std::vector<OracleRecord>& records() const { return records_; }
    const std::vector<int>& direction() const { return direction_; }

    /// Max over stored cuts and the maximizing record's subgradient
    /// (lowest-index tie-break). Throws on an empty store.
    OracleBound lower(std::span<const double> x) const;

    /// min sum mu_s theta_ub_s over convex combinations whose x dominates the
    /// query in the monotone direction; +inf when none does.
    double upper(std::span<const double> x, SimplexSolver& solver) const;

    std::string to_json() const;
    static OracleStore from_json(const std::string& text);

  private:
    std::vector<OracleRecord> records_;
    std::vector<int> direction_;
    double delta_ = kInf;
};

}  // namespace mssp
