#include "mssp/oracle.hpp"

#include <cmath>

#include <json.hpp>

namespace mssp {

using nlohmann::json;

void OracleStore::add(OracleRecord record) {
    if (record.theta_ub - record.theta_lb > delta_ + 1e-9) {
        throw ValidationError("oracle record gap " + std::to_string(record.theta_ub - record.theta_lb) +
                              " exceeds the solve tolerance " + std::to_string(delta_));
    }
    for (const auto& r : records_) {
        if (r.x.size() != record.x.size()) break;
        bool same = true;
        for (size_t j = 0; j < r.x.size() && same; ++j) same = std::abs(r.x[j] - record.x[j]) <= 1e-12;
        if (same && std::abs(r.theta_lb - record.theta_lb) <= 1e-12 && std::abs(r.theta_ub - record.theta_ub) <= 1e-12) {
            return;  // duplicate solve, bounds unchanged
        }
    }
    records_.push_back(std::move(record));
}

OracleBound OracleStore::lower(std::span<const double> x) const {
    if (records_.empty()) throw ValidationError("oracle lower bound queried on an empty store");
    OracleBound best;
    best.theta = -kInf;
    size_t best_idx = 0;
    for (size_t s = 0; s < records_.size(); ++s) {
        const OracleRecord& r = records_[s];
        double v = r.theta_lb;
        for (size_t j = 0; j < r.x.size(); ++j) v += r.lambda[j] * (x[j] - r.x[j]);
        if (v > best.theta) {
            best.theta = v;
            best_idx = s;
        }
    }
    best.lambda = records_[best_idx].lambda;
    return best;
}

double OracleStore::upper(std::span<const double> x, SimplexSolver& solver) const {
    if (records_.empty()) throw ValidationError("oracle upper bound queried on an empty store");
    const int S = static_cast<int>(records_.size());
    const int nx = static_cast<int>(x.size());

    LpProblem lp;
    for (int s = 0; s < S; ++s) lp.add_var(records_[static_cast<size_t>(s)].theta_ub, 0.0, kInf);
    for (int j = 0; j < nx; ++j) {
        double dir = direction_.empty() ? 1.0 : static_cast<double>(direction_[static_cast<size_t>(j)]);
        int r = lp.add_row(RowSense::le, dir * x[static_cast<size_t>(j)]);
        for (int s = 0; s < S; ++s) lp.A.add(r, s, dir * records_[static_cast<size_t>(s)].x[static_cast<size_t>(j)]);
    }
    {
        int r = lp.add_row(RowSense::eq, 1.0);
        for (int s = 0; s < S; ++s) lp.A.add(r, s, 1.0);
    }
    LpSolution sol = solver.solve(lp);
    if (sol.status == LpStatus::infeasible) return kInf;
    if (sol.status != LpStatus::optimal) throw NumericalError("oracle upper bound LP failed");
    return sol.objective;
}

std::string OracleStore::to_json() const {
    json j;
    j["direction"] = direction_;
    j["delta"] = delta_;
    json recs = json::array();
    for (const auto& r : records_) {
        recs.push_back({{"x", r.x}, {"theta_lb", r.theta_lb}, {"theta_ub", r.theta_ub}, {"lambda", r.lambda}});
    }
    j["records"] = recs;
    return j.dump();
}

OracleStore OracleStore::from_json(const std::string& text) {
    json j = json::parse(text);
    OracleStore store(j.at("direction").get<std::vector<int>>(), j.at("delta").get<double>());
    for (const auto& rj : j.at("records")) {
        OracleRecord r;
        r.x = rj.at("x").get<std::vector<double>>();
        r.theta_lb = rj.at("theta_lb").get<double>();
        r.theta_ub = rj.at("theta_ub").get<double>();
        r.lambda = rj.at("lambda").get<std::vector<double>>();
        store.records_.push_back(std::move(r));
    }
    return store;
}

}  // namespace mssp
