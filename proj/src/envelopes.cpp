#include "mssp/envelopes.hpp"

#include <cassert>
#include <cmath>
#include <cstdlib>

#include "mssp/mps.hpp"

#include <json.hpp>

namespace mssp {

using nlohmann::json;

namespace {

double dot_diff(std::span<const double> slope, std::span<const double> point, std::span<const double> anchor) {
    double acc = 0.0;
    for (size_t i = 0; i < slope.size(); ++i) acc += slope[i] * (point[i] - anchor[i]);
    return acc;
}

double norm1(std::span<const double> v) {
    double acc = 0.0;
    for (double x : v) acc += std::abs(x);
    return acc;
}

bool same_vec(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i)
        if (std::abs(a[i] - b[i]) > 1e-12) return false;
    return true;
}

}  // namespace

std::vector<double> LowerCut::lambda_at(std::span<const double> b) const {
    std::vector<double> out(lambda.begin(), lambda.end());
    for (const auto& e : cross) {
        out[static_cast<size_t>(e.row)] += e.value * (b[static_cast<size_t>(e.col)] - anchor_b[static_cast<size_t>(e.col)]);
    }
    return out;
}

double LowerCut::value_at(std::span<const double> x, std::span<const double> y, std::span<const double> b) const {
    double v = theta;
    if (!lambda.empty()) {
        if (cross.empty()) {
            v += dot_diff(lambda, x, anchor_x);
        } else {
            v += dot_diff(lambda_at(b), x, anchor_x);
        }
    }
    if (!sigma.empty()) v += dot_diff(sigma, y, anchor_y);
    if (!nu.empty()) v += dot_diff(nu, b, anchor_b);
    return v;
}

EnvelopeSet::EnvelopeSet(EnvelopeMode mode, int stage_count, int state_count)
    : mode_(mode), stage_count_(stage_count), state_count_(state_count) {
    size_t per_stage = mode == EnvelopeMode::basic ? static_cast<size_t>(state_count) * static_cast<size_t>(state_count)
                                                   : static_cast<size_t>(state_count);
    size_t n = per_stage * static_cast<size_t>(std::max(0, stage_count - 1));
    cut_stores_.assign(n, {});
    point_stores_.assign(n, {});
}

size_t EnvelopeSet::index(StoreKey key) const {
    assert(key.stage >= 2 && key.stage <= stage_count_);
    assert(key.state >= 0 && key.state < state_count_);
    size_t base = static_cast<size_t>(key.stage - 2);
    if (mode_ == EnvelopeMode::basic) {
        assert(key.pred >= 0 && key.pred < state_count_);
        return (base * static_cast<size_t>(state_count_) + static_cast<size_t>(key.pred)) * static_cast<size_t>(state_count_) +
               static_cast<size_t>(key.state);
    }
    return base * static_cast<size_t>(state_count_) + static_cast<size_t>(key.state);
}

double EnvelopeSet::eval_lower(StoreKey key, std::span<const double> x, std::span<const double> y,
                               std::span<const double> b, double stage_value_lb) const {
    double best = stage_value_lb;
    for (const LowerCut& cut : cut_stores_[index(key)]) best = std::max(best, cut.value_at(x, y, b));
    return best;
}

double EnvelopeSet::eval_upper(StoreKey key, std::span<const double> y, std::span<const double> b, double M_y,
                               double M_b, SimplexSolver& solver, Basis* warm_io) const {
    const auto& pts = point_stores_[index(key)];
    if (pts.empty()) return kInf;

    const int ny = static_cast<int>(y.size());
    const int nb = mode_ == EnvelopeMode::enhanced ? static_cast<int>(b.size()) : 0;
    const int S = static_cast<int>(pts.size());

    // columns: gamma+/- (ny each), zeta+/- (nb each), then one mu per point;
    // the fixed prefix keeps appended points warm-start compatible
    LpProblem lp;
    for (int i = 0; i < 2 * ny; ++i) lp.add_var(M_y, 0.0, kInf);
    for (int i = 0; i < 2 * nb; ++i) lp.add_var(M_b, 0.0, kInf);
    const int mu0 = lp.num_vars();
    for (int s = 0; s < S; ++s) lp.add_var(pts[static_cast<size_t>(s)].theta, 0.0, kInf);

    // sum_s mu_s y_s - gamma = y ; sum_s mu_s b_s - zeta = b ; sum mu = 1
    for (int i = 0; i < ny; ++i) {
        int r = lp.add_row(RowSense::eq, y[static_cast<size_t>(i)]);
        for (int s = 0; s < S; ++s) lp.A.add(r, mu0 + s, pts[static_cast<size_t>(s)].anchor_y[static_cast<size_t>(i)]);
        lp.A.add(r, i, -1.0);
        lp.A.add(r, ny + i, 1.0);
    }
    for (int i = 0; i < nb; ++i) {
        int r = lp.add_row(RowSense::eq, b[static_cast<size_t>(i)]);
        for (int s = 0; s < S; ++s) lp.A.add(r, mu0 + s, pts[static_cast<size_t>(s)].anchor_b[static_cast<size_t>(i)]);
        lp.A.add(r, 2 * ny + i, -1.0);
        lp.A.add(r, 2 * ny + nb + i, 1.0);
    }
    {
        int r = lp.add_row(RowSense::eq, 1.0);
        for (int s = 0; s < S; ++s) lp.A.add(r, mu0 + s, 1.0);
    }

    LpSolution sol = solver.solve(lp, warm_io);
    if (warm_io != nullptr && sol.status == LpStatus::optimal) *warm_io = sol.basis;
    if (sol.status != LpStatus::optimal) {
        if (const char* dump = std::getenv("MSSP_DUMP_FAILED_LP")) write_mps(lp, dump, "ENVUP");
        throw NumericalError("upper envelope evaluation failed (status " + std::to_string(static_cast<int>(sol.status)) + ")");
    }
    return sol.objective;
}

void EnvelopeSet::add_lower_cut(StoreKey key, LowerCut cut, double M_y, double M_b) {
    double sn = norm1(cut.sigma);
    if (sn > M_y + 1e-9) {
        throw ValidationError("Lipschitz-violation: cut sigma L1 norm " + std::to_string(sn) + " exceeds M_y " +
                              std::to_string(M_y) + " at stage " + std::to_string(key.stage) + ", state " +
                              std::to_string(key.state));
    }
    double nn = norm1(cut.nu);
    if (nn > M_b + 1e-9) {
        throw ValidationError("Lipschitz-violation: cut nu L1 norm " + std::to_string(nn) + " exceeds M_b " +
                              std::to_string(M_b) + " at stage " + std::to_string(key.stage) + ", state " +
                              std::to_string(key.state));
    }
    auto& store = cut_stores_[index(key)];
    for (LowerCut& c : store) {
        if (same_vec(c.sigma, cut.sigma) && same_vec(c.lambda, cut.lambda) && same_vec(c.nu, cut.nu) &&
            same_vec(c.anchor_x, cut.anchor_x) && same_vec(c.anchor_y, cut.anchor_y) &&
            same_vec(c.anchor_b, cut.anchor_b) && c.cross.size() == cut.cross.size()) {
            c.theta = std::max(c.theta, cut.theta);  // identical slopes: keep the tighter one
            return;
        }
    }
    cut.id = next_id_++;
    store.push_back(std::move(cut));
}

void EnvelopeSet::add_upper_point(StoreKey key, UpperPoint point) {
    if (!std::isfinite(point.theta)) {
        throw ValidationError("upper point must be finite at stage " + std::to_string(key.stage) + ", state " +
                              std::to_string(key.state));
    }
    auto& store = point_stores_[index(key)];
    for (UpperPoint& q : store) {
        if (same_vec(q.anchor_y, point.anchor_y) && same_vec(q.anchor_b, point.anchor_b)) {
            // same anchor: keep the tighter value in place (a higher value at
            // an identical anchor is dominated and only adds degeneracy)
            q.theta = std::min(q.theta, point.theta);
            return;
        }
    }
    point.id = next_id_++;
    store.push_back(std::move(point));
}

size_t EnvelopeSet::total_cuts() const {
    size_t n = 0;
    for (const auto& s : cut_stores_) n += s.size();
    return n;
}

size_t EnvelopeSet::total_points() const {
    size_t n = 0;
    for (const auto& s : point_stores_) n += s.size();
    return n;
}

void EnvelopeSet::clear_upper_points() {
    for (auto& s : point_stores_) s.clear();
}

std::string EnvelopeSet::to_json() const {
    json j;
    j["mode"] = mode_ == EnvelopeMode::basic ? "basic" : "enhanced";
    j["stage_count"] = stage_count_;
    j["state_count"] = state_count_;
    json cuts = json::array();
    for (const auto& store : cut_stores_) {
        json sj = json::array();
        for (const auto& c : store) {
            json cross = json::array();
            for (const auto& e : c.cross) cross.push_back({e.row, e.col, e.value});
            sj.push_back({{"theta", c.theta},
                          {"lambda", c.lambda},
                          {"sigma", c.sigma},
                          {"nu", c.nu},
                          {"x", c.anchor_x},
                          {"y", c.anchor_y},
                          {"b", c.anchor_b},
                          {"cross", cross}});
        }
        cuts.push_back(sj);
    }
    j["cuts"] = cuts;
    json points = json::array();
    for (const auto& store : point_stores_) {
        json sj = json::array();
        for (const auto& p : store) sj.push_back({{"theta", p.theta}, {"y", p.anchor_y}, {"b", p.anchor_b}});
        points.push_back(sj);
    }
    j["points"] = points;
    return j.dump();
}

EnvelopeSet EnvelopeSet::from_json(const std::string& text) {
    json j = json::parse(text);
    EnvelopeSet env(j.at("mode").get<std::string>() == "basic" ? EnvelopeMode::basic : EnvelopeMode::enhanced,
                    j.at("stage_count").get<int>(), j.at("state_count").get<int>());
    const json& cuts = j.at("cuts");
    for (size_t i = 0; i < cuts.size(); ++i) {
        for (const auto& cj : cuts[i]) {
            LowerCut c;
            c.theta = cj.at("theta").get<double>();
            c.lambda = cj.at("lambda").get<std::vector<double>>();
            c.sigma = cj.at("sigma").get<std::vector<double>>();
            c.nu = cj.at("nu").get<std::vector<double>>();
            c.anchor_x = cj.at("x").get<std::vector<double>>();
            c.anchor_y = cj.at("y").get<std::vector<double>>();
            c.anchor_b = cj.at("b").get<std::vector<double>>();
            for (const auto& e : cj.at("cross")) c.cross.push_back({e[0].get<int>(), e[1].get<int>(), e[2].get<double>()});
            c.id = env.next_id_++;
            env.cut_stores_[i].push_back(std::move(c));
        }
    }
    const json& points = j.at("points");
    for (size_t i = 0; i < points.size(); ++i) {
        for (const auto& pj : points[i]) {
            UpperPoint p;
            p.theta = pj.at("theta").get<double>();
            p.anchor_y = pj.at("y").get<std::vector<double>>();
            p.anchor_b = pj.at("b").get<std::vector<double>>();
            p.id = env.next_id_++;
            env.point_stores_[i].push_back(std::move(p));
        }
    }
    return env;
}

}  // namespace mssp
