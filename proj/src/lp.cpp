#include "mssp/lp.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstring>
#include <cstdio>
#include <cstdlib>
#include <set>

namespace mssp {

namespace {

double slack_lower(RowSense s) {
    switch (s) {
        case RowSense::le: return 0.0;
        case RowSense::eq: return 0.0;
        case RowSense::ge: return -kInf;
    }
    return 0.0;
}

double slack_upper(RowSense s) {
    switch (s) {
        case RowSense::le: return kInf;
        case RowSense::eq: return 0.0;
        case RowSense::ge: return 0.0;
    }
    return 0.0;
}

constexpr double kPivotTol = 1e-10;
constexpr double kRatioTieTol = 1e-9;
constexpr int kStallLimit = 100;
constexpr int kRefactorInterval = 100;

}  // namespace

void SimplexSolver::load(const LpProblem& p) {
    m_ = p.num_rows();
    n_ = p.num_vars();
    total_ = n_ + m_;

    // CSC over [A | I]
    std::vector<int> count(static_cast<size_t>(n_), 0);
    for (const auto& e : p.A.entries) count[static_cast<size_t>(e.col)]++;
    col_start_.assign(static_cast<size_t>(total_) + 1, 0);
    for (int j = 0; j < n_; ++j) col_start_[static_cast<size_t>(j) + 1] = col_start_[static_cast<size_t>(j)] + count[static_cast<size_t>(j)];
    for (int j = n_; j < total_; ++j) col_start_[static_cast<size_t>(j) + 1] = col_start_[static_cast<size_t>(j)] + 1;
    col_row_.assign(static_cast<size_t>(col_start_[static_cast<size_t>(total_)]), 0);
    col_val_.assign(col_row_.size(), 0.0);
    std::vector<int> fill(static_cast<size_t>(n_), 0);
    for (const auto& e : p.A.entries) {
        size_t pos = static_cast<size_t>(col_start_[static_cast<size_t>(e.col)] + fill[static_cast<size_t>(e.col)]++);
        col_row_[pos] = e.row;
        col_val_[pos] = e.value;
    }
    // collapse duplicate (row, col) entries additively
    for (int j = 0; j < n_; ++j) {
        int b = col_start_[static_cast<size_t>(j)], e = col_start_[static_cast<size_t>(j) + 1];
        if (e - b <= 1) continue;
        std::vector<std::pair<int, double>> tmp;
        tmp.reserve(static_cast<size_t>(e - b));
        for (int t = b; t < e; ++t) tmp.emplace_back(col_row_[static_cast<size_t>(t)], col_val_[static_cast<size_t>(t)]);
        std::sort(tmp.begin(), tmp.end(), [](auto& a, auto& c) { return a.first < c.first; });
        size_t w = 0;
        for (size_t t = 0; t < tmp.size(); ++t) {
            if (w > 0 && tmp[w - 1].first == tmp[t].first) {
                tmp[w - 1].second += tmp[t].second;
            } else {
                tmp[w++] = tmp[t];
            }
        }
        for (int t = b; t < e; ++t) {
            size_t k = static_cast<size_t>(t - b);
            if (k < w) {
                col_row_[static_cast<size_t>(t)] = tmp[k].first;
                col_val_[static_cast<size_t>(t)] = tmp[k].second;
            } else {
                col_row_[static_cast<size_t>(t)] = tmp[w - 1].first;
                col_val_[static_cast<size_t>(t)] = 0.0;
            }
        }
    }
    for (int i = 0; i < m_; ++i) {
        size_t pos = static_cast<size_t>(col_start_[static_cast<size_t>(n_ + i)]);
        col_row_[pos] = i;
        col_val_[pos] = 1.0;
    }

    lo_.assign(static_cast<size_t>(total_), 0.0);
    up_.assign(static_cast<size_t>(total_), 0.0);
    cost_.assign(static_cast<size_t>(total_), 0.0);
    for (int j = 0; j < n_; ++j) {
        lo_[static_cast<size_t>(j)] = p.lower[static_cast<size_t>(j)];
        up_[static_cast<size_t>(j)] = p.upper[static_cast<size_t>(j)];
        cost_[static_cast<size_t>(j)] = p.cost[static_cast<size_t>(j)];
    }
    for (int i = 0; i < m_; ++i) {
        lo_[static_cast<size_t>(n_ + i)] = slack_lower(p.sense[static_cast<size_t>(i)]);
        up_[static_cast<size_t>(n_ + i)] = slack_upper(p.sense[static_cast<size_t>(i)]);
    }
    xval_.assign(static_cast<size_t>(total_), 0.0);
    work_col_.assign(static_cast<size_t>(m_), 0.0);
    duals_.assign(static_cast<size_t>(m_), 0.0);
    iterations_ = 0;
    stall_ = 0;
    bland_ = false;
    perturbed_ = false;
    perturb_rounds_ = 0;
    lo0_.clear();
    up0_.clear();
}

// deterministic per-column jitter in (0.5, 1]
static double bound_jitter(int j) {
    unsigned int h = static_cast<unsigned int>(j) * 2654435761u + 104729u;
    h ^= h >> 13;
    h *= 2246822519u;
    h ^= h >> 16;
    return 0.5 + 0.5 * static_cast<double>(h & 0xffffu) / 65536.0;
}

void SimplexSolver::perturb_bounds() {
    if (perturbed_) return;
    lo0_ = lo_;
    up0_ = up_;
    const double eta = 1e-9;
    for (int j = 0; j < total_; ++j) {
        if (lo_[static_cast<size_t>(j)] == up_[static_cast<size_t>(j)]) continue;  // keep fixings exact
        if (std::isfinite(lo_[static_cast<size_t>(j)]))
            lo_[static_cast<size_t>(j)] -= eta * (1.0 + std::abs(lo_[static_cast<size_t>(j)])) * bound_jitter(j);
        if (std::isfinite(up_[static_cast<size_t>(j)]))
            up_[static_cast<size_t>(j)] += eta * (1.0 + std::abs(up_[static_cast<size_t>(j)])) * bound_jitter(j + total_);
    }
    perturbed_ = true;
    ++perturb_rounds_;
}

void SimplexSolver::restore_bounds() {
    if (!perturbed_) return;
    lo_ = lo0_;
    up_ = up0_;
    // snap nonbasic values back onto the true bounds
    for (int j = 0; j < total_; ++j) {
        if (status_[static_cast<size_t>(j)] == VarStatus::at_lower) xval_[static_cast<size_t>(j)] = lo_[static_cast<size_t>(j)];
        if (status_[static_cast<size_t>(j)] == VarStatus::at_upper) xval_[static_cast<size_t>(j)] = up_[static_cast<size_t>(j)];
    }
    perturbed_ = false;
}

void SimplexSolver::set_initial_basis(const LpProblem& p, const Basis* warm) {
    status_.assign(static_cast<size_t>(total_), VarStatus::at_lower);
    auto nonbasic_default = [&](int j) {
        if (std::isfinite(lo_[static_cast<size_t>(j)])) return VarStatus::at_lower;
        if (std::isfinite(up_[static_cast<size_t>(j)])) return VarStatus::at_upper;
        return VarStatus::nonbasic_free;
    };
    for (int j = 0; j < total_; ++j) status_[static_cast<size_t>(j)] = nonbasic_default(j);

    if (warm != nullptr && !warm->empty()) {
        for (int j = 0; j < n_ && j < static_cast<int>(warm->structural.size()); ++j) {
            VarStatus s = warm->structural[static_cast<size_t>(j)];
            if (s == VarStatus::at_lower && !std::isfinite(lo_[static_cast<size_t>(j)])) s = nonbasic_default(j);
            if (s == VarStatus::at_upper && !std::isfinite(up_[static_cast<size_t>(j)])) s = nonbasic_default(j);
            status_[static_cast<size_t>(j)] = s;
        }
        for (int i = 0; i < m_; ++i) {
            if (i < static_cast<int>(warm->slack.size())) {
                status_[static_cast<size_t>(n_ + i)] = warm->slack[static_cast<size_t>(i)];
            } else {
                status_[static_cast<size_t>(n_ + i)] = VarStatus::basic;
            }
        }
    } else {
        for (int i = 0; i < m_; ++i) status_[static_cast<size_t>(n_ + i)] = VarStatus::basic;
    }

    basic_.clear();
    basic_.reserve(static_cast<size_t>(m_));
    for (int j = 0; j < total_; ++j) {
        if (status_[static_cast<size_t>(j)] == VarStatus::basic) {
            if (static_cast<int>(basic_.size()) < m_) {
                basic_.push_back(j);
            } else {
                status_[static_cast<size_t>(j)] = nonbasic_default(j);
            }
        }
    }
    // top up with slacks of rows whose slack is nonbasic
    if (static_cast<int>(basic_.size()) < m_) {
        for (int i = 0; i < m_ && static_cast<int>(basic_.size()) < m_; ++i) {
            int j = n_ + i;
            if (status_[static_cast<size_t>(j)] != VarStatus::basic) {
                status_[static_cast<size_t>(j)] = VarStatus::basic;
                basic_.push_back(j);
            }
        }
    }
    (void)p;
}

bool SimplexSolver::factorize() {
    if (m_ == 0) return true;
    size_t mm = static_cast<size_t>(m_);
    std::vector<double> B(mm * mm, 0.0);
    std::vector<double> col_scale(mm, 0.0);
    for (int k = 0; k < m_; ++k) {
        int j = basic_[static_cast<size_t>(k)];
        for (int t = col_start_[static_cast<size_t>(j)]; t < col_start_[static_cast<size_t>(j) + 1]; ++t) {
            B[static_cast<size_t>(col_row_[static_cast<size_t>(t)]) * mm + static_cast<size_t>(k)] += col_val_[static_cast<size_t>(t)];
            col_scale[static_cast<size_t>(k)] =
                std::max(col_scale[static_cast<size_t>(k)], std::abs(col_val_[static_cast<size_t>(t)]));
        }
    }
    // Gauss-Jordan on [B | I] -> [I | B^-1]
    binv_.assign(mm * mm, 0.0);
    for (size_t k = 0; k < mm; ++k) binv_[k * mm + k] = 1.0;
    for (size_t k = 0; k < mm; ++k) {
        size_t piv = k;
        double best = std::abs(B[k * mm + k]);
        for (size_t r = k + 1; r < mm; ++r) {
            double v = std::abs(B[r * mm + k]);
            if (v > best) {
                best = v;
                piv = r;
            }
        }
        if (best < 1e-12 * std::max(1.0, col_scale[k])) {
            factorize_fail_pos_ = static_cast<int>(k);
            return false;
        }
        if (piv != k) {
            for (size_t c = 0; c < mm; ++c) {
                std::swap(B[piv * mm + c], B[k * mm + c]);
                std::swap(binv_[piv * mm + c], binv_[k * mm + c]);
            }
        }
        double inv_p = 1.0 / B[k * mm + k];
        for (size_t c = 0; c < mm; ++c) {
            B[k * mm + c] *= inv_p;
            binv_[k * mm + c] *= inv_p;
        }
        for (size_t r = 0; r < mm; ++r) {
            if (r == k) continue;
            double f = B[r * mm + k];
            if (f == 0.0) continue;
            for (size_t c = 0; c < mm; ++c) {
                B[r * mm + c] -= f * B[k * mm + c];
                binv_[r * mm + c] -= f * binv_[k * mm + c];
            }
        }
    }
    // binv_ currently maps: row k of binv_ = row k of B^-1 in ROW space where
    // basis columns were eliminated in order; since we reduced [B|I] fully,
    // binv_ satisfies binv_ * B = I with basis-position indexing on rows.
    return true;
}

void SimplexSolver::repair_basis() {
    auto demote = [&](int j) {
        if (std::isfinite(lo_[static_cast<size_t>(j)]))
            status_[static_cast<size_t>(j)] = VarStatus::at_lower;
        else if (std::isfinite(up_[static_cast<size_t>(j)]))
            status_[static_cast<size_t>(j)] = VarStatus::at_upper;
        else
            status_[static_cast<size_t>(j)] = VarStatus::nonbasic_free;
    };

    // swap the column the factorization stalled on for a nonbasic slack,
    // keeping the rest of the basis intact; full slack reset as a last resort
    int guard = 0;
    while (factorize_fail_pos_ >= 0 && guard++ <= m_) {
        int pos = factorize_fail_pos_;
        int old = basic_[static_cast<size_t>(pos)];
        int replacement = -1;
        for (int i = 0; i < m_; ++i) {
            if (status_[static_cast<size_t>(n_ + i)] != VarStatus::basic) {
                replacement = n_ + i;
                break;
            }
        }
        if (replacement < 0) break;
        demote(old);
        status_[static_cast<size_t>(replacement)] = VarStatus::basic;
        basic_[static_cast<size_t>(pos)] = replacement;
        factorize_fail_pos_ = -1;
        if (factorize()) return;
    }

    for (int j = 0; j < total_; ++j) {
        if (status_[static_cast<size_t>(j)] == VarStatus::basic) demote(j);
    }
    basic_.clear();
    for (int i = 0; i < m_; ++i) {
        status_[static_cast<size_t>(n_ + i)] = VarStatus::basic;
        basic_.push_back(n_ + i);
    }
    factorize_fail_pos_ = -1;
    bool ok = factorize();
    assert(ok);
    (void)ok;
}

void SimplexSolver::compute_basic_values() {
    for (int j = 0; j < total_; ++j) {
        switch (status_[static_cast<size_t>(j)]) {
            case VarStatus::at_lower: xval_[static_cast<size_t>(j)] = lo_[static_cast<size_t>(j)]; break;
            case VarStatus::at_upper: xval_[static_cast<size_t>(j)] = up_[static_cast<size_t>(j)]; break;
            case VarStatus::nonbasic_free: xval_[static_cast<size_t>(j)] = 0.0; break;
            case VarStatus::basic: break;
        }
    }
    if (m_ == 0) return;
    std::vector<double> r(rhs_cache_.begin(), rhs_cache_.end());
    for (int j = 0; j < total_; ++j) {
        if (status_[static_cast<size_t>(j)] == VarStatus::basic) continue;
        double v = xval_[static_cast<size_t>(j)];
        if (v == 0.0) continue;
        for (int t = col_start_[static_cast<size_t>(j)]; t < col_start_[static_cast<size_t>(j) + 1]; ++t) {
            r[static_cast<size_t>(col_row_[static_cast<size_t>(t)])] -= col_val_[static_cast<size_t>(t)] * v;
        }
    }
    size_t mm = static_cast<size_t>(m_);
    for (size_t k = 0; k < mm; ++k) {
        double acc = 0.0;
        const double* row = &binv_[k * mm];
        for (size_t i = 0; i < mm; ++i) acc += row[i] * r[i];
        xval_[static_cast<size_t>(basic_[k])] = acc;
    }
}

void SimplexSolver::ftran(int col, std::vector<double>& out) const {
    size_t mm = static_cast<size_t>(m_);
    std::fill(out.begin(), out.end(), 0.0);
    for (int t = col_start_[static_cast<size_t>(col)]; t < col_start_[static_cast<size_t>(col) + 1]; ++t) {
        double v = col_val_[static_cast<size_t>(t)];
        if (v == 0.0) continue;
        size_t i = static_cast<size_t>(col_row_[static_cast<size_t>(t)]);
        for (size_t k = 0; k < mm; ++k) out[k] += binv_[k * mm + i] * v;
    }
}

bool SimplexSolver::below_lower(int j) const {
    double lo = lo_[static_cast<size_t>(j)];
    return xval_[static_cast<size_t>(j)] < lo - opts_.feas_tol * (1.0 + std::abs(lo));
}

bool SimplexSolver::above_upper(int j) const {
    double up = up_[static_cast<size_t>(j)];
    return xval_[static_cast<size_t>(j)] > up + opts_.feas_tol * (1.0 + std::abs(up));
}

int SimplexSolver::count_infeasible() const {
    int n = 0;
    for (int k = 0; k < m_; ++k) {
        int j = basic_[static_cast<size_t>(k)];
        if (below_lower(j) || above_upper(j)) ++n;
    }
    return n;
}

double SimplexSolver::primal_infeasibility() const {
    double total = 0.0;
    for (int k = 0; k < m_; ++k) {
        int j = basic_[static_cast<size_t>(k)];
        double v = xval_[static_cast<size_t>(j)];
        double lo = lo_[static_cast<size_t>(j)], up = up_[static_cast<size_t>(j)];
        if (v < lo) total += lo - v;
        if (v > up) total += v - up;
    }
    return total;
}

void SimplexSolver::price(bool phase1, std::vector<double>& y) const {
    size_t mm = static_cast<size_t>(m_);
    y.assign(mm, 0.0);
    for (size_t k = 0; k < mm; ++k) {
        int j = basic_[k];
        double ck;
        if (phase1) {
            if (below_lower(j))
                ck = -1.0;
            else if (above_upper(j))
                ck = 1.0;
            else
                continue;
        } else {
            ck = cost_[static_cast<size_t>(j)];
            if (ck == 0.0) continue;
        }
        const double* row = &binv_[k * mm];
        for (size_t i = 0; i < mm; ++i) y[i] += ck * row[i];
    }
}

double SimplexSolver::reduced_cost(int j, const std::vector<double>& y, bool phase1) const {
    double d = phase1 ? 0.0 : cost_[static_cast<size_t>(j)];
    for (int t = col_start_[static_cast<size_t>(j)]; t < col_start_[static_cast<size_t>(j) + 1]; ++t) {
        d -= y[static_cast<size_t>(col_row_[static_cast<size_t>(t)])] * col_val_[static_cast<size_t>(t)];
    }
    return d;
}

// absolute mass of the terms entering the reduced cost: the resolution limit
// of d_j under roundoff, used to keep tolerances relative to column scale
double SimplexSolver::reduced_cost_mass(int j, const std::vector<double>& y, bool phase1) const {
    double mass = phase1 ? 0.0 : std::abs(cost_[static_cast<size_t>(j)]);
    for (int t = col_start_[static_cast<size_t>(j)]; t < col_start_[static_cast<size_t>(j) + 1]; ++t) {
        mass += std::abs(y[static_cast<size_t>(col_row_[static_cast<size_t>(t)])] * col_val_[static_cast<size_t>(t)]);
    }
    return mass;
}

// Composite primal simplex: while any basic variable violates its bounds the
// pricing minimizes total infeasibility, otherwise the true objective. The
// phase is re-derived every iteration, so drift uncovered by a periodic
// refactorization sends the loop back into feasibility repair on its own.
bool SimplexSolver::run_phase(bool, LpStatus& out_status) {
    std::vector<double> y;
    std::set<int> banned;
    double cost_scale = 1.0;
    for (int j = 0; j < n_; ++j) cost_scale = std::max(cost_scale, std::abs(cost_[static_cast<size_t>(j)]));
    int max_iter = opts_.max_iterations > 0 ? opts_.max_iterations : 200 * (m_ + n_) + 20000;
    bool was_phase1 = count_infeasible() > 0;
    int last_ray_col = -1;
    bool fresh_basis = false;

    for (;;) {
        if (iterations_ >= max_iter) {
            out_status = LpStatus::iteration_limit;
            return false;
        }
        const bool phase1 = count_infeasible() > 0;
        if (phase1 != was_phase1) {
            banned.clear();
            stall_ = 0;
            was_phase1 = phase1;
        }
        const double price_tol = phase1 ? 1e-9 : 1e-9 * cost_scale;

        price(phase1, y);

        int enter = -1;
        int chi = +1;
        double best_score = price_tol;
        for (int j = 0; j < total_; ++j) {
            VarStatus s = status_[static_cast<size_t>(j)];
            if (s == VarStatus::basic) continue;
            if (banned.count(j)) continue;
            if (lo_[static_cast<size_t>(j)] == up_[static_cast<size_t>(j)]) continue;  // fixed
            double d = reduced_cost(j, y, phase1);
            double tol_j = price_tol + 1e-11 * reduced_cost_mass(j, y, phase1);
            double score = 0.0;
            int dir = 0;
            if (s == VarStatus::at_lower && d < -tol_j) {
                score = -d;
                dir = +1;
            } else if (s == VarStatus::at_upper && d > tol_j) {
                score = d;
                dir = -1;
            } else if (s == VarStatus::nonbasic_free && std::abs(d) > tol_j) {
                score = std::abs(d);
                dir = d < 0 ? +1 : -1;
            }
            if (dir == 0) continue;
            if (bland_) {
                enter = j;
                chi = dir;
                break;  // lowest index rule
            }
            if (score > best_score) {
                best_score = score;
                enter = j;
                chi = dir;
            }
        }
        if (enter < 0) {
            if (phase1) {
                // stuck with violations: confirm on a fresh factorization
                if (!factorize()) repair_basis();
                compute_basic_values();
                if (count_infeasible() == 0) continue;
                out_status = LpStatus::infeasible;
                return false;
            }
            if (perturbed_) {
                // optimal for the shifted bounds: undo the shift and let the
                // feasibility phase absorb the snap-back
                restore_bounds();
                if (!factorize()) repair_basis();
                compute_basic_values();
                continue;
            }
            out_status = LpStatus::optimal;
            return true;
        }

        ftran(enter, work_col_);

        // Harris-style two-pass ratio test: entering moves t >= 0 in
        // direction chi, basic k changes by -chi * w_k * t. In feasibility
        // repair an infeasible basic variable blocks at the bound it
        // approaches (first breakpoint). Pass one finds the largest step
        // that keeps every blocker within its bound tolerance; pass two
        // picks the numerically strongest pivot inside that budget.
        struct Blocker {
            int pos;
            double ratio;
            double target;
            double w;
        };
        std::vector<Blocker> blockers;
        blockers.reserve(16);
        double theta_max = kInf;
        for (int k = 0; k < m_; ++k) {
            double w = work_col_[static_cast<size_t>(k)];
            if (std::abs(w) < kPivotTol) continue;
            int j = basic_[static_cast<size_t>(k)];
            double delta = -static_cast<double>(chi) * w;
            double v = xval_[static_cast<size_t>(j)];
            double lo = lo_[static_cast<size_t>(j)], up = up_[static_cast<size_t>(j)];
            double target;
            if (phase1 && below_lower(j)) {
                if (delta <= 0) continue;  // moving further below: no breakpoint
                target = lo;
            } else if (phase1 && above_upper(j)) {
                if (delta >= 0) continue;
                target = up;
            } else if (delta > 0) {
                if (!std::isfinite(up)) continue;
                target = up;
            } else {
                if (!std::isfinite(lo)) continue;
                target = lo;
            }
            double ratio = (target - v) / delta;
            if (ratio < 0.0) ratio = 0.0;
            double slack = opts_.feas_tol * (1.0 + std::abs(target)) / std::abs(delta);
            theta_max = std::min(theta_max, ratio + slack);
            blockers.push_back({k, ratio, target, w});
        }

        int leave_pos = -1;
        double limit = kInf;
        double leave_bound = 0.0;
        if (!blockers.empty() && std::isfinite(theta_max)) {
            double wmax = 0.0;
            for (const Blocker& b : blockers) {
                if (b.ratio <= theta_max) wmax = std::max(wmax, std::abs(b.w));
            }
            const double piv_floor = std::max(kPivotTol, 1e-8 * wmax);
            double best_piv = 0.0;
            int best_col = -1;
            for (const Blocker& b : blockers) {
                if (b.ratio > theta_max) continue;
                if (std::abs(b.w) < piv_floor) continue;  // numerically weak pivot
                bool take;
                if (bland_) {
                    take = best_col < 0 || basic_[static_cast<size_t>(b.pos)] < best_col;
                } else {
                    take = std::abs(b.w) > best_piv;
                }
                if (take) {
                    best_piv = std::abs(b.w);
                    best_col = basic_[static_cast<size_t>(b.pos)];
                    leave_pos = b.pos;
                    limit = b.ratio;
                    leave_bound = b.target;
                }
            }
        }

        double flip_range = up_[static_cast<size_t>(enter)] - lo_[static_cast<size_t>(enter)];
        bool flip = std::isfinite(flip_range) && flip_range <= (leave_pos >= 0 ? limit : theta_max);

        if (!flip && leave_pos < 0) {
            // an unblocked improving ray: confirm against a fresh
            // factorization (total infeasibility cannot be unbounded below,
            // and optimality-mode rays may be drift artifacts)
            if (enter == last_ray_col && fresh_basis) {
                out_status = phase1 ? LpStatus::numerical_failure : LpStatus::unbounded;
                return false;
            }
            last_ray_col = enter;
            if (!factorize()) repair_basis();
            compute_basic_values();
            fresh_basis = true;
            continue;
        }

        double step = flip ? flip_range : limit;
        ++iterations_;
        last_ray_col = -1;
        fresh_basis = false;
        if (std::getenv("MSSP_LP_TRACE") && iterations_ % 5000 == 0) {
            double obj = 0.0;
            for (int j = 0; j < n_; ++j) obj += cost_[static_cast<size_t>(j)] * xval_[static_cast<size_t>(j)];
            fprintf(stderr, "[lp] it=%d phase1=%d infeas=%d obj=%.9g step=%.3g enter=%d flip=%d bland=%d\n",
                    iterations_, (int)phase1, count_infeasible(), obj, step, enter, (int)flip, (int)bland_);
        }

        // apply the move to basic values
        if (step != 0.0) {
            for (int k = 0; k < m_; ++k) {
                double w = work_col_[static_cast<size_t>(k)];
                if (w == 0.0) continue;
                xval_[static_cast<size_t>(basic_[static_cast<size_t>(k)])] -= static_cast<double>(chi) * w * step;
            }
        }
        double enter_start = xval_[static_cast<size_t>(enter)];
        xval_[static_cast<size_t>(enter)] = enter_start + static_cast<double>(chi) * step;

        if (flip) {
            status_[static_cast<size_t>(enter)] =
                chi > 0 ? VarStatus::at_upper : VarStatus::at_lower;
            banned.clear();
        } else {
            double piv = work_col_[static_cast<size_t>(leave_pos)];
            if (std::abs(piv) < kPivotTol) {
                banned.insert(enter);
                // undo the move
                for (int k = 0; k < m_; ++k) {
                    double w = work_col_[static_cast<size_t>(k)];
                    if (w == 0.0) continue;
                    xval_[static_cast<size_t>(basic_[static_cast<size_t>(k)])] += static_cast<double>(chi) * w * step;
                }
                xval_[static_cast<size_t>(enter)] = enter_start;
                continue;
            }
            int leave_col = basic_[static_cast<size_t>(leave_pos)];
            xval_[static_cast<size_t>(leave_col)] = leave_bound;
            status_[static_cast<size_t>(leave_col)] =
                (leave_bound == lo_[static_cast<size_t>(leave_col)]) ? VarStatus::at_lower : VarStatus::at_upper;
            status_[static_cast<size_t>(enter)] = VarStatus::basic;
            basic_[static_cast<size_t>(leave_pos)] = enter;

            // product-form update of binv_
            size_t mm = static_cast<size_t>(m_);
            size_t r = static_cast<size_t>(leave_pos);
            double inv_p = 1.0 / piv;
            for (size_t c = 0; c < mm; ++c) binv_[r * mm + c] *= inv_p;
            for (size_t k = 0; k < mm; ++k) {
                if (k == r) continue;
                double f = work_col_[k];
                if (f == 0.0) continue;
                const double* rrow = &binv_[r * mm];
                double* krow = &binv_[k * mm];
                for (size_t c = 0; c < mm; ++c) krow[c] -= f * rrow[c];
            }
            banned.clear();

            if (iterations_ % kRefactorInterval == 0) {
                if (!factorize()) repair_basis();
                compute_basic_values();
            }
        }

        if (step <= 1e-12) {
            ++stall_;
            if (stall_ > kStallLimit) bland_ = true;
            if (stall_ > 4 * kStallLimit && !perturbed_ && perturb_rounds_ < 3) {
                // heavy degeneracy: break ties with a bounded deterministic
                // bound shift, undone before the final verification
                perturb_bounds();
                if (!factorize()) repair_basis();
                compute_basic_values();
                bland_ = false;
                stall_ = 0;
            }
        } else {
            stall_ = 0;
        }
    }
}

LpSolution SimplexSolver::extract(const LpProblem& p, LpStatus status) {
    LpSolution sol;
    sol.status = status;
    sol.iterations = iterations_;
    sol.x.assign(static_cast<size_t>(n_), 0.0);
    for (int j = 0; j < n_; ++j) sol.x[static_cast<size_t>(j)] = xval_[static_cast<size_t>(j)];
    sol.objective = 0.0;
    for (int j = 0; j < n_; ++j) sol.objective += p.cost[static_cast<size_t>(j)] * sol.x[static_cast<size_t>(j)];
    if (status == LpStatus::optimal) {
        std::vector<double> y;
        price(false, y);
        sol.duals = y;
    } else {
        sol.duals.assign(static_cast<size_t>(m_), 0.0);
    }
    sol.basis.structural.assign(status_.begin(), status_.begin() + n_);
    sol.basis.slack.assign(status_.begin() + n_, status_.end());
    return sol;
}

LpSolution SimplexSolver::solve(const LpProblem& problem, const Basis* warm_start) {
    assert(static_cast<int>(problem.lower.size()) == problem.num_vars());
    assert(static_cast<int>(problem.upper.size()) == problem.num_vars());
    assert(static_cast<int>(problem.sense.size()) == problem.num_rows());

    load(problem);
    rhs_cache_ = problem.rhs;
    set_initial_basis(problem, warm_start);
    if (!factorize()) repair_basis();
    compute_basic_values();

    const double cost_scale = [&] {
        double s = 1.0;
        for (double c : problem.cost) s = std::max(s, std::abs(c));
        return s;
    }();

    for (int attempt = 0; attempt < 4; ++attempt) {
        if (attempt == 2) {
            // a warm basis that cannot be polished is abandoned outright
            repair_basis();
            compute_basic_values();
            bland_ = false;
            stall_ = 0;
        } else if (attempt > 0) {
            if (!factorize()) repair_basis();
            compute_basic_values();
        }
        LpStatus st;
        if (!run_phase(false, st)) {
            if (st == LpStatus::infeasible || st == LpStatus::unbounded || st == LpStatus::iteration_limit) {
                return extract(problem, st);
            }
            continue;  // numerical stall: next attempt refactorizes or goes cold
        }

        if (std::getenv("MSSP_LP_DIAG") && attempt >= 0) {
            fprintf(stderr, "[diag] attempt=%d after phases: infeas=%d iters=%d bland=%d\n", attempt,
                    count_infeasible(), iterations_, (int)bland_);
        }
        // verify on a fresh factorization
        if (!factorize()) {
            repair_basis();
            compute_basic_values();
            continue;
        }
        compute_basic_values();
        if (count_infeasible() > 0) {
            if (std::getenv("MSSP_LP_DIAG"))
                fprintf(stderr, "[diag] attempt=%d primal infeasible after refactor: %d\n", attempt, count_infeasible());
            continue;
        }

        std::vector<double> y;
        price(false, y);
        bool dual_ok = true;
        for (int j = 0; j < total_ && dual_ok; ++j) {
            VarStatus s = status_[static_cast<size_t>(j)];
            if (s == VarStatus::basic) continue;
            if (lo_[static_cast<size_t>(j)] == up_[static_cast<size_t>(j)]) continue;
            double d = reduced_cost(j, y, false);
            double dual_tol = opts_.opt_tol * cost_scale + 1e-10 * reduced_cost_mass(j, y, false);
            if (s == VarStatus::at_lower && d < -dual_tol) dual_ok = false;
            if (s == VarStatus::at_upper && d > dual_tol) dual_ok = false;
            if (s == VarStatus::nonbasic_free && std::abs(d) > dual_tol) dual_ok = false;
        }
        if (!dual_ok) {
            if (std::getenv("MSSP_LP_DIAG")) fprintf(stderr, "[diag] attempt=%d dual infeasible\n", attempt);
            continue;
        }

        // duality gap; the tolerance carries a cancellation floor because a
        // near-zero optimum can be the difference of large opposing terms
        double primal = 0.0, mass = 0.0;
        for (int j = 0; j < n_; ++j) {
            double term = cost_[static_cast<size_t>(j)] * xval_[static_cast<size_t>(j)];
            primal += term;
            mass += std::abs(term);
        }
        double dual_obj = 0.0;
        for (int i = 0; i < m_; ++i) {
            double term = y[static_cast<size_t>(i)] * problem.rhs[static_cast<size_t>(i)];
            dual_obj += term;
            mass += std::abs(term);
        }
        for (int j = 0; j < total_; ++j) {
            VarStatus s = status_[static_cast<size_t>(j)];
            if (s == VarStatus::basic || s == VarStatus::nonbasic_free) continue;
            double d = reduced_cost(j, y, false);
            dual_obj += d * xval_[static_cast<size_t>(j)];
            mass += std::abs(d * xval_[static_cast<size_t>(j)]);
        }
        if (std::abs(primal - dual_obj) > opts_.opt_tol * (1.0 + std::abs(primal)) + 1e-11 * mass) {
            if (std::getenv("MSSP_LP_DIAG"))
                fprintf(stderr, "[diag] attempt=%d gap fail: primal=%.10g dual=%.10g\n", attempt, primal, dual_obj);
            continue;
        }

        return extract(problem, LpStatus::optimal);
    }
    return extract(problem, LpStatus::numerical_failure);
}

std::vector<double> value_sensitivity(const LpSolution& solution,
                                      const std::vector<MatrixEntry>& rhs_dependence,
                                      int param_dim) {
    if (solution.status != LpStatus::optimal) {
        throw ValidationError("value_sensitivity requires an optimal solution");
    }
    std::vector<double> s(static_cast<size_t>(param_dim), 0.0);
    for (const auto& e : rhs_dependence) {
        s[static_cast<size_t>(e.col)] += solution.duals[static_cast<size_t>(e.row)] * e.value;
    }
    return s;
}

}  // namespace mssp
