#pragma once

#include <optional>
#include <span>
#include <vector>

#include "mssp/sparse.hpp"

namespace mssp {

// Linear programs in the form
//
//     min cᵀv   s.t.   A v {<=,=,>=} rhs,   lower <= v <= upper,
//
// solved by a bounded-variable revised simplex with an explicit dense basis
// inverse. Dual sign convention: `duals[i]` is a subgradient of the optimal
// value with respect to rhs[i], so for every perturbation D that keeps the
// problem feasible
//
//     value(rhs + D) >= value(rhs) + dualsᵀD.
//
// Under this convention duals of >= rows are >= 0 and duals of <= rows are
// <= 0 (relaxing a row can only lower a minimum).

enum class LpStatus { optimal, infeasible, unbounded, iteration_limit, numerical_failure };

struct LpProblem {
    std::vector<double> cost;
    SparseMatrix A;
    std::vector<RowSense> sense;
    std::vector<double> rhs;
    std::vector<double> lower;  // may be -inf
    std::vector<double> upper;  // may be +inf

    int num_vars() const { return static_cast<int>(cost.size()); }
    int num_rows() const { return static_cast<int>(rhs.size()); }

    int add_var(double c, double lo, double up) {
        cost.push_back(c);
        lower.push_back(lo);
        upper.push_back(up);
        A.cols = num_vars();
        return num_vars() - 1;
    }
    int add_row(RowSense s, double b) {
        sense.push_back(s);
        rhs.push_back(b);
        A.rows = num_rows();
        return num_rows() - 1;
    }
};

enum class VarStatus : unsigned char { basic, at_lower, at_upper, nonbasic_free };

/// Snapshot of a simplex basis, reusable as a warm start for a problem that
/// extends the original one (columns and rows appended at the end).
struct Basis {
    std::vector<VarStatus> structural;  // one per variable
    std::vector<VarStatus> slack;       // one per row
    bool empty() const { return structural.empty() && slack.empty(); }
};

struct LpSolution {
    LpStatus status = LpStatus::numerical_failure;
    double objective = 0.0;
    std::vector<double> x;
    std::vector<double> duals;  // one per row, convention above
    Basis basis;
    int iterations = 0;
};

struct LpOptions {
    double feas_tol = 1e-8;
    double opt_tol = 1e-7;
    int max_iterations = 0;  // 0: automatic from problem size
};

/// One solver instance carries mutable workspace: use one per worker thread.
/// Problems are read-only and may be shared.
class SimplexSolver {
  public:
    explicit SimplexSolver(LpOptions opts = {}) : opts_(opts) {}

    LpSolution solve(const LpProblem& problem, const Basis* warm_start = nullptr);

    const LpOptions& options() const { return opts_; }

  private:
    LpOptions opts_;

    // workspace, rebuilt per solve
    int m_ = 0;                    // rows
    int n_ = 0;                    // structural columns
    int total_ = 0;                // n_ + m_ (structurals then slacks)
    std::vector<int> col_start_;   // CSC over [A | I]
    std::vector<int> col_row_;
    std::vector<double> col_val_;
    std::vector<double> lo_, up_;  // per column, slacks included
    std::vector<double> cost_;    // phase-2 cost, slacks 0
    std::vector<double> binv_;    // m x m row-major
    std::vector<int> basic_;      // column in basis position k
    std::vector<VarStatus> status_;
    std::vector<double> xval_;
    std::vector<double> work_col_;  // B^-1 a_j
    std::vector<double> duals_;     // y = c_B B^-1
    std::vector<double> rhs_cache_;
    int iterations_ = 0;
    int stall_ = 0;
    bool bland_ = false;
    int factorize_fail_pos_ = -1;
    bool perturbed_ = false;
    int perturb_rounds_ = 0;
    std::vector<double> lo0_, up0_;  // pristine bounds while perturbed

    void load(const LpProblem& p);
    void perturb_bounds();
    void restore_bounds();
    void set_initial_basis(const LpProblem& p, const Basis* warm);
    bool factorize();     // rebuild binv_ from basic_; false if singular
    void repair_basis();  // replace dependent basic columns with slacks
    void compute_basic_values();
    void ftran(int col, std::vector<double>& out) const;  // out = B^-1 a_col
    bool below_lower(int j) const;
    bool above_upper(int j) const;
    int count_infeasible() const;
    double primal_infeasibility() const;
    bool run_phase(bool phase1, LpStatus& out_status);
    void price(bool phase1, std::vector<double>& y) const;
    double reduced_cost(int j, const std::vector<double>& y, bool phase1) const;
    double reduced_cost_mass(int j, const std::vector<double>& y, bool phase1) const;
    LpSolution extract(const LpProblem& p, LpStatus status);
};

/// Composes optimal row duals with a linear rhs dependence: given entries
/// (row, param, coeff) meaning rhs[row] = base[row] + sum coeff * p[param],
/// returns s with value(p + D) >= value(p) + sᵀD. Rejects non-optimal input.
std::vector<double> value_sensitivity(const LpSolution& solution,
                                      const std::vector<MatrixEntry>& rhs_dependence,
                                      int param_dim);

}  // namespace mssp
