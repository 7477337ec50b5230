#pragma once

#include <span>
#include <string>
#include <vector>

#include "mssp/lp.hpp"
#include "mssp/model.hpp"

namespace mssp {

// Outer (cut-max) and inner (Lipschitz convex-combination) envelopes of the
// stage value functions, in the L1 norm throughout.
//
// basic mode:    cuts/points describe V as a function of the previous-stage
//                decision y only; stores are keyed (stage, predecessor, state).
// enhanced mode: cuts carry subgradients w.r.t. the master point x and the
//                realization bundle b as well, points carry (y, b) anchors;
//                one store per (stage, state) is shared by all predecessors.

enum class EnvelopeMode { basic, enhanced };

struct LowerCut {
    double theta = 0.0;
    std::vector<double> lambda;   // w.r.t. x at the anchor bundle (enhanced only)
    std::vector<double> sigma;    // w.r.t. previous-stage y
    std::vector<double> nu;       // w.r.t. realization bundle (enhanced only)
    std::vector<double> anchor_x;
    std::vector<double> anchor_y;
    std::vector<double> anchor_b;
    // Dual-weighted coupling tensor of the generating stage problem. The
    // stage rhs is bilinear in (x, b), so a cut moved to another bundle
    // needs its x-slope corrected by cross * (b - anchor_b); dropping the
    // term can overestimate the true value when both x and b move. Cuts
    // built directly in the plain affine form leave it empty.
    std::vector<MatrixEntry> cross;  // (x index, bundle index, coefficient)
    std::uint64_t id = 0;            // insertion order, used for stable LP row layout

    /// x-slope valid at bundle b: lambda + cross * (b - anchor_b).
    std::vector<double> lambda_at(std::span<const double> b) const;
    double value_at(std::span<const double> x, std::span<const double> y, std::span<const double> b) const;
};

struct UpperPoint {
    double theta = 0.0;
    std::vector<double> anchor_y;
    std::vector<double> anchor_b;  // enhanced only
    std::uint64_t id = 0;
};

struct StoreKey {
    int stage = 0;  // value function of this stage, 2..stage_count
    int pred = -1;  // predecessor state in basic mode, -1 in enhanced mode
    int state = 0;
};

class EnvelopeSet {
  public:
    EnvelopeSet() = default;
    EnvelopeSet(EnvelopeMode mode, int stage_count, int state_count);

    EnvelopeMode mode() const { return mode_; }
    int stage_count() const { return stage_count_; }
    int state_count() const { return state_count_; }

    const std::vector<LowerCut>& cuts(StoreKey key) const { return cut_stores_[index(key)]; }
    const std::vector<UpperPoint>& points(StoreKey key) const { return point_stores_[index(key)]; }

    /// Max over stored cuts; stage_value_lb when the store is empty (and a
    /// floor in general, since it is a valid bound in its own right).
    double eval_lower(StoreKey key, std::span<const double> x, std::span<const double> y,
                      std::span<const double> b, double stage_value_lb) const;

    /// Optimal value of the convex-combination + Lipschitz problem over the
    /// stored points; +inf when the store is empty. `warm_io`, when given,
    /// seeds the solve and receives the final basis.
    double eval_upper(StoreKey key, std::span<const double> y, std::span<const double> b, double M_y,
                      double M_b, SimplexSolver& solver, Basis* warm_io = nullptr) const;

    /// Throws ValidationError if the cut violates the Lipschitz caps
    /// (signals a wrong M_y/M_b in the instance). Duplicate cuts are dropped.
    void add_lower_cut(StoreKey key, LowerCut cut, double M_y, double M_b);
    void add_upper_point(StoreKey key, UpperPoint point);

    /// Upper points are anchored to the master point they were solved at and
    /// carry no x-dependence, so they must not survive into a solve at a
    /// different master point. Lower cuts are x-parametric and stay.
    void clear_upper_points();

    size_t total_cuts() const;
    size_t total_points() const;

    std::string to_json() const;
    static EnvelopeSet from_json(const std::string& text);

  private:
    EnvelopeMode mode_ = EnvelopeMode::basic;
    int stage_count_ = 0;
    int state_count_ = 0;
    std::uint64_t next_id_ = 0;
    std::vector<std::vector<LowerCut>> cut_stores_;
    std::vector<std::vector<UpperPoint>> point_stores_;

    size_t index(StoreKey key) const;
};

}  // namespace mssp
