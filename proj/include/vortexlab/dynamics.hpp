#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "vortexlab/linalg.hpp"
#include "vortexlab/state.hpp"

namespace vortexlab {

struct FlowOptions {
    double epsilon = 0.0;  // 0 = unregularized interaction
    double rel_tol = 1e-10;
    double abs_tol = 1e-12;
    double max_step = std::numeric_limits<double>::infinity();
    bool track_variational = false;
    std::optional<double> min_distance_event;  // stop when min pair distance crosses
    std::uint64_t max_steps = 10'000'000;

    void validate() const {
        if (!(rel_tol >= 1e-14 && rel_tol <= 1e-2) || !(abs_tol >= 1e-14 && abs_tol <= 1e-2))
            throw config_error("tolerances must lie in [1e-14, 1e-2]");
        if (epsilon < 0.0) throw config_error("epsilon must be nonnegative");
        if (!(max_step > 0.0)) throw config_error("max_step must be positive");
    }
};

enum class FlowStatus {
    Complete,     // reached t_final
    Event,        // min-distance event fired; trajectory ends at event_time
    NearCollapse, // unregularized step size underflowed (|h| < 1e-13)
    StepLimit,    // max_steps exhausted
};

// Adaptive 5(4) solution record with dense output, the running infimum of the
// minimum pairwise distance, and (optionally) the variational flow.
class Trajectory {
public:
    struct Node {
        double t;
        std::vector<Point> positions;
        double jac_det;  // NaN unless variational tracking was on
    };

    const Geometry& geometry() const { return geom_; }
    const std::vector<double>& intensities() const { return xi_; }

    const std::vector<Node>& nodes() const { return nodes_; }
    double t_begin() const { return nodes_.front().t; }
    double t_end() const { return nodes_.back().t; }

    FlowStatus status() const { return status_; }
    double running_min_distance() const { return running_min_; }
    std::optional<double> event_time() const { return event_time_; }
    std::optional<double> collapse_time() const { return collapse_time_; }
    double sphere_residual() const { return sphere_residual_; }

    // Dense interpolation; t clamped to the covered span.
    std::vector<Point> positions_at(double t) const;
    VortexState state_at(double t) const;
    VortexState final_state() const;

    bool has_variational() const { return !final_variational_.a.empty(); }
    const DMat& final_variational() const { return final_variational_; }

private:
    friend Trajectory integrate(const VortexState&, double, const FlowOptions&);

    struct Segment {
        double t0, h;  // covers [t0, t0 + h] (h signed)
        std::vector<double> c1, c2, c3, c4, c5;  // dense coefficients, positions only
    };

    Geometry geom_ = Geometry::plane();
    std::vector<double> xi_;
    std::vector<Node> nodes_;
    std::vector<Segment> segs_;
    double running_min_ = std::numeric_limits<double>::infinity();
    std::optional<double> event_time_;
    std::optional<double> collapse_time_;
    FlowStatus status_ = FlowStatus::Complete;
    double sphere_residual_ = 0.0;
    DMat final_variational_;
};

// B_i = sum_{j != i} xi_j K_eps(x_i, x_j) (+ boundary self-advection on the
// disk), as ambient vectors. Throws coincident_error when epsilon = 0 and a
// pair sits below the machine-scale threshold.
std::vector<Vec3> vector_field(const VortexState& state, double epsilon);

Trajectory integrate(const VortexState& state, double t_final, const FlowOptions& opts);

// Interaction energy sum_{i<j} xi_i xi_j G_eps(x_i, x_j); on the disk plus
// the boundary self-interaction terms.
double hamiltonian(const VortexState& state, double epsilon = 0.0);

struct FlowInvariants {
    Vec3 M;    // vorticity center sum xi_i x_i (2d embedded for the plane)
    double I;  // moment sum xi_i |x_i|^2
};
// Plane and sphere only; unsupported_geometry elsewhere.
FlowInvariants invariants(const VortexState& state);

// sum_{i != j} G_eps(x_i, x_j) over ordered pairs, and its exact derivative
// along the regularized flow (triple sum; pair self-terms cancel exactly).
double lyapunov(const VortexState& state, double epsilon);
double lyapunov_rate(const VortexState& state, double epsilon);

// Jacobian DT_t of the flow map, integrated alongside the trajectory from
// analytic kernel derivatives; (2N)^2, sphere (3N)^2.
DMat variational_flow(const VortexState& state, double t_final, const FlowOptions& opts);

struct ArrestedResult {
    VortexState final;
    bool arrested;
    Trajectory trajectory;  // of the epsilon-regularized flow, ends at event when arrested
};
// R^eps_t: the eps-flow endpoint if the running minimum distance stays above
// eps over [0, t], the initial state otherwise. Ties within 1e-12 of eps
// count as arrested.
ArrestedResult arrested_flow(const VortexState& state, double t_final, double epsilon,
                             FlowOptions opts = {});

}  // namespace vortexlab
