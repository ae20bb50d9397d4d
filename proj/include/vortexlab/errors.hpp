#pragma once

#include <stdexcept>
#include <string>

namespace vortexlab {

// Evaluation of an unregularized kernel at (numerically) coincident points.
struct coincident_error : std::domain_error {
    explicit coincident_error(double d)
        : std::domain_error("coincident points: distance " + std::to_string(d) + " < 1e-14") {}
};

// Input point violates the surface constraint (off the unit sphere, or
// outside the open unit disk).
struct surface_error : std::domain_error {
    explicit surface_error(const std::string& what) : std::domain_error(what) {}
};

// A disk vortex came too close to the boundary for the image construction.
struct boundary_error : std::domain_error {
    explicit boundary_error(const std::string& what) : std::domain_error(what) {}
};

// Operation not available for the given surface (e.g. linear/angular
// impulse on the torus).
struct unsupported_geometry : std::invalid_argument {
    explicit unsupported_geometry(const std::string& what) : std::invalid_argument(what) {}
};

// Sphere trajectory drifted off the surface beyond tolerance within a step.
struct surface_drift_error : std::runtime_error {
    explicit surface_drift_error(double r)
        : std::runtime_error("sphere renormalization residual " + std::to_string(r) + " > 1e-9") {}
};

// Unregularized integration collapsed (step size underflow) before the
// requested time; carries the blow-up time estimate.
struct near_collapse_error : std::runtime_error {
    double time;
    explicit near_collapse_error(double t)
        : std::runtime_error("near-collapse at t = " + std::to_string(t)), time(t) {}
};

// Bad run configuration (CLI / config file level).
struct config_error : std::invalid_argument {
    explicit config_error(const std::string& what) : std::invalid_argument(what) {}
};

}  // namespace vortexlab
