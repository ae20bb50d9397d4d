#pragma once

#include <limits>
#include <vector>

#include "vortexlab/geometry.hpp"

namespace vortexlab {

// N vortex positions with their intensities on a fixed surface.
struct VortexState {
    Geometry geometry;
    std::vector<Point> positions;
    std::vector<double> intensities;

    VortexState(Geometry g, std::vector<Point> pos, std::vector<double> xi)
        : geometry(std::move(g)), positions(std::move(pos)), intensities(std::move(xi)) {}

    int n() const { return static_cast<int>(positions.size()); }

    void validate() const {
        if (positions.empty()) throw config_error("state needs at least one vortex");
        if (positions.size() != intensities.size())
            throw config_error("positions and intensities differ in length");
        for (const Point& p : positions) geometry.validate_point(p);
    }

    // +inf for a single vortex (min over the empty pair set)
    double min_pair_distance() const {
        double d = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < positions.size(); ++i)
            for (std::size_t j = i + 1; j < positions.size(); ++j)
                d = std::min(d, geometry.distance(positions[i], positions[j]));
        return d;
    }
};

}  // namespace vortexlab
