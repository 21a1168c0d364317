#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace rcas {

/// Uniform rectangular grid with a fixed time step.
/// Fields are stored row-major in (y, x): index = iy * nx + ix.
struct Grid {
    std::uint32_t nx = 0;
    std::uint32_t ny = 0;
    double dx = 1.0;
    double dy = 1.0;
    double dt = 1.0;

    std::uint32_t n_points() const { return nx * ny; }

    void validate() const {
        if (nx < 2) throw std::invalid_argument("Grid: nx must be >= 2");
        if (ny < 2) throw std::invalid_argument("Grid: ny must be >= 2");
        if (!(dx > 0.0)) throw std::invalid_argument("Grid: dx must be > 0");
        if (!(dy > 0.0)) throw std::invalid_argument("Grid: dy must be > 0");
        if (!(dt > 0.0)) throw std::invalid_argument("Grid: dt must be > 0");
    }

    bool operator==(const Grid&) const = default;
};

}  // namespace rcas
