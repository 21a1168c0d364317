#pragma once

#include <cstdint>
#include <stdexcept>

#include "rcas/snapshot.hpp"

namespace rcas {

/// Measurement noise: white Gaussian per grid point and component,
/// convolved with a normalized 2-D Gaussian kernel.
struct NoiseModel {
    double eps_std = 0.1;     // white-noise standard deviation (velocity units)
    double kernel_std = 0.1;  // kernel standard deviation (grid-index units)
    std::uint64_t seed = 0;

    void validate() const {
        if (eps_std < 0.0) throw std::invalid_argument("NoiseModel: eps_std must be >= 0");
        if (kernel_std < 0.0) throw std::invalid_argument("NoiseModel: kernel_std must be >= 0");
    }
};

/// Kernel stencil half-width: support is (2*ceil(3*std)+1)^2, renormalized
/// to sum 1.
int noise_kernel_radius(double kernel_std);

/// Returns a copy of `data` with eta = (eps * G) added per snapshot and per
/// component. Noise is independent in time; boundaries are reflective.
/// Deterministic given the seed.
SnapshotSet add_convolved_noise(const SnapshotSet& data, const NoiseModel& noise);

}  // namespace rcas
