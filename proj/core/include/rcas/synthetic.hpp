#pragma once

#include <cstdint>
#include <vector>

#include "rcas/snapshot.hpp"

namespace rcas {

/// Analytic low-rank wake surrogate: a constant mean flow plus n_pairs
/// harmonic mode pairs. Pair p contributes two orthonormal spatial modes
/// oscillating as (cos, sin) at frequency p * (2*pi / base_period), so the
/// mean-subtracted data have exact rank 2 * n_pairs.
struct SyntheticWakeSpec {
    Grid grid;
    std::uint32_t n_pairs = 2;
    double base_period = 40.0;          // steps per period of the first pair
    std::vector<double> amplitudes;     // one per pair, strictly decreasing
    double mean_ux = 1.0;
    double mean_uy = 0.0;
    std::uint32_t n_t = 0;
    std::uint64_t seed = 0;

    void validate() const;
};

SnapshotSet generate_synthetic_wake(const SyntheticWakeSpec& spec);

/// The exact orthonormal spatial modes of the surrogate, stacked [ux; uy],
/// one column per mode (2 * n_pairs columns). Exposed for tests.
Eigen::MatrixXd synthetic_wake_modes(const SyntheticWakeSpec& spec);

}  // namespace rcas
