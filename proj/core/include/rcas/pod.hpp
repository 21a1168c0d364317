#pragma once

#include <cstdint>
#include <vector>

#include "rcas/snapshot.hpp"

namespace rcas {

/// Truncated snapshot-POD basis. Spatial modes stack [ux; uy] and are
/// orthonormal columns; temporal coefficients are the rows of the left
/// singular factor, so project() of training snapshot k reproduces row k.
struct PodBasis {
    Grid grid;
    Eigen::MatrixXd modes;            // [(2*nx*ny) x n_m]
    Eigen::VectorXd singular_values;  // length n_m, nonincreasing
    Eigen::MatrixXd temporal_coeffs;  // [n_t x n_m]
    Eigen::VectorXd mean_field;       // length 2*nx*ny
    double energy_fraction = 0.0;

    Eigen::Index n_modes() const { return modes.cols(); }
    Eigen::Index field_size() const { return modes.rows(); }
};

/// Sensor locations chosen by column-pivoted QR, numbered by pivot order.
/// Each sensor reads both velocity components at its grid point.
struct SensorSet {
    std::vector<std::uint32_t> indices;        // grid-point index per sensor
    std::vector<std::uint8_t> component_map;   // 0 = ux row pivoted, 1 = uy
    std::vector<std::pair<double, double>> coordinates;  // physical (x, y)

    std::size_t size() const { return indices.size(); }
};

PodBasis compute_pod(const SnapshotSet& data, Eigen::Index n_modes);

/// phi = Sigma^{-1} Psi^T (snapshot - mean); zero for the mean field.
Eigen::VectorXd project(const PodBasis& basis, const Eigen::VectorXd& snapshot);

/// mean + Psi Sigma phi.
Eigen::VectorXd reconstruct(const PodBasis& basis, const Eigen::VectorXd& phi);

SensorSet select_sensors(const PodBasis& basis, Eigen::Index n_sensors);

/// Reconstructed field sampled at the sensors, ordered
/// [ux(x_1)..ux(x_q); uy(x_1)..uy(x_q)].
Eigen::VectorXd measure_at_sensors(const PodBasis& basis, const Eigen::VectorXd& phi,
                                   const SensorSet& sensors);

}  // namespace rcas
