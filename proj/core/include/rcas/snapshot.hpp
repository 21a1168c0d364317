#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "rcas/grid.hpp"

namespace rcas {

/// Space-time velocity data: two field components sampled on a uniform grid
/// at uniformly spaced times. Each row of ux/uy is one snapshot, row-major
/// in (y, x).
struct SnapshotSet {
    Grid grid;
    Eigen::MatrixXd ux;  // [n_t x (nx*ny)]
    Eigen::MatrixXd uy;  // [n_t x (nx*ny)]
    std::vector<double> times;

    Eigen::Index n_t() const { return ux.rows(); }

    void validate() const {
        grid.validate();
        if (ux.rows() != uy.rows() || ux.cols() != uy.cols())
            throw std::invalid_argument("SnapshotSet: ux and uy shapes differ");
        if (ux.cols() != static_cast<Eigen::Index>(grid.n_points()))
            throw std::invalid_argument("SnapshotSet: field size does not match grid");
        if (static_cast<Eigen::Index>(times.size()) != ux.rows())
            throw std::invalid_argument("SnapshotSet: times length does not match snapshots");
        for (std::size_t k = 1; k < times.size(); ++k) {
            const double step = times[k] - times[k - 1];
            if (!(step > 0.0) || std::abs(step - grid.dt) > 1e-12 * std::max(1.0, grid.dt))
                throw std::invalid_argument("SnapshotSet: times must increase uniformly by dt");
        }
    }

    /// Stacked [ux; uy] column vector for snapshot k, length 2*nx*ny.
    Eigen::VectorXd stacked(Eigen::Index k) const {
        Eigen::VectorXd v(2 * ux.cols());
        v.head(ux.cols()) = ux.row(k).transpose();
        v.tail(ux.cols()) = uy.row(k).transpose();
        return v;
    }
};

}  // namespace rcas
