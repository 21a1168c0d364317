#include "rcas/pod.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <limits>

namespace rcas {

PodBasis compute_pod(const SnapshotSet& data, Eigen::Index n_modes) {
    data.validate();
    const Eigen::Index n_t = data.n_t();
    const Eigen::Index n = data.ux.cols();
    if (n_t < 2) throw std::invalid_argument("compute_pod: need at least 2 snapshots");
    if (n_modes < 1 || n_modes > std::min(n_t, 2 * n))
        throw std::invalid_argument("compute_pod: n_modes out of range");

    // Snapshot matrix, one column per time step, stacked [ux; uy].
    Eigen::MatrixXd d(2 * n, n_t);
    d.topRows(n) = data.ux.transpose();
    d.bottomRows(n) = data.uy.transpose();

    PodBasis basis;
    basis.grid = data.grid;
    basis.mean_field = d.rowwise().mean();
    d.colwise() -= basis.mean_field;

    Eigen::BDCSVD<Eigen::MatrixXd> svd(d, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd& s = svd.singularValues();

    basis.modes = svd.matrixU().leftCols(n_modes);
    basis.singular_values = s.head(n_modes);
    basis.temporal_coeffs = svd.matrixV().leftCols(n_modes);

    for (Eigen::Index j = 0; j < n_modes; ++j) {
        Eigen::Index imax = 0;
        basis.modes.col(j).cwiseAbs().maxCoeff(&imax);
        if (basis.modes(imax, j) < 0.0) {
            basis.modes.col(j) = -basis.modes.col(j);
            basis.temporal_coeffs.col(j) = -basis.temporal_coeffs.col(j);
        }
    }

    const double total = s.squaredNorm();
    basis.energy_fraction = total > 0.0 ? basis.singular_values.squaredNorm() / total : 1.0;
    return basis;
}

Eigen::VectorXd project(const PodBasis& basis, const Eigen::VectorXd& snapshot) {
    if (snapshot.size() != basis.field_size())
        throw std::invalid_argument("project: snapshot length does not match modes");
    const double tiny = std::numeric_limits<double>::min();
    if (basis.singular_values.size() == 0 || basis.singular_values.minCoeff() <= tiny)
        throw std::runtime_error("project: singular basis (zero singular value retained)");
    return basis.singular_values.cwiseInverse().asDiagonal() *
           (basis.modes.transpose() * (snapshot - basis.mean_field));
}

Eigen::VectorXd reconstruct(const PodBasis& basis, const Eigen::VectorXd& phi) {
    if (phi.size() != basis.n_modes())
        throw std::invalid_argument("reconstruct: coefficient length does not match modes");
    return basis.mean_field + basis.modes * (basis.singular_values.asDiagonal() * phi);
}

SensorSet select_sensors(const PodBasis& basis, Eigen::Index n_sensors) {
    const Eigen::Index n = basis.grid.n_points();
    if (n_sensors < 1 || n_sensors > n)
        throw std::invalid_argument("select_sensors: n_sensors out of range");

    const Eigen::Index n_m = basis.n_modes();
    const Eigen::Index n_rows = 2 * n;  // candidate measurements: rows of Psi

    // Column-pivoted QR on Psi^T by greedy residual-norm pivoting with
    // Gram-Schmidt deflation. Once the n_m pivots exhaust the mode space,
    // selection continues by greedy leverage (D-optimal) growth of the
    // sampled-row information matrix.
    Eigen::MatrixXd e = basis.modes.transpose();  // [n_m x 2n], deflated in place
    std::vector<bool> point_taken(n, false);

    SensorSet sensors;
    Eigen::MatrixXd info = Eigen::MatrixXd::Zero(n_m, n_m);  // S^T S of picked rows
    Eigen::Index qr_picks = 0;

    while (static_cast<Eigen::Index>(sensors.size()) < n_sensors) {
        Eigen::Index best = -1;
        double best_score = -1.0;
        const bool qr_phase = qr_picks < n_m;
        Eigen::LDLT<Eigen::MatrixXd> reg;
        if (!qr_phase) {
            const double ridge = 1e-12 * (info.trace() + 1.0);
            reg.compute(info + ridge * Eigen::MatrixXd::Identity(n_m, n_m));
        }
        for (Eigen::Index c = 0; c < n_rows; ++c) {
            if (point_taken[c % n]) continue;
            double score;
            if (qr_phase) {
                score = e.col(c).squaredNorm();
            } else {
                const Eigen::VectorXd psi = basis.modes.row(c).transpose();
                score = psi.dot(reg.solve(psi));
            }
            if (score > best_score) {
                best_score = score;
                best = c;
            }
        }
        if (best < 0) break;

        const auto point = static_cast<std::uint32_t>(best % n);
        point_taken[point] = true;
        sensors.indices.push_back(point);
        sensors.component_map.push_back(static_cast<std::uint8_t>(best / n));
        const auto ix = point % basis.grid.nx;
        const auto iy = point / basis.grid.nx;
        sensors.coordinates.emplace_back(ix * basis.grid.dx, iy * basis.grid.dy);

        const Eigen::VectorXd row = basis.modes.row(best).transpose();
        info += row * row.transpose();
        if (qr_phase && best_score > 0.0) {
            const Eigen::VectorXd u = e.col(best) / std::sqrt(best_score);
            e -= u * (u.transpose() * e);
            ++qr_picks;
        }
    }
    return sensors;
}

Eigen::VectorXd measure_at_sensors(const PodBasis& basis, const Eigen::VectorXd& phi,
                                   const SensorSet& sensors) {
    if (sensors.size() == 0) throw std::invalid_argument("measure_at_sensors: empty sensor set");
    const Eigen::Index n = basis.grid.n_points();
    const Eigen::Index n_d = static_cast<Eigen::Index>(sensors.size());
    const Eigen::VectorXd scaled = basis.singular_values.asDiagonal() * phi;

    Eigen::VectorXd obs(2 * n_d);
    for (Eigen::Index q = 0; q < n_d; ++q) {
        const Eigen::Index idx = sensors.indices[q];
        if (idx >= static_cast<std::uint32_t>(n))
            throw std::invalid_argument("measure_at_sensors: sensor index out of range");
        obs(q) = basis.mean_field(idx) + basis.modes.row(idx) * scaled;
        obs(n_d + q) = basis.mean_field(n + idx) + basis.modes.row(n + idx) * scaled;
    }
    return obs;
}

}  // namespace rcas
