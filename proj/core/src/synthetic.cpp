#include "rcas/synthetic.hpp"

#include <Eigen/QR>
#include <cmath>
#include <numbers>

#include "rcas/rng.hpp"

namespace rcas {

void SyntheticWakeSpec::validate() const {
    grid.validate();
    if (n_pairs < 1) throw std::invalid_argument("SyntheticWakeSpec: n_pairs must be >= 1");
    if (!(base_period > 4.0))
        throw std::invalid_argument("SyntheticWakeSpec: base_period must be > 4");
    if (amplitudes.size() != n_pairs)
        throw std::invalid_argument("SyntheticWakeSpec: amplitudes must have one entry per pair");
    for (std::size_t p = 1; p < amplitudes.size(); ++p) {
        if (!(amplitudes[p] < amplitudes[p - 1]))
            throw std::invalid_argument("SyntheticWakeSpec: amplitudes must be strictly decreasing");
    }
    if (n_t < 1) throw std::invalid_argument("SyntheticWakeSpec: n_t must be >= 1");
}

Eigen::MatrixXd synthetic_wake_modes(const SyntheticWakeSpec& spec) {
    const Eigen::Index n = spec.grid.n_points();
    const Eigen::Index n_modes = 2 * spec.n_pairs;
    Eigen::MatrixXd raw(2 * n, n_modes);

    // Discrete sine products with distinct wavenumbers per mode; the uy part
    // uses a shifted wavenumber pair so both components carry signal. The
    // QR pass below makes the columns exactly orthonormal.
    const auto sine_field = [&](int kx, int ky, Eigen::Index offset, double scale,
                                Eigen::Index col, Eigen::MatrixXd& out) {
        for (std::uint32_t iy = 0; iy < spec.grid.ny; ++iy) {
            const double sy = std::sin(ky * std::numbers::pi * (iy + 1.0) / (spec.grid.ny + 1.0));
            for (std::uint32_t ix = 0; ix < spec.grid.nx; ++ix) {
                const double sx =
                    std::sin(kx * std::numbers::pi * (ix + 1.0) / (spec.grid.nx + 1.0));
                out(offset + iy * spec.grid.nx + ix, col) = scale * sx * sy;
            }
        }
    };

    raw.setZero();
    for (Eigen::Index q = 0; q < n_modes; ++q) {
        const int kx = static_cast<int>(q % 3) + 1;
        const int ky = static_cast<int>(q / 3) + 1;
        sine_field(kx, ky, 0, 1.0, q, raw);
        sine_field(kx + 1, ky + 1, n, 0.5, q, raw);
    }

    Eigen::HouseholderQR<Eigen::MatrixXd> qr(raw);
    Eigen::MatrixXd q_full = qr.householderQ() * Eigen::MatrixXd::Identity(2 * n, n_modes);

    // Fix signs so the largest-magnitude entry of each mode is positive.
    for (Eigen::Index j = 0; j < n_modes; ++j) {
        Eigen::Index imax = 0;
        q_full.col(j).cwiseAbs().maxCoeff(&imax);
        if (q_full(imax, j) < 0.0) q_full.col(j) = -q_full.col(j);
    }
    return q_full;
}

SnapshotSet generate_synthetic_wake(const SyntheticWakeSpec& spec) {
    spec.validate();
    const Eigen::Index n = spec.grid.n_points();
    const Eigen::MatrixXd modes = synthetic_wake_modes(spec);

    // Seeded phase offset per pair; the temporal coefficients stay a
    // (cos, sin) quadrature pair at frequency p * (2*pi / base_period).
    Rng rng(spec.seed);
    std::vector<double> phases(spec.n_pairs);
    for (auto& ph : phases) ph = rng.uniform(0.0, 2.0 * std::numbers::pi);

    SnapshotSet out;
    out.grid = spec.grid;
    out.ux.resize(spec.n_t, n);
    out.uy.resize(spec.n_t, n);
    out.times.resize(spec.n_t);

    Eigen::VectorXd mean(2 * n);
    mean.head(n).setConstant(spec.mean_ux);
    mean.tail(n).setConstant(spec.mean_uy);

    for (std::uint32_t k = 0; k < spec.n_t; ++k) {
        Eigen::VectorXd u = mean;
        for (std::uint32_t p = 0; p < spec.n_pairs; ++p) {
            const double omega = (p + 1.0) * 2.0 * std::numbers::pi / spec.base_period;
            const double arg = omega * k + phases[p];
            u += spec.amplitudes[p] *
                 (std::cos(arg) * modes.col(2 * p) + std::sin(arg) * modes.col(2 * p + 1));
        }
        out.ux.row(k) = u.head(n).transpose();
        out.uy.row(k) = u.tail(n).transpose();
        out.times[k] = k * spec.grid.dt;
    }
    return out;
}

}  // namespace rcas
