#include "rcas/noise.hpp"

#include <cmath>

#include "rcas/rng.hpp"

namespace rcas {

int noise_kernel_radius(double kernel_std) {
    return static_cast<int>(std::ceil(3.0 * kernel_std));
}

namespace {

Eigen::MatrixXd gaussian_stencil(double kernel_std) {
    const int r = noise_kernel_radius(kernel_std);
    Eigen::MatrixXd g(2 * r + 1, 2 * r + 1);
    if (r == 0 || kernel_std <= 0.0) {
        g.setOnes();
        g /= g.sum();
        return g;
    }
    const double inv2s2 = 1.0 / (2.0 * kernel_std * kernel_std);
    for (int j = -r; j <= r; ++j)
        for (int i = -r; i <= r; ++i)
            g(j + r, i + r) = std::exp(-(i * i + j * j) * inv2s2);
    g /= g.sum();
    return g;
}

// Symmetric reflection at the boundary: -1 -> 0, n -> n-1.
int reflect(int i, int n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
}

void add_one_component(Eigen::MatrixXd& field, Eigen::Index k, const Grid& grid,
                       const Eigen::MatrixXd& stencil, Rng& rng, double eps_std) {
    const int nx = static_cast<int>(grid.nx);
    const int ny = static_cast<int>(grid.ny);
    const int r = (static_cast<int>(stencil.rows()) - 1) / 2;

    Eigen::MatrixXd eps(ny, nx);
    for (int iy = 0; iy < ny; ++iy)
        for (int ix = 0; ix < nx; ++ix) eps(iy, ix) = rng.normal(0.0, eps_std);

    for (int iy = 0; iy < ny; ++iy) {
        for (int ix = 0; ix < nx; ++ix) {
            double acc = 0.0;
            for (int j = -r; j <= r; ++j)
                for (int i = -r; i <= r; ++i)
                    acc += stencil(j + r, i + r) * eps(reflect(iy + j, ny), reflect(ix + i, nx));
            field(k, iy * nx + ix) += acc;
        }
    }
}

}  // namespace

SnapshotSet add_convolved_noise(const SnapshotSet& data, const NoiseModel& noise) {
    noise.validate();
    data.validate();
    const int r = noise_kernel_radius(noise.kernel_std);
    if (2 * r + 1 > static_cast<int>(data.grid.nx) || 2 * r + 1 > static_cast<int>(data.grid.ny))
        throw std::invalid_argument("add_convolved_noise: kernel support exceeds grid");

    SnapshotSet out = data;
    if (noise.eps_std == 0.0) return out;

    const Eigen::MatrixXd stencil = gaussian_stencil(noise.kernel_std);
    for (Eigen::Index k = 0; k < out.n_t(); ++k) {
        // Per-snapshot stream, so results are independent of any time-loop
        // parallelization.
        Rng rng(substream_seed(noise.seed, static_cast<std::uint64_t>(k)));
        add_one_component(out.ux, k, out.grid, stencil, rng, noise.eps_std);
        add_one_component(out.uy, k, out.grid, stencil, rng, noise.eps_std);
    }
    return out;
}

}  // namespace rcas
