#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

namespace rcas {

struct EsnConfig {
    Eigen::Index n_reservoir = 40;
    double spectral_radius = 0.976;
    double input_scaling = 0.890;
    double connectivity = 4.0;   // average nonzeros per reservoir row
    double tikhonov = 1e-6;
    double input_bias = 0.1;     // symmetry-breaking constant
    Eigen::Index washout = 50;
    std::uint64_t seed = 0;

    void validate() const {
        if (n_reservoir < 1) throw std::invalid_argument("EsnConfig: n_reservoir must be >= 1");
        if (!(spectral_radius > 0.0)) throw std::invalid_argument("EsnConfig: spectral_radius must be > 0");
        if (!(input_scaling > 0.0)) throw std::invalid_argument("EsnConfig: input_scaling must be > 0");
        if (tikhonov < 0.0) throw std::invalid_argument("EsnConfig: tikhonov must be >= 0");
        if (connectivity < 1.0 || connectivity > static_cast<double>(n_reservoir))
            throw std::invalid_argument("EsnConfig: connectivity must be in [1, n_reservoir]");
        if (washout < 0) throw std::invalid_argument("EsnConfig: washout must be >= 0");
    }
};

/// Echo state network. w_in and w are fixed random maps (w rescaled to unit
/// spectral radius; spectral_radius is applied at step time), w_out is the
/// trained readout including an output bias column.
struct EsnModel {
    EsnConfig config;
    Eigen::Index n_inputs = 0;               // coefficient dimension n_m
    Eigen::SparseMatrix<double> w_in;        // [n_r x (n_m + 1)]
    Eigen::SparseMatrix<double> w;           // [n_r x n_r], spectral radius 1
    Eigen::MatrixXd w_out;                   // [n_m x (n_r + 1)]
    Eigen::VectorXd input_norm;              // g, length n_m, strictly positive
    double phi_abs_max = 0.0;                // training max, for divergence checks

    bool trained() const { return w_out.size() > 0 && !w_out.isZero(0.0); }
    double divergence_threshold() const { return 100.0 * phi_abs_max; }
};

struct EsnState {
    Eigen::VectorXd r;    // reservoir state, entries in (-1, 1) after a step
    Eigen::VectorXd phi;  // coefficient estimate
};

/// SVD factorization of the readout, w_out = x_factor * diag(alpha) * v_factor^T.
struct OutputFactorization {
    Eigen::MatrixXd x_factor;  // [n_m x n_m]
    Eigen::VectorXd alpha;     // length n_m, nonincreasing
    Eigen::MatrixXd v_factor;  // [(n_r + 1) x n_m]
};

EsnModel build_reservoir(const EsnConfig& config, Eigen::Index n_inputs);

/// One recurrence step: r' = tanh(sigma_in W_in [phi .* g; delta] + rho W r),
/// phi' = W_out [r'; 1].
EsnState step(const EsnModel& model, const EsnState& state, const Eigen::VectorXd& phi_in);

/// Reservoir update only, without the readout; usable on untrained models.
Eigen::VectorXd step_reservoir(const EsnModel& model, const Eigen::VectorXd& r,
                               const Eigen::VectorXd& phi_in);

/// Teacher-forced run from r = 0 over phi_sequence rows; the first `washout`
/// states are discarded. Column k of the result is the state driven by
/// inputs up to row washout+k, aligned with target row washout+k+1.
Eigen::MatrixXd open_loop(const EsnModel& model, const Eigen::MatrixXd& phi_sequence);

/// Ridge-trains w_out on the coefficient series (rows are time steps).
EsnModel train(EsnModel model, const Eigen::MatrixXd& phi_train);

struct ClosedLoopResult {
    Eigen::MatrixXd trajectory;  // [(n_steps + 1) x n_m], row 0 = initial phi
    EsnState final_state;
    bool diverged = false;
};

ClosedLoopResult closed_loop(const EsnModel& model, const EsnState& state0,
                             Eigen::Index n_steps);

struct HyperparamGrid {
    std::vector<double> input_scalings;
    std::vector<double> spectral_radii;
};

/// Log-spaced sigma_in and linear rho over the search box.
HyperparamGrid default_hyperparam_grid(double sigma_lo = 0.5, double sigma_hi = 50.0,
                                       double rho_lo = 0.2, double rho_hi = 1.05,
                                       int n_sigma = 8, int n_rho = 8);

/// Trains at each grid point on the leading fold of `phi_train`, scores the
/// closed-loop coefficient MSE on the held-out tail, and returns the argmin
/// (sigma_in, rho). Ties break toward smaller rho, then smaller sigma_in.
std::pair<double, double> grid_search_hyperparams(const EsnConfig& base,
                                                  const Eigen::MatrixXd& phi_train,
                                                  const HyperparamGrid& grid,
                                                  double validation_fraction = 0.2);

OutputFactorization factorize_output(const EsnModel& model);
Eigen::MatrixXd recompose_output(const OutputFactorization& f);

}  // namespace rcas
