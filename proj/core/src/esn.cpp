#include "rcas/esn.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>
#include <sstream>

#include "rcas/rng.hpp"

namespace rcas {

namespace {

double spectral_radius_of(const Eigen::SparseMatrix<double>& w) {
    const Eigen::MatrixXd dense(w);
    Eigen::EigenSolver<Eigen::MatrixXd> es(dense, /*computeEigenvectors=*/false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace

EsnModel build_reservoir(const EsnConfig& config, Eigen::Index n_inputs) {
    config.validate();
    if (n_inputs < 1) throw std::invalid_argument("build_reservoir: n_inputs must be >= 1");

    const Eigen::Index n_r = config.n_reservoir;
    EsnModel model;
    model.config = config;
    model.n_inputs = n_inputs;
    model.input_norm = Eigen::VectorXd::Ones(n_inputs);
    model.w_out = Eigen::MatrixXd::Zero(n_inputs, n_r + 1);

    for (int attempt = 0; attempt < 10; ++attempt) {
        Rng rng(attempt == 0 ? config.seed
                             : substream_seed(config.seed, static_cast<std::uint64_t>(attempt)));

        // One nonzero per reservoir row, uniform on [-1, 1], at a uniformly
        // chosen input column (including the bias column).
        std::vector<Eigen::Triplet<double>> in_triplets;
        in_triplets.reserve(n_r);
        for (Eigen::Index i = 0; i < n_r; ++i) {
            const auto col = static_cast<Eigen::Index>(
                rng.uniform_index(static_cast<std::uint64_t>(n_inputs + 1)));
            in_triplets.emplace_back(i, col, rng.uniform(-1.0, 1.0));
        }

        const double p = config.connectivity / static_cast<double>(n_r);
        std::vector<Eigen::Triplet<double>> w_triplets;
        for (Eigen::Index i = 0; i < n_r; ++i)
            for (Eigen::Index j = 0; j < n_r; ++j)
                if (rng.uniform01() < p) w_triplets.emplace_back(i, j, rng.uniform(-1.0, 1.0));

        Eigen::SparseMatrix<double> w(n_r, n_r);
        w.setFromTriplets(w_triplets.begin(), w_triplets.end());
        const double radius = spectral_radius_of(w);
        if (radius < 1e-12) continue;  // degenerate draw, next substream

        model.w_in.resize(n_r, n_inputs + 1);
        model.w_in.setFromTriplets(in_triplets.begin(), in_triplets.end());
        model.w = w / radius;
        return model;
    }
    throw std::runtime_error("build_reservoir: degenerate reservoir after 10 attempts");
}

Eigen::VectorXd step_reservoir(const EsnModel& model, const Eigen::VectorXd& r,
                               const Eigen::VectorXd& phi_in) {
    if (phi_in.size() != model.n_inputs)
        throw std::invalid_argument("step: input dimension mismatch");
    Eigen::VectorXd in(model.n_inputs + 1);
    in.head(model.n_inputs) = phi_in.cwiseProduct(model.input_norm);
    in(model.n_inputs) = model.config.input_bias;
    const Eigen::VectorXd pre = model.config.input_scaling * (model.w_in * in) +
                                model.config.spectral_radius * (model.w * r);
    return pre.array().tanh();
}

EsnState step(const EsnModel& model, const EsnState& state, const Eigen::VectorXd& phi_in) {
    EsnState next;
    next.r = step_reservoir(model, state.r, phi_in);
    Eigen::VectorXd r_aug(next.r.size() + 1);
    r_aug << next.r, 1.0;
    next.phi = model.w_out * r_aug;
    return next;
}

Eigen::MatrixXd open_loop(const EsnModel& model, const Eigen::MatrixXd& phi_sequence) {
    const Eigen::Index len = phi_sequence.rows();
    const Eigen::Index washout = model.config.washout;
    if (len <= washout + 1)
        throw std::invalid_argument("open_loop: sequence too short for washout");

    Eigen::VectorXd r = Eigen::VectorXd::Zero(model.config.n_reservoir);
    const Eigen::Index n_usable = len - 1 - washout;
    Eigen::MatrixXd states(model.config.n_reservoir, n_usable);
    for (Eigen::Index k = 0; k + 1 < len; ++k) {
        r = step_reservoir(model, r, phi_sequence.row(k).transpose());
        if (k + 1 > washout) states.col(k - washout) = r;
    }
    return states;
}

EsnModel train(EsnModel model, const Eigen::MatrixXd& phi_train) {
    if (phi_train.cols() != model.n_inputs)
        throw std::invalid_argument("train: coefficient dimension mismatch");
    if (phi_train.rows() <= model.config.washout + 1)
        throw std::invalid_argument("train: series too short for washout");

    // Range normalization; constant columns fall back to 1.
    for (Eigen::Index j = 0; j < model.n_inputs; ++j) {
        const double range = phi_train.col(j).maxCoeff() - phi_train.col(j).minCoeff();
        model.input_norm(j) = range > 0.0 ? 1.0 / range : 1.0;
    }
    model.phi_abs_max = phi_train.cwiseAbs().maxCoeff();

    const Eigen::MatrixXd states = open_loop(model, phi_train);
    const Eigen::Index n_usable = states.cols();
    const Eigen::Index n_r = model.config.n_reservoir;

    Eigen::MatrixXd r_aug(n_r + 1, n_usable);
    r_aug.topRows(n_r) = states;
    r_aug.bottomRows(1).setOnes();
    const Eigen::MatrixXd targets =
        phi_train.bottomRows(n_usable).transpose();  // rows washout+1 .. end

    Eigen::MatrixXd normal = r_aug * r_aug.transpose();
    const double lambda = model.config.tikhonov;
    if (lambda == 0.0) {
        Eigen::FullPivLU<Eigen::MatrixXd> lu(normal);
        if (!lu.isInvertible())
            throw std::runtime_error(
                "train: singular normal matrix with tikhonov=0; set tikhonov > 0");
        model.w_out = lu.solve(r_aug * targets.transpose()).transpose();
    } else {
        normal.diagonal().array() += lambda;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(normal);
        model.w_out = ldlt.solve(r_aug * targets.transpose()).transpose();
    }
    return model;
}

ClosedLoopResult closed_loop(const EsnModel& model, const EsnState& state0,
                             Eigen::Index n_steps) {
    if (n_steps < 0) throw std::invalid_argument("closed_loop: n_steps must be >= 0");
    ClosedLoopResult out;
    out.trajectory.resize(n_steps + 1, model.n_inputs);
    out.trajectory.row(0) = state0.phi.transpose();
    out.final_state = state0;

    const double threshold = model.divergence_threshold();
    for (Eigen::Index k = 0; k < n_steps; ++k) {
        out.final_state = step(model, out.final_state, out.final_state.phi);
        if (threshold > 0.0 &&
            (!out.final_state.phi.allFinite() ||
             out.final_state.phi.cwiseAbs().maxCoeff() > threshold)) {
            out.diverged = true;
            // Hold the last finite value for the remaining rows.
            for (Eigen::Index j = k; j < n_steps; ++j)
                out.trajectory.row(j + 1) = out.trajectory.row(k);
            out.final_state.phi = out.trajectory.row(k).transpose();
            break;
        }
        out.trajectory.row(k + 1) = out.final_state.phi.transpose();
    }
    return out;
}

HyperparamGrid default_hyperparam_grid(double sigma_lo, double sigma_hi, double rho_lo,
                                       double rho_hi, int n_sigma, int n_rho) {
    HyperparamGrid grid;
    for (int i = 0; i < n_sigma; ++i) {
        const double t = n_sigma == 1 ? 0.0 : static_cast<double>(i) / (n_sigma - 1);
        grid.input_scalings.push_back(
            std::exp(std::log(sigma_lo) + t * (std::log(sigma_hi) - std::log(sigma_lo))));
    }
    for (int i = 0; i < n_rho; ++i) {
        const double t = n_rho == 1 ? 0.0 : static_cast<double>(i) / (n_rho - 1);
        grid.spectral_radii.push_back(rho_lo + t * (rho_hi - rho_lo));
    }
    return grid;
}

std::pair<double, double> grid_search_hyperparams(const EsnConfig& base,
                                                  const Eigen::MatrixXd& phi_train,
                                                  const HyperparamGrid& grid,
                                                  double validation_fraction) {
    if (grid.input_scalings.empty() || grid.spectral_radii.empty())
        throw std::invalid_argument("grid_search_hyperparams: empty grid");
    const Eigen::Index len = phi_train.rows();
    const auto n_val = std::max<Eigen::Index>(
        1, static_cast<Eigen::Index>(std::floor(validation_fraction * len)));
    const Eigen::Index n_fit = len - n_val;
    if (n_fit <= base.washout + 1)
        throw std::invalid_argument("grid_search_hyperparams: training fold too short");

    double best_score = std::numeric_limits<double>::infinity();
    double best_sigma = 0.0, best_rho = 0.0;
    bool any = false;

    for (double rho : grid.spectral_radii) {
        for (double sigma : grid.input_scalings) {
            EsnConfig cfg = base;
            cfg.spectral_radius = rho;
            cfg.input_scaling = sigma;
            EsnModel model = train(build_reservoir(cfg, phi_train.cols()), phi_train.topRows(n_fit));

            // Teacher-force through the training fold, then forecast the
            // held-out tail autonomously.
            EsnState state;
            state.r = Eigen::VectorXd::Zero(cfg.n_reservoir);
            for (Eigen::Index k = 0; k < n_fit; ++k)
                state = step(model, state, phi_train.row(k).transpose());
            const ClosedLoopResult run = closed_loop(model, state, n_val - 1);
            if (run.diverged) continue;

            const double score =
                (run.trajectory - phi_train.bottomRows(n_val)).squaredNorm() /
                static_cast<double>(n_val * phi_train.cols());
            const bool better =
                score < best_score ||
                (score == best_score &&
                 (rho < best_rho || (rho == best_rho && sigma < best_sigma)));
            if (!any || better) {
                any = true;
                best_score = score;
                best_sigma = sigma;
                best_rho = rho;
            }
        }
    }
    if (!any) {
        std::ostringstream msg;
        msg << "grid_search_hyperparams: all candidates diverged; grid sigma_in = {";
        for (double s : grid.input_scalings) msg << s << " ";
        msg << "}, rho = {";
        for (double r : grid.spectral_radii) msg << r << " ";
        msg << "}";
        throw std::runtime_error(msg.str());
    }
    return {best_sigma, best_rho};
}

OutputFactorization factorize_output(const EsnModel& model) {
    if (model.w_out.size() == 0) throw std::invalid_argument("factorize_output: untrained model");
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(model.w_out,
                                          Eigen::ComputeThinU | Eigen::ComputeThinV);
    OutputFactorization f;
    f.x_factor = svd.matrixU();
    f.alpha = svd.singularValues();
    f.v_factor = svd.matrixV();
    return f;
}

Eigen::MatrixXd recompose_output(const OutputFactorization& f) {
    return f.x_factor * f.alpha.asDiagonal() * f.v_factor.transpose();
}

}  // namespace rcas
