#include "rcas/enkf.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>

#include "rcas/rng.hpp"

namespace rcas {

namespace {

Eigen::VectorXd measure_phi(const Eigen::VectorXd& phi, const PodBasis& basis,
                            const MeasurementOperator& op) {
    if (op.kind == MeasurementOperator::Kind::PodCoefficients) return phi;
    return measure_at_sensors(basis, phi, op.sensors);
}

Eigen::Index active_length(Scenario scenario, const EnsembleLayout& layout) {
    switch (scenario) {
        case Scenario::PhysicalOnly: return layout.phi_len;
        case Scenario::TwoFold: return layout.phi_len + layout.r_len;
        case Scenario::ThreeFold: return layout.phi_len + layout.r_len + layout.alpha_len;
    }
    return 0;
}

}  // namespace

EnsembleStats ensemble_stats(const AugmentedEnsemble& ens) {
    const Eigen::Index m = ens.size();
    if (m < 2) throw std::invalid_argument("ensemble_stats: need at least 2 members");
    EnsembleStats stats;
    stats.mean = ens.members.rowwise().mean();
    stats.anomalies = (ens.members.colwise() - stats.mean) / std::sqrt(m - 1.0);
    if (ens.members.rows() <= 10 * m)
        stats.covariance = stats.anomalies * stats.anomalies.transpose();
    return stats;
}

void refresh_observation_block(AugmentedEnsemble& ens, const PodBasis& basis,
                               const MeasurementOperator& op) {
    for (Eigen::Index j = 0; j < ens.size(); ++j) {
        const Eigen::VectorXd phi =
            ens.members.col(j).segment(ens.layout.phi_offset, ens.layout.phi_len);
        ens.members.col(j).segment(ens.layout.obs_offset, ens.layout.obs_len) =
            measure_phi(phi, basis, op);
    }
}

AugmentedEnsemble init_ensemble(Scenario scenario, const EsnModel& model,
                                const PodBasis& basis, const MeasurementOperator& op,
                                const Eigen::MatrixXd& phi_history,
                                const Eigen::VectorXd& phi0, const InitSpreads& spreads,
                                Eigen::Index m, std::uint64_t seed) {
    if (m < 2) throw std::invalid_argument("init_ensemble: need at least 2 members");
    if (phi_history.rows() < 1 || phi_history.cols() != model.n_inputs)
        throw std::invalid_argument("init_ensemble: bad coefficient history");
    if (spreads.phi < 0.0 || spreads.alpha_rel < 0.0)
        throw std::invalid_argument("init_ensemble: spreads must be >= 0");

    const Eigen::Index n_m = model.n_inputs;
    const Eigen::Index n_r = model.config.n_reservoir;

    AugmentedEnsemble ens;
    ens.scenario = scenario;
    ens.layout.phi_offset = 0;
    ens.layout.phi_len = n_m;
    ens.layout.r_offset = n_m;
    ens.layout.r_len = n_r;
    ens.layout.alpha_offset = n_m + n_r;
    ens.layout.alpha_len = n_m;
    ens.layout.obs_offset = n_m + n_r + n_m;
    ens.layout.obs_len = op.obs_dim(n_m);
    ens.members.resize(ens.layout.total(), m);
    ens.diverged.assign(static_cast<std::size_t>(m), 0);

    const Eigen::VectorXd alpha_trained = factorize_output(model).alpha;

    for (Eigen::Index j = 0; j < m; ++j) {
        Rng rng(substream_seed(seed, static_cast<std::uint64_t>(j)));

        Eigen::VectorXd phi_j(n_m);
        for (Eigen::Index i = 0; i < n_m; ++i) phi_j(i) = phi0(i) + spreads.phi * rng.normal01();

        // Reservoir spin-up over this member's perturbed copy of the recent
        // coefficient history.
        Eigen::VectorXd r = Eigen::VectorXd::Zero(n_r);
        for (Eigen::Index k = 0; k < phi_history.rows(); ++k) {
            Eigen::VectorXd drive = phi_history.row(k).transpose();
            for (Eigen::Index i = 0; i < n_m; ++i) drive(i) += spreads.phi * rng.normal01();
            r = step_reservoir(model, r, drive);
        }

        Eigen::VectorXd alpha_j = alpha_trained;
        for (Eigen::Index i = 0; i < n_m; ++i) {
            // Draw for every member so the stream layout is scenario-free.
            const double rel = spreads.alpha_rel * rng.normal01();
            if (scenario == Scenario::ThreeFold)
                alpha_j(i) = std::max(0.0, alpha_trained(i) * (1.0 + rel));
        }

        ens.members.col(j).segment(ens.layout.phi_offset, n_m) = phi_j;
        ens.members.col(j).segment(ens.layout.r_offset, n_r) = r;
        ens.members.col(j).segment(ens.layout.alpha_offset, n_m) = alpha_j;
    }
    refresh_observation_block(ens, basis, op);
    return ens;
}

void forecast_ensemble(AugmentedEnsemble& ens, const EsnModel& model, const PodBasis& basis,
                       const MeasurementOperator& op, Eigen::Index n_steps) {
    if (n_steps < 1) throw std::invalid_argument("forecast_ensemble: n_steps must be >= 1");
    if (!model.trained()) throw std::invalid_argument("forecast_ensemble: untrained model");

    OutputFactorization f;
    if (ens.scenario == Scenario::ThreeFold) f = factorize_output(model);

    for (Eigen::Index j = 0; j < ens.size(); ++j) {
        EsnModel member_model = model;
        if (ens.scenario == Scenario::ThreeFold) {
            OutputFactorization fj = f;
            fj.alpha = ens.members.col(j).segment(ens.layout.alpha_offset, ens.layout.alpha_len);
            member_model.w_out = recompose_output(fj);
        }
        EsnState state;
        state.phi = ens.members.col(j).segment(ens.layout.phi_offset, ens.layout.phi_len);
        state.r = ens.members.col(j).segment(ens.layout.r_offset, ens.layout.r_len);
        const ClosedLoopResult run = closed_loop(member_model, state, n_steps);
        if (run.diverged) ens.diverged[static_cast<std::size_t>(j)] = 1;
        ens.members.col(j).segment(ens.layout.phi_offset, ens.layout.phi_len) =
            run.final_state.phi;
        ens.members.col(j).segment(ens.layout.r_offset, ens.layout.r_len) = run.final_state.r;
    }
    refresh_observation_block(ens, basis, op);
}

void analysis_update(AugmentedEnsemble& ens, const Observation& obs, const PodBasis& basis,
                     const MeasurementOperator& op) {
    const Eigen::Index m = ens.size();
    const Eigen::Index n_d = ens.layout.obs_len;
    if (obs.d.size() != n_d || obs.c_dd_diag.size() != n_d)
        throw std::invalid_argument("analysis_update: observation dimension mismatch");
    if (obs.c_dd_diag.minCoeff() <= 0.0)
        throw std::invalid_argument("analysis_update: c_dd entries must be > 0");

    const EnsembleStats stats = ensemble_stats(ens);
    const Eigen::MatrixXd y = stats.anomalies.middleRows(ens.layout.obs_offset, n_d);
    const Eigen::VectorXd y_mean = stats.mean.segment(ens.layout.obs_offset, n_d);

    // Innovation covariance S = C_dd + Y Y^T.
    Eigen::MatrixXd s = y * y.transpose();
    s.diagonal() += obs.c_dd_diag;
    Eigen::LLT<Eigen::MatrixXd> llt(s);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error(
            "analysis_update: innovation covariance numerically singular; "
            "increase c_dd or apply inflation");

    // Member-space weights for the mean update: K (d - y_mean) = A Y^T S^{-1} (d - y_mean).
    const Eigen::VectorXd w_mean = y.transpose() * llt.solve(obs.d - y_mean);

    // Symmetric square-root transform T = (I + Y^T C_dd^{-1} Y)^{-1/2}.
    const Eigen::MatrixXd y_scaled = obs.c_dd_diag.cwiseInverse().asDiagonal() * y;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(y.transpose() * y_scaled);
    if (eig.info() != Eigen::Success)
        throw std::runtime_error("analysis_update: transform eigensolve failed");
    const Eigen::VectorXd inv_sqrt =
        (eig.eigenvalues().cwiseMax(0.0).array() + 1.0).rsqrt();
    const Eigen::MatrixXd transform =
        eig.eigenvectors() * inv_sqrt.asDiagonal() * eig.eigenvectors().transpose();

    // Only the scenario's slices (contiguous from the front) plus the
    // observation block change; the rest is left bit-identical.
    const Eigen::Index n_active = active_length(ens.scenario, ens.layout);
    const auto update_rows = [&](Eigen::Index offset, Eigen::Index len) {
        if (len == 0) return;
        const Eigen::MatrixXd a = stats.anomalies.middleRows(offset, len);
        const Eigen::VectorXd new_mean = stats.mean.segment(offset, len) + a * w_mean;
        ens.members.middleRows(offset, len) =
            (std::sqrt(m - 1.0) * (a * transform)).colwise() + new_mean;
    };
    update_rows(0, n_active);
    update_rows(ens.layout.obs_offset, n_d);

    if (ens.scenario == Scenario::ThreeFold)
        ens.alpha_block() = ens.alpha_block().cwiseMax(0.0);

    refresh_observation_block(ens, basis, op);
}

void inflate(AugmentedEnsemble& ens, double factor) {
    if (factor < 1.0) throw std::invalid_argument("inflate: factor must be >= 1");
    if (factor == 1.0) return;
    const Eigen::VectorXd mean = ens.members.rowwise().mean();
    ens.members = (factor * (ens.members.colwise() - mean)).colwise() + mean;
}

double phi_spread(const AugmentedEnsemble& ens) {
    const Eigen::MatrixXd phi = ens.phi_block();
    const Eigen::VectorXd mean = phi.rowwise().mean();
    return (phi.colwise() - mean).cwiseAbs().maxCoeff();
}

double alpha_spread(const AugmentedEnsemble& ens) {
    if (ens.layout.alpha_len == 0 || ens.scenario != Scenario::ThreeFold) return 0.0;
    const Eigen::MatrixXd a = ens.alpha_block();
    const Eigen::VectorXd mean = a.rowwise().mean();
    const double var =
        (a.colwise() - mean).squaredNorm() / static_cast<double>((a.cols() - 1) * a.rows());
    return std::sqrt(var);
}

}  // namespace rcas
