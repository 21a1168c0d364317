#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "rcas/esn.hpp"
#include "rcas/pod.hpp"

namespace rcas {

enum class Scenario {
    PhysicalOnly,  // update phi only
    TwoFold,       // update [phi; r]
    ThreeFold,     // update [phi; r; alpha]
};

/// Which observation the filter assimilates: POD coefficients directly, or
/// both velocity components at sparse sensor points.
struct MeasurementOperator {
    enum class Kind { PodCoefficients, SparseSensors };
    Kind kind = Kind::PodCoefficients;
    SensorSet sensors;  // used for SparseSensors

    Eigen::Index obs_dim(Eigen::Index n_m) const {
        return kind == Kind::PodCoefficients ? n_m
                                             : static_cast<Eigen::Index>(2 * sensors.size());
    }
};

struct Observation {
    Eigen::VectorXd d;
    Eigen::VectorXd c_dd_diag;  // diagonal observation-error covariance, entries > 0
    Eigen::Index time_index = 0;
};

/// Slice offsets into the augmented member vector [phi; r?; alpha?; M(z)].
/// Absent slices have length 0.
struct EnsembleLayout {
    Eigen::Index phi_offset = 0, phi_len = 0;
    Eigen::Index r_offset = 0, r_len = 0;
    Eigen::Index alpha_offset = 0, alpha_len = 0;
    Eigen::Index obs_offset = 0, obs_len = 0;

    Eigen::Index total() const { return obs_offset + obs_len; }
};

struct AugmentedEnsemble {
    Scenario scenario = Scenario::TwoFold;
    EnsembleLayout layout;
    Eigen::MatrixXd members;          // [layout.total() x m]
    std::vector<std::uint8_t> diverged;  // per-member flag, sticky

    Eigen::Index size() const { return members.cols(); }

    auto phi_block() { return members.middleRows(layout.phi_offset, layout.phi_len); }
    auto phi_block() const { return members.middleRows(layout.phi_offset, layout.phi_len); }
    auto r_block() { return members.middleRows(layout.r_offset, layout.r_len); }
    auto r_block() const { return members.middleRows(layout.r_offset, layout.r_len); }
    auto alpha_block() { return members.middleRows(layout.alpha_offset, layout.alpha_len); }
    auto alpha_block() const { return members.middleRows(layout.alpha_offset, layout.alpha_len); }
    auto obs_block() { return members.middleRows(layout.obs_offset, layout.obs_len); }
    auto obs_block() const { return members.middleRows(layout.obs_offset, layout.obs_len); }
};

struct EnsembleStats {
    Eigen::VectorXd mean;
    Eigen::MatrixXd anomalies;  // A with C = A A^T, columns scaled by 1/sqrt(m-1)
    std::optional<Eigen::MatrixXd> covariance;  // formed only when dim <= 10*m
};

EnsembleStats ensemble_stats(const AugmentedEnsemble& ens);

/// Recomputes each member's observation block from its phi slice.
void refresh_observation_block(AugmentedEnsemble& ens, const PodBasis& basis,
                               const MeasurementOperator& op);

struct InitSpreads {
    double phi = 0.1;         // absolute stddev on phi members
    double alpha_rel = 0.2;   // relative stddev on alpha members (ThreeFold)
};

/// Draws phi members about phi0, spins each member's reservoir up by an
/// open-loop washout over its perturbed copy of the recent coefficient
/// history, and (ThreeFold) perturbs the trained singular values.
AugmentedEnsemble init_ensemble(Scenario scenario, const EsnModel& model,
                                const PodBasis& basis, const MeasurementOperator& op,
                                const Eigen::MatrixXd& phi_history,
                                const Eigen::VectorXd& phi0, const InitSpreads& spreads,
                                Eigen::Index m, std::uint64_t seed);

/// Advances every member n_steps in closed loop. ThreeFold members use a
/// readout recomposed from their own alpha slice; alpha stays constant.
void forecast_ensemble(AugmentedEnsemble& ens, const EsnModel& model,
                       const PodBasis& basis, const MeasurementOperator& op,
                       Eigen::Index n_steps);

/// Deterministic ensemble square-root update: Kalman update of the mean and
/// a symmetric square-root transform of the anomalies. Only the slices
/// active in the scenario (plus the observation block) change; the
/// observation block is then recomputed per member.
void analysis_update(AugmentedEnsemble& ens, const Observation& obs,
                     const PodBasis& basis, const MeasurementOperator& op);

/// Scales anomalies about the mean; the mean is unchanged.
void inflate(AugmentedEnsemble& ens, double factor);

/// Max anomaly magnitude of the phi slice; the collapse diagnostic.
double phi_spread(const AugmentedEnsemble& ens);

/// Sample stddev averaged over the alpha slice (0 when absent).
double alpha_spread(const AugmentedEnsemble& ens);

}  // namespace rcas
