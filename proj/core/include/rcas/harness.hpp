#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rcas/enkf.hpp"
#include "rcas/noise.hpp"
#include "rcas/synthetic.hpp"

namespace rcas {

/// Twin-experiment configuration. The truth is generated (or loaded),
/// noised, and then used only for error evaluation; the pipeline itself
/// sees noisy data exclusively.
struct ExperimentConfig {
    Scenario scenario = Scenario::TwoFold;
    Eigen::Index m = 10;                 // ensemble size
    Eigen::Index delta = 25;             // steps between observations
    Eigen::Index n_sensors = 1;          // ignored when full_field
    bool full_field = false;
    Eigen::Index n_train = 250;
    Eigen::Index n_modes = 4;
    Eigen::Index horizon = 250;          // assimilation window length, in steps
    double inflation = 1.0;              // 1 = off
    NoiseModel noise;
    EsnConfig esn;
    SyntheticWakeSpec wake;              // truth generator (n_t derived if 0)
    std::string snapshot_path;           // when nonempty, load truth instead
    InitSpreads spreads;
    double phi0_scale = 1.0;             // 0 = uninformed start (mean flow only)
    std::uint64_t seed = 0;
    std::string out_dir;                 // when nonempty, write run artifacts

    void validate() const;
};

struct RunResult {
    // All series are indexed 0..horizon over the assimilation window.
    std::vector<double> mse_mean;
    std::vector<double> mse_min;
    std::vector<double> mse_max;
    std::vector<double> noisy_baseline_mse;
    std::vector<double> spread_phi;
    std::vector<double> spread_alpha;
    std::vector<Eigen::Index> analysis_times;
    Eigen::MatrixXd mse_members;         // [(horizon+1) x m], per-member series
    Eigen::MatrixXd phi_mean_series;     // [(horizon+1) x n_m]
    bool collapsed = false;              // spread_phi < 1e-8 before horizon/2
    Eigen::Index time_to_cross_baseline = -1;  // first t with mse_mean <= baseline
    double final_mse = 0.0;
    double final_spread_phi = 0.0;
};

/// 1/(2 Nx Ny) (||ux* - ux_truth||^2 + ||uy* - uy_truth||^2), L2 over the grid.
double mse(const Eigen::VectorXd& pred_stacked, const Eigen::VectorXd& truth_stacked);

RunResult run_twin_experiment(const ExperimentConfig& cfg);

struct SweepRow {
    std::string label;
    bool failed = false;
    std::string error;
    RunResult result;
};

/// Runs each config, tolerating individual failures. `threads` caps worker
/// count (<= 1 means serial); results are in input order regardless.
std::vector<SweepRow> sweep(const std::vector<ExperimentConfig>& cfgs,
                            const std::vector<std::string>& labels,
                            int threads = 1);

void write_summary_csv(const std::string& path, const RunResult& r);
void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows);

}  // namespace rcas
