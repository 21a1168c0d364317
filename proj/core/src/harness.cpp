#include "rcas/harness.hpp"

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>

#include "rcas/container.hpp"
#include "rcas/pod.hpp"
#include "rcas/rng.hpp"

namespace rcas {

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string stage_error(const std::string& stage, const std::exception& e) {
    return "stage '" + stage + "': " + e.what();
}

/// Diagonal C_dd for POD-coefficient observations, estimated by projecting
/// pure-noise fields through the basis.
Eigen::VectorXd estimate_pod_obs_covariance(const PodBasis& basis, const NoiseModel& noise,
                                            int n_samples, std::uint64_t seed) {
    SnapshotSet zeros;
    zeros.grid = basis.grid;
    const Eigen::Index n = basis.grid.n_points();
    zeros.ux = Eigen::MatrixXd::Zero(n_samples, n);
    zeros.uy = Eigen::MatrixXd::Zero(n_samples, n);
    zeros.times.resize(n_samples);
    for (int k = 0; k < n_samples; ++k) zeros.times[k] = k * basis.grid.dt;

    NoiseModel nm = noise;
    nm.seed = seed;
    const SnapshotSet noisy = add_convolved_noise(zeros, nm);

    Eigen::VectorXd acc = Eigen::VectorXd::Zero(basis.n_modes());
    for (int k = 0; k < n_samples; ++k) {
        // Projection of a pure noise field: Sigma^{-1} Psi^T eta.
        const Eigen::VectorXd phi = basis.singular_values.cwiseInverse().asDiagonal() *
                                    (basis.modes.transpose() * noisy.stacked(k));
        acc += phi.cwiseAbs2();
    }
    acc /= static_cast<double>(n_samples);
    // Guard against a degenerate all-zero estimate.
    const double floor_val = 1e-12 * (acc.maxCoeff() + 1e-30);
    return acc.cwiseMax(floor_val);
}

}  // namespace

void ExperimentConfig::validate() const {
    if (m < 2) throw std::invalid_argument("ExperimentConfig: m must be >= 2");
    if (delta < 1) throw std::invalid_argument("ExperimentConfig: delta must be >= 1");
    if (horizon < 1) throw std::invalid_argument("ExperimentConfig: horizon must be >= 1");
    if (!full_field && n_sensors < 1)
        throw std::invalid_argument("ExperimentConfig: n_sensors must be >= 1 when sparse");
    if (n_train < 2) throw std::invalid_argument("ExperimentConfig: n_train must be >= 2");
    if (n_modes < 1) throw std::invalid_argument("ExperimentConfig: n_modes must be >= 1");
    if (inflation < 1.0) throw std::invalid_argument("ExperimentConfig: inflation must be >= 1");
    noise.validate();
    esn.validate();
}

double mse(const Eigen::VectorXd& pred_stacked, const Eigen::VectorXd& truth_stacked) {
    if (pred_stacked.size() != truth_stacked.size())
        throw std::invalid_argument("mse: shape mismatch");
    // 1/(2 Nx Ny) * (||dux||^2 + ||duy||^2), and the stacked vector has
    // length 2 Nx Ny.
    return (pred_stacked - truth_stacked).squaredNorm() /
           static_cast<double>(pred_stacked.size());
}

RunResult run_twin_experiment(const ExperimentConfig& cfg) {
    cfg.validate();

    // Truth: generated or loaded, then held out except for error evaluation.
    SnapshotSet truth;
    try {
        if (!cfg.snapshot_path.empty()) {
            truth = read_snapshots(cfg.snapshot_path);
        } else {
            SyntheticWakeSpec spec = cfg.wake;
            if (spec.n_t == 0) spec.n_t = static_cast<std::uint32_t>(cfg.n_train + cfg.horizon);
            truth = generate_synthetic_wake(spec);
        }
    } catch (const std::exception& e) {
        throw std::runtime_error(stage_error("truth", e));
    }
    if (truth.n_t() < cfg.n_train + cfg.horizon)
        throw std::runtime_error("stage 'truth': not enough snapshots for n_train + horizon");

    SnapshotSet noisy;
    try {
        NoiseModel nm = cfg.noise;
        if (nm.seed == 0) nm.seed = substream_seed(cfg.seed, 1);
        noisy = add_convolved_noise(truth, nm);
    } catch (const std::exception& e) {
        throw std::runtime_error(stage_error("noise", e));
    }

    PodBasis basis;
    try {
        SnapshotSet training;
        training.grid = noisy.grid;
        training.ux = noisy.ux.topRows(cfg.n_train);
        training.uy = noisy.uy.topRows(cfg.n_train);
        training.times.assign(noisy.times.begin(), noisy.times.begin() + cfg.n_train);
        basis = compute_pod(training, cfg.n_modes);
    } catch (const std::exception& e) {
        throw std::runtime_error(stage_error("pod", e));
    }

    MeasurementOperator op;
    Eigen::VectorXd c_dd;
    try {
        if (cfg.full_field) {
            op.kind = MeasurementOperator::Kind::PodCoefficients;
            c_dd = estimate_pod_obs_covariance(basis, cfg.noise, 100,
                                               substream_seed(cfg.seed, 2));
        } else {
            op.kind = MeasurementOperator::Kind::SparseSensors;
            op.sensors = select_sensors(basis, cfg.n_sensors);
            c_dd = Eigen::VectorXd::Constant(2 * cfg.n_sensors,
                                             cfg.noise.eps_std * cfg.noise.eps_std);
        }
    } catch (const std::exception& e) {
        throw std::runtime_error(stage_error("sensors", e));
    }

    EsnModel model;
    try {
        EsnConfig esn_cfg = cfg.esn;
        if (esn_cfg.seed == 0) esn_cfg.seed = substream_seed(cfg.seed, 3);
        model = train(build_reservoir(esn_cfg, cfg.n_modes), basis.temporal_coeffs);
    } catch (const std::exception& e) {
        throw std::runtime_error(stage_error("esn-train", e));
    }

    AugmentedEnsemble ens;
    try {
        const Eigen::Index hist = std::min<Eigen::Index>(cfg.n_train, 2 * cfg.esn.washout + 2);
        const Eigen::MatrixXd history = cfg.phi0_scale * basis.temporal_coeffs.bottomRows(hist);
        const Eigen::VectorXd phi0 =
            cfg.phi0_scale * basis.temporal_coeffs.row(cfg.n_train - 1).transpose();
        ens = init_ensemble(cfg.scenario, model, basis, op, history, phi0, cfg.spreads, cfg.m,
                            substream_seed(cfg.seed, 4));
    } catch (const std::exception& e) {
        throw std::runtime_error(stage_error("init-ensemble", e));
    }

    RunResult result;
    const Eigen::Index h = cfg.horizon;
    result.mse_mean.assign(h + 1, 0.0);
    result.mse_min.assign(h + 1, 0.0);
    result.mse_max.assign(h + 1, 0.0);
    result.noisy_baseline_mse.assign(h + 1, 0.0);
    result.spread_phi.assign(h + 1, 0.0);
    result.spread_alpha.assign(h + 1, 0.0);
    result.mse_members.resize(h + 1, cfg.m);
    result.phi_mean_series.resize(h + 1, cfg.n_modes);
    std::vector<std::string> assim_log;

    const auto record = [&](Eigen::Index t, Eigen::Index gt) {
        double sum = 0.0, lo = 0.0, hi = 0.0;
        const Eigen::VectorXd truth_k = truth.stacked(gt);
        Eigen::VectorXd phi_mean = Eigen::VectorXd::Zero(cfg.n_modes);
        for (Eigen::Index j = 0; j < ens.size(); ++j) {
            const Eigen::VectorXd phi =
                ens.members.col(j).segment(ens.layout.phi_offset, ens.layout.phi_len);
            const double e = mse(reconstruct(basis, phi), truth_k);
            result.mse_members(t, j) = e;
            sum += e;
            if (j == 0 || e < lo) lo = e;
            if (j == 0 || e > hi) hi = e;
            phi_mean += phi;
        }
        phi_mean /= static_cast<double>(ens.size());
        (void)sum;
        // Error of the ensemble mean; mse_min/max bracket the members.
        result.mse_mean[t] = mse(reconstruct(basis, phi_mean), truth_k);
        result.mse_min[t] = lo;
        result.mse_max[t] = hi;
        result.noisy_baseline_mse[t] = mse(noisy.stacked(gt), truth_k);
        result.spread_phi[t] = phi_spread(ens);
        result.spread_alpha[t] = alpha_spread(ens);
        result.phi_mean_series.row(t) = phi_mean.transpose();
    };

    const auto log_members = [&](Eigen::Index t, const char* event) {
        if (cfg.out_dir.empty()) return;
        for (Eigen::Index j = 0; j < ens.size(); ++j) {
            const auto slice_row = [&](const char* slice, Eigen::Index off, Eigen::Index len) {
                std::string line = std::to_string(t);
                line += ',';
                line += event;
                line += ',' + std::to_string(j) + ',' + slice;
                for (Eigen::Index i = 0; i < len; ++i)
                    line += ',' + fmt(ens.members(off + i, j));
                assim_log.push_back(std::move(line));
            };
            slice_row("phi", ens.layout.phi_offset, ens.layout.phi_len);
            if (cfg.scenario == Scenario::ThreeFold)
                slice_row("alpha", ens.layout.alpha_offset, ens.layout.alpha_len);
        }
    };

    try {
        record(0, cfg.n_train - 1);
        for (Eigen::Index t = 1; t <= h; ++t) {
            const Eigen::Index gt = cfg.n_train - 1 + t;
            forecast_ensemble(ens, model, basis, op, 1);
            if (t % cfg.delta == 0) {
                if (cfg.inflation > 1.0) inflate(ens, cfg.inflation);
                Observation obs;
                obs.time_index = t;
                obs.c_dd_diag = c_dd;
                if (cfg.full_field) {
                    obs.d = project(basis, noisy.stacked(gt));
                } else {
                    const Eigen::Index nd = static_cast<Eigen::Index>(op.sensors.size());
                    obs.d.resize(2 * nd);
                    for (Eigen::Index q = 0; q < nd; ++q) {
                        obs.d(q) = noisy.ux(gt, op.sensors.indices[q]);
                        obs.d(nd + q) = noisy.uy(gt, op.sensors.indices[q]);
                    }
                }
                log_members(t, "forecast");
                analysis_update(ens, obs, basis, op);
                log_members(t, "analysis");
                result.analysis_times.push_back(t);
            }
            record(t, gt);
            if (!result.collapsed && t < h / 2 && result.spread_phi[t] < 1e-8)
                result.collapsed = true;
            if (result.time_to_cross_baseline < 0 &&
                result.mse_mean[t] <= result.noisy_baseline_mse[t])
                result.time_to_cross_baseline = t;
        }
    } catch (const std::exception& e) {
        throw std::runtime_error(stage_error("assimilation", e));
    }

    result.final_mse = result.mse_mean[h];
    result.final_spread_phi = result.spread_phi[h];

    if (!cfg.out_dir.empty()) {
        try {
            namespace fs = std::filesystem;
            fs::create_directories(cfg.out_dir);
            const std::string root = cfg.out_dir + "/";
            write_summary_csv(root + "summary.csv", result);
            {
                std::ofstream os(root + "assim_log.csv");
                os << "time_index,event,member,slice,values\n";
                for (const auto& line : assim_log) os << line << "\n";
            }
            export_coeffs_csv(result.phi_mean_series, (cfg.n_train - 1) * truth.grid.dt,
                              truth.grid.dt, root + "phi_mean.csv");
            {
                std::ofstream os(root + "config.txt");
                os << "scenario="
                   << (cfg.scenario == Scenario::PhysicalOnly
                           ? "physical"
                           : cfg.scenario == Scenario::TwoFold ? "twofold" : "threefold")
                   << "\nm=" << cfg.m << "\ndelta=" << cfg.delta
                   << "\nfull_field=" << (cfg.full_field ? 1 : 0)
                   << "\nn_sensors=" << cfg.n_sensors << "\nn_train=" << cfg.n_train
                   << "\nn_modes=" << cfg.n_modes << "\nhorizon=" << cfg.horizon
                   << "\ninflation=" << fmt(cfg.inflation)
                   << "\nnoise_eps=" << fmt(cfg.noise.eps_std)
                   << "\nnoise_kernel=" << fmt(cfg.noise.kernel_std) << "\nseed=" << cfg.seed
                   << "\n";
            }
            // Final reconstructed field from the ensemble-mean coefficients.
            SnapshotSet final_field;
            final_field.grid = truth.grid;
            const Eigen::VectorXd u =
                reconstruct(basis, result.phi_mean_series.row(h).transpose());
            const Eigen::Index n = truth.grid.n_points();
            final_field.ux = u.head(n).transpose();
            final_field.uy = u.tail(n).transpose();
            final_field.times = {0.0};
            write_snapshots(final_field, root + "final_field.rcas");
        } catch (const std::exception& e) {
            throw std::runtime_error(stage_error("output", e));
        }
    }
    return result;
}

std::vector<SweepRow> sweep(const std::vector<ExperimentConfig>& cfgs,
                            const std::vector<std::string>& labels, int threads) {
    if (cfgs.empty()) throw std::invalid_argument("sweep: empty config list");
    std::vector<SweepRow> rows(cfgs.size());
    for (std::size_t i = 0; i < cfgs.size(); ++i)
        rows[i].label = i < labels.size() ? labels[i] : "run" + std::to_string(i);

    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        for (std::size_t i = next.fetch_add(1); i < cfgs.size(); i = next.fetch_add(1)) {
            try {
                rows[i].result = run_twin_experiment(cfgs[i]);
            } catch (const std::exception& e) {
                rows[i].failed = true;
                rows[i].error = e.what();
            }
        }
    };
    const int n_workers = std::min<int>(std::max(threads, 1), static_cast<int>(cfgs.size()));
    if (n_workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n_workers);
        for (int i = 0; i < n_workers; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    return rows;
}

void write_summary_csv(const std::string& path, const RunResult& r) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << "time_index,mse_mean,mse_min,mse_max,spread_phi,spread_alpha\n";
    for (std::size_t t = 0; t < r.mse_mean.size(); ++t) {
        os << t << ',' << fmt(r.mse_mean[t]) << ',' << fmt(r.mse_min[t]) << ','
           << fmt(r.mse_max[t]) << ',' << fmt(r.spread_phi[t]) << ','
           << fmt(r.spread_alpha[t]) << "\n";
    }
}

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << "label,failed,final_mse,final_baseline_mse,time_to_cross_baseline,collapsed,"
          "final_spread_phi,error\n";
    for (const auto& row : rows) {
        if (row.failed) {
            os << row.label << ",1,,,,,," << '"' << row.error << '"' << "\n";
            continue;
        }
        const auto& r = row.result;
        os << row.label << ",0," << fmt(r.final_mse) << ','
           << fmt(r.noisy_baseline_mse.back()) << ',' << r.time_to_cross_baseline << ','
           << (r.collapsed ? 1 : 0) << ',' << fmt(r.final_spread_phi) << ",\n";
    }
}

}  // namespace rcas
