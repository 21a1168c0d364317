// Command-line front end: data generation, POD, ESN training, twin-experiment
// assimilation runs, sweeps, and container inspection.

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "rcas/container.hpp"
#include "rcas/harness.hpp"

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

rcas::Scenario parse_scenario(const std::string& s) {
    if (s == "physical") return rcas::Scenario::PhysicalOnly;
    if (s == "twofold") return rcas::Scenario::TwoFold;
    if (s == "threefold") return rcas::Scenario::ThreeFold;
    throw CLI::ValidationError("--scenario", "must be physical, twofold, or threefold");
}

std::uint64_t env_seed_default() {
    if (const char* env = std::getenv("RCAS_SEED")) return std::strtoull(env, nullptr, 10);
    return 0;
}

struct WakeFlags {
    std::uint32_t nx = 32, ny = 16;
    double dx = 0.1, dy = 0.1, dt = 0.1;
    std::uint32_t n_pairs = 2;
    double base_period = 250.0 / 6.0;
    std::vector<double> amplitudes;
    double mean_ux = 1.0, mean_uy = 0.0;

    rcas::SyntheticWakeSpec to_spec(std::uint32_t n_t, std::uint64_t seed) const {
        rcas::SyntheticWakeSpec spec;
        spec.grid = {nx, ny, dx, dy, dt};
        spec.n_pairs = n_pairs;
        spec.base_period = base_period;
        spec.amplitudes = amplitudes;
        if (spec.amplitudes.empty()) {
            // Defaults sized so per-point signal amplitude is O(1), like the
            // mean flow, against which noise std 0.1 is small but visible.
            double a = 0.7 * std::sqrt(static_cast<double>(nx) * ny);
            for (std::uint32_t p = 0; p < n_pairs; ++p, a *= 0.4) spec.amplitudes.push_back(a);
        }
        spec.mean_ux = mean_ux;
        spec.mean_uy = mean_uy;
        spec.n_t = n_t;
        spec.seed = seed;
        return spec;
    }
};

void add_wake_flags(CLI::App* cmd, WakeFlags& w) {
    cmd->add_option("--nx", w.nx, "grid points in x");
    cmd->add_option("--ny", w.ny, "grid points in y");
    cmd->add_option("--dx", w.dx, "grid spacing in x");
    cmd->add_option("--dy", w.dy, "grid spacing in y");
    cmd->add_option("--dt", w.dt, "time step");
    cmd->add_option("--n-pairs", w.n_pairs, "harmonic mode pairs");
    cmd->add_option("--base-period", w.base_period, "steps per period of the first pair");
    cmd->add_option("--amplitudes", w.amplitudes, "per-pair amplitudes (strictly decreasing)");
    cmd->add_option("--mean-ux", w.mean_ux, "mean streamwise velocity");
    cmd->add_option("--mean-uy", w.mean_uy, "mean transverse velocity");
}

void add_esn_flags(CLI::App* cmd, rcas::EsnConfig& esn) {
    cmd->add_option("--n-reservoir", esn.n_reservoir, "reservoir size");
    cmd->add_option("--rho", esn.spectral_radius, "spectral radius");
    cmd->add_option("--sigma-in", esn.input_scaling, "input scaling");
    cmd->add_option("--connectivity", esn.connectivity, "avg nonzeros per reservoir row");
    cmd->add_option("--tikhonov", esn.tikhonov, "ridge regularization factor");
    cmd->add_option("--input-bias", esn.input_bias, "symmetry-breaking input constant");
    cmd->add_option("--washout", esn.washout, "washout steps");
}

template <typename T>
std::vector<T> parse_list(const std::string& csv, const char* flag) {
    std::vector<T> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            if constexpr (std::is_integral_v<T>)
                out.push_back(static_cast<T>(std::stoll(item)));
            else
                out.push_back(std::stod(item));
        } catch (...) {
            throw CLI::ValidationError(flag, "bad list entry: " + item);
        }
    }
    if (out.empty()) throw CLI::ValidationError(flag, "empty list");
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"POD-ESN online learning with ensemble square-root assimilation"};
    app.require_subcommand(1);
    // Let global flags (--seed, --out-dir, --threads, --config) appear after
    // the subcommand as well.
    app.fallthrough();
    app.set_config("--config", "", "key=value config file (flags override file values)");

    std::uint64_t seed = env_seed_default();
    app.add_option("--seed", seed, "global seed")->envname("RCAS_SEED");
    std::string out_dir = ".";
    app.add_option("--out-dir", out_dir, "root directory for outputs");
    int threads = 1;
    app.add_option("--threads", threads, "worker thread cap for sweeps");

    // generate
    auto* gen = app.add_subcommand("generate", "generate a synthetic wake snapshot file");
    WakeFlags gen_wake;
    std::uint32_t gen_nt = 250;
    std::string gen_out;
    double gen_noise_eps = 0.0, gen_noise_kernel = 0.1;
    add_wake_flags(gen, gen_wake);
    gen->add_option("--nt", gen_nt, "number of snapshots");
    gen->add_option("--out", gen_out, "output snapshot file")->required();
    gen->add_option("--noise-eps", gen_noise_eps, "add convolved noise with this std");
    gen->add_option("--noise-kernel", gen_noise_kernel, "noise kernel std (grid units)");

    // pod
    auto* pod = app.add_subcommand("pod", "compute a truncated POD basis");
    std::string pod_in, pod_out, pod_coeffs_csv;
    Eigen::Index pod_modes = 4;
    pod->add_option("--in", pod_in, "input snapshot file")->required();
    pod->add_option("--out", pod_out, "output basis file")->required();
    pod->add_option("--n-modes", pod_modes, "retained modes");
    pod->add_option("--coeffs-csv", pod_coeffs_csv, "also export temporal coefficients");

    // train
    auto* train_cmd = app.add_subcommand("train", "train an ESN on POD coefficients");
    std::string train_basis, train_out, train_forecast_csv;
    rcas::EsnConfig train_esn;
    bool train_grid_search = false;
    Eigen::Index train_forecast_steps = 0;
    train_cmd->add_option("--basis", train_basis, "input basis file")->required();
    train_cmd->add_option("--out", train_out, "output model file")->required();
    add_esn_flags(train_cmd, train_esn);
    train_cmd->add_flag("--grid-search", train_grid_search,
                        "grid-search sigma_in and rho before training");
    train_cmd->add_option("--forecast-steps", train_forecast_steps,
                          "export a closed-loop forecast of this length");
    train_cmd->add_option("--forecast-csv", train_forecast_csv, "forecast CSV path");

    // assimilate
    auto* assim = app.add_subcommand("assimilate", "run a twin experiment");
    WakeFlags assim_wake;
    rcas::ExperimentConfig cfg;
    std::string scenario_name = "twofold";
    add_wake_flags(assim, assim_wake);
    add_esn_flags(assim, cfg.esn);
    assim->add_option("--scenario", scenario_name, "physical | twofold | threefold");
    assim->add_option("--m", cfg.m, "ensemble size");
    assim->add_option("--delta", cfg.delta, "steps between observations");
    auto* opt_sensors = assim->add_option("--n-sensors", cfg.n_sensors, "sparse sensor count");
    auto* opt_full = assim->add_flag("--full-field", cfg.full_field,
                                     "assimilate full fields projected on POD modes");
    opt_full->excludes(opt_sensors);
    assim->add_option("--n-train", cfg.n_train, "training snapshots");
    assim->add_option("--n-modes", cfg.n_modes, "retained POD modes");
    assim->add_option("--horizon", cfg.horizon, "assimilation window length");
    assim->add_option("--inflation", cfg.inflation, "multiplicative inflation (1 = off)");
    assim->add_option("--noise-eps", cfg.noise.eps_std, "measurement noise std");
    assim->add_option("--noise-kernel", cfg.noise.kernel_std, "noise kernel std");
    assim->add_option("--phi0-scale", cfg.phi0_scale,
                      "scale on the initial coefficient estimate (0 = uninformed)");
    assim->add_option("--spread-phi", cfg.spreads.phi, "initial phi ensemble spread");
    assim->add_option("--spread-alpha", cfg.spreads.alpha_rel,
                      "initial relative alpha spread (threefold)");
    assim->add_option("--snapshots", cfg.snapshot_path, "load truth from file instead");

    // sweep
    auto* sw = app.add_subcommand("sweep", "run a grid of twin experiments");
    WakeFlags sweep_wake;
    rcas::ExperimentConfig sweep_base;
    std::string sweep_scenarios = "twofold", sweep_deltas, sweep_sensors, sweep_ms;
    add_wake_flags(sw, sweep_wake);
    add_esn_flags(sw, sweep_base.esn);
    sw->add_option("--scenario-list", sweep_scenarios, "comma list of scenarios");
    sw->add_option("--delta-list", sweep_deltas, "comma list of delta values");
    sw->add_option("--n-sensors-list", sweep_sensors, "comma list of sensor counts (0 = full field)");
    sw->add_option("--m-list", sweep_ms, "comma list of ensemble sizes");
    sw->add_option("--m", sweep_base.m, "ensemble size");
    sw->add_option("--delta", sweep_base.delta, "steps between observations");
    sw->add_option("--n-train", sweep_base.n_train, "training snapshots");
    sw->add_option("--n-modes", sweep_base.n_modes, "retained POD modes");
    sw->add_option("--horizon", sweep_base.horizon, "assimilation window length");
    sw->add_option("--inflation", sweep_base.inflation, "multiplicative inflation");
    sw->add_option("--noise-eps", sweep_base.noise.eps_std, "measurement noise std");
    sw->add_option("--noise-kernel", sweep_base.noise.kernel_std, "noise kernel std");
    sw->add_option("--phi0-scale", sweep_base.phi0_scale,
                   "scale on the initial coefficient estimate (0 = uninformed)");
    sw->add_option("--spread-phi", sweep_base.spreads.phi, "initial phi ensemble spread");
    sw->add_option("--spread-alpha", sweep_base.spreads.alpha_rel, "initial relative alpha spread");

    // inspect
    auto* insp = app.add_subcommand("inspect", "summarize a container file");
    std::string insp_path;
    insp->add_option("path", insp_path, "container file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitValidation;
    }

    try {
        if (*gen) {
            rcas::SyntheticWakeSpec spec = gen_wake.to_spec(gen_nt, seed);
            rcas::SnapshotSet data = rcas::generate_synthetic_wake(spec);
            if (gen_noise_eps > 0.0) {
                rcas::NoiseModel nm{gen_noise_eps, gen_noise_kernel, seed + 1};
                data = rcas::add_convolved_noise(data, nm);
            }
            rcas::write_snapshots(data, gen_out);
            std::cout << "wrote " << gen_out << " (" << data.n_t() << " snapshots)\n";
        } else if (*pod) {
            const rcas::SnapshotSet data = rcas::read_snapshots(pod_in);
            const rcas::PodBasis basis = rcas::compute_pod(data, pod_modes);
            rcas::write_basis(basis, pod_out);
            if (!pod_coeffs_csv.empty())
                rcas::export_coeffs_csv(basis.temporal_coeffs, 0.0, basis.grid.dt,
                                        pod_coeffs_csv);
            std::cout << "modes: " << basis.n_modes()
                      << ", energy fraction: " << basis.energy_fraction << "\n";
        } else if (*train_cmd) {
            const rcas::PodBasis basis = rcas::read_basis(train_basis);
            rcas::EsnConfig esn = train_esn;
            if (esn.seed == 0) esn.seed = seed != 0 ? seed : 1;
            if (train_grid_search) {
                const auto [sigma, rho] = rcas::grid_search_hyperparams(
                    esn, basis.temporal_coeffs, rcas::default_hyperparam_grid());
                esn.input_scaling = sigma;
                esn.spectral_radius = rho;
                std::cout << "grid search: sigma_in=" << sigma << ", rho=" << rho << "\n";
            }
            const rcas::EsnModel model =
                rcas::train(rcas::build_reservoir(esn, basis.n_modes()), basis.temporal_coeffs);
            rcas::write_model(model, train_out);
            std::cout << "wrote " << train_out << "\n";
            if (train_forecast_steps > 0 && !train_forecast_csv.empty()) {
                rcas::EsnState state;
                state.r = Eigen::VectorXd::Zero(esn.n_reservoir);
                for (Eigen::Index k = 0; k < basis.temporal_coeffs.rows(); ++k)
                    state = rcas::step(model, state, basis.temporal_coeffs.row(k).transpose());
                const auto run = rcas::closed_loop(model, state, train_forecast_steps);
                rcas::export_coeffs_csv(run.trajectory,
                                        basis.temporal_coeffs.rows() * basis.grid.dt,
                                        basis.grid.dt, train_forecast_csv);
            }
        } else if (*assim) {
            cfg.scenario = parse_scenario(scenario_name);
            cfg.seed = seed != 0 ? seed : 1;
            cfg.wake = assim_wake.to_spec(0, cfg.seed);
            cfg.out_dir = out_dir;
            const rcas::RunResult result = rcas::run_twin_experiment(cfg);
            std::cout << "final mse: " << result.final_mse
                      << " (noisy baseline: " << result.noisy_baseline_mse.back() << ")\n"
                      << "analysis steps: " << result.analysis_times.size()
                      << ", collapsed: " << (result.collapsed ? "yes" : "no") << "\n"
                      << "outputs in " << out_dir << "\n";
        } else if (*sw) {
            sweep_base.seed = seed != 0 ? seed : 1;
            sweep_base.wake = sweep_wake.to_spec(0, sweep_base.seed);
            std::vector<std::string> scenarios;
            {
                std::stringstream ss(sweep_scenarios);
                std::string item;
                while (std::getline(ss, item, ',')) scenarios.push_back(item);
            }
            const auto deltas = sweep_deltas.empty()
                                    ? std::vector<Eigen::Index>{sweep_base.delta}
                                    : parse_list<Eigen::Index>(sweep_deltas, "--delta-list");
            const auto sensor_counts =
                sweep_sensors.empty() ? std::vector<Eigen::Index>{sweep_base.n_sensors}
                                      : parse_list<Eigen::Index>(sweep_sensors, "--n-sensors-list");
            const auto ms = sweep_ms.empty() ? std::vector<Eigen::Index>{sweep_base.m}
                                             : parse_list<Eigen::Index>(sweep_ms, "--m-list");

            std::vector<rcas::ExperimentConfig> cfgs;
            std::vector<std::string> labels;
            for (const auto& sc : scenarios)
                for (auto d : deltas)
                    for (auto nd : sensor_counts)
                        for (auto m : ms) {
                            rcas::ExperimentConfig c = sweep_base;
                            c.scenario = parse_scenario(sc);
                            c.delta = d;
                            c.m = m;
                            c.full_field = nd == 0;
                            c.n_sensors = nd == 0 ? 1 : nd;
                            std::string label = sc + "_d" + std::to_string(d) + "_nd" +
                                                std::to_string(nd) + "_m" + std::to_string(m);
                            c.out_dir = out_dir + "/" + label;
                            cfgs.push_back(std::move(c));
                            labels.push_back(std::move(label));
                        }
            const auto rows = rcas::sweep(cfgs, labels, threads);
            std::filesystem::create_directories(out_dir);
            rcas::write_sweep_csv(out_dir + "/sweep.csv", rows);
            for (const auto& row : rows) {
                if (row.failed)
                    std::cout << row.label << ": FAILED (" << row.error << ")\n";
                else
                    std::cout << row.label << ": final mse " << row.result.final_mse << "\n";
            }
        } else if (*insp) {
            std::cout << rcas::inspect_container(insp_path);
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return 0;
}
