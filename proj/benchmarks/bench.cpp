// Microbenchmarks for the hot paths: POD factorization, reservoir stepping,
// ensemble forecasting, and the analysis update.

#include <benchmark/benchmark.h>

#include "rcas/enkf.hpp"
#include "rcas/harness.hpp"
#include "rcas/noise.hpp"
#include "test_util.hpp"

using namespace rcas;

namespace {

SnapshotSet bench_data(std::uint32_t n_t) {
    const SnapshotSet clean = generate_synthetic_wake(rcas_test::default_wake(n_t, 1));
    return add_convolved_noise(clean, NoiseModel{0.1, 0.1, 2});
}

struct FilterFixture {
    PodBasis basis;
    EsnModel model;
    MeasurementOperator op;
    AugmentedEnsemble ens;

    explicit FilterFixture(Eigen::Index m) {
        const SnapshotSet data = bench_data(250);
        basis = compute_pod(data, 4);
        EsnConfig cfg;
        cfg.seed = 3;
        model = train(build_reservoir(cfg, 4), basis.temporal_coeffs);
        op.kind = MeasurementOperator::Kind::SparseSensors;
        op.sensors = select_sensors(basis, 4);
        const Eigen::VectorXd phi0 = basis.temporal_coeffs.row(249).transpose();
        ens = init_ensemble(Scenario::ThreeFold, model, basis, op,
                            basis.temporal_coeffs.bottomRows(102), phi0, InitSpreads{}, m, 7);
    }
};

void bm_compute_pod(benchmark::State& state) {
    const SnapshotSet data = bench_data(static_cast<std::uint32_t>(state.range(0)));
    for (auto _ : state) {
        const PodBasis basis = compute_pod(data, 4);
        benchmark::DoNotOptimize(basis.energy_fraction);
    }
}
BENCHMARK(bm_compute_pod)->Arg(100)->Arg(250);

void bm_esn_step(benchmark::State& state) {
    EsnConfig cfg;
    cfg.n_reservoir = state.range(0);
    cfg.seed = 3;
    const SnapshotSet data = bench_data(250);
    const PodBasis basis = compute_pod(data, 4);
    const EsnModel model = train(build_reservoir(cfg, 4), basis.temporal_coeffs);
    EsnState s;
    s.r = Eigen::VectorXd::Zero(cfg.n_reservoir);
    s.phi = basis.temporal_coeffs.row(0).transpose();
    for (auto _ : state) {
        s = step(model, s, s.phi);
        benchmark::DoNotOptimize(s.phi.data());
    }
}
BENCHMARK(bm_esn_step)->Arg(40)->Arg(200);

void bm_forecast_ensemble(benchmark::State& state) {
    FilterFixture f(state.range(0));
    for (auto _ : state) {
        forecast_ensemble(f.ens, f.model, f.basis, f.op, 25);
        benchmark::DoNotOptimize(f.ens.members.data());
    }
}
BENCHMARK(bm_forecast_ensemble)->Arg(10)->Arg(50);

void bm_analysis_update(benchmark::State& state) {
    FilterFixture f(state.range(0));
    Observation obs;
    obs.d = Eigen::VectorXd::Constant(f.ens.layout.obs_len, 1.0);
    obs.c_dd_diag = Eigen::VectorXd::Constant(f.ens.layout.obs_len, 0.01);
    for (auto _ : state) {
        AugmentedEnsemble ens = f.ens;
        analysis_update(ens, obs, f.basis, f.op);
        benchmark::DoNotOptimize(ens.members.data());
    }
}
BENCHMARK(bm_analysis_update)->Arg(10)->Arg(50);

}  // namespace

BENCHMARK_MAIN();
