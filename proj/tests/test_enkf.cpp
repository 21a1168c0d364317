#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/QR>
#include <cmath>

#include "rcas/enkf.hpp"
#include "rcas/noise.hpp"
#include "rcas/rng.hpp"
#include "test_util.hpp"

using namespace rcas;

namespace {

/// Ensemble over a bare n-dimensional state observed directly: layout is
/// [phi; M(z)] with the reservoir and alpha slices empty.
AugmentedEnsemble direct_ensemble(const Eigen::MatrixXd& phi_members) {
    const Eigen::Index n = phi_members.rows();
    AugmentedEnsemble ens;
    ens.scenario = Scenario::PhysicalOnly;
    ens.layout.phi_offset = 0;
    ens.layout.phi_len = n;
    ens.layout.r_offset = n;
    ens.layout.r_len = 0;
    ens.layout.alpha_offset = n;
    ens.layout.alpha_len = 0;
    ens.layout.obs_offset = n;
    ens.layout.obs_len = n;
    ens.members.resize(2 * n, phi_members.cols());
    ens.members.topRows(n) = phi_members;
    ens.members.bottomRows(n) = phi_members;
    ens.diverged.assign(static_cast<std::size_t>(phi_members.cols()), 0);
    return ens;
}

Eigen::MatrixXd random_members(Eigen::Index n, Eigen::Index m, Rng& rng, double scale = 1.0) {
    Eigen::MatrixXd x(n, m);
    for (Eigen::Index j = 0; j < m; ++j)
        for (Eigen::Index i = 0; i < n; ++i) x(i, j) = scale * rng.normal01();
    return x;
}

/// Explicit Kalman oracle on the augmented ensemble: prior statistics taken
/// from the ensemble itself, M the selection of the observation block.
struct KalmanOracle {
    Eigen::VectorXd mean_a;
    Eigen::MatrixXd cov_a;
};

KalmanOracle kalman_oracle(const AugmentedEnsemble& ens, const Observation& obs) {
    const EnsembleStats stats = ensemble_stats(ens);
    const Eigen::Index total = ens.layout.total();
    const Eigen::Index n_d = ens.layout.obs_len;
    Eigen::MatrixXd sel = Eigen::MatrixXd::Zero(n_d, total);
    sel.rightCols(n_d).setIdentity();
    const Eigen::MatrixXd c = stats.anomalies * stats.anomalies.transpose();
    const Eigen::MatrixXd s =
        Eigen::MatrixXd(obs.c_dd_diag.asDiagonal()) + sel * c * sel.transpose();
    const Eigen::MatrixXd k = c * sel.transpose() * s.inverse();
    KalmanOracle oracle;
    oracle.mean_a = stats.mean + k * (obs.d - sel * stats.mean);
    oracle.cov_a = (Eigen::MatrixXd::Identity(total, total) - k * sel) * c;
    return oracle;
}

/// A full twin-experiment-shaped setup (basis, model, operator, ensemble)
/// on the small wake, for the scenario-containment and consistency tests.
struct Setup {
    PodBasis basis;
    EsnModel model;
    MeasurementOperator op;
    AugmentedEnsemble ens;
};

Setup make_setup(Scenario scenario, Eigen::Index m, bool sensors, std::uint64_t seed,
                 double spread_phi = 0.1, double spread_alpha = 0.2) {
    const SnapshotSet clean = generate_synthetic_wake(rcas_test::small_wake(2, 40.0, 120, seed));
    const SnapshotSet noisy = add_convolved_noise(clean, NoiseModel{0.1, 0.1, seed + 1});
    Setup s;
    s.basis = compute_pod(noisy, 4);
    EsnConfig cfg;
    cfg.n_reservoir = 30;
    cfg.washout = 20;
    cfg.seed = seed + 2;
    s.model = train(build_reservoir(cfg, 4), s.basis.temporal_coeffs);
    if (sensors) {
        s.op.kind = MeasurementOperator::Kind::SparseSensors;
        s.op.sensors = select_sensors(s.basis, 2);
    }
    InitSpreads spreads;
    spreads.phi = spread_phi;
    spreads.alpha_rel = spread_alpha;
    const Eigen::VectorXd phi0 = s.basis.temporal_coeffs.row(119).transpose();
    s.ens = init_ensemble(scenario, s.model, s.basis, s.op,
                          s.basis.temporal_coeffs.bottomRows(42), phi0, spreads, m, seed + 3);
    return s;
}

}  // namespace

TEST_CASE("ensemble_stats: identical members have zero anomalies") {
    Eigen::MatrixXd members(3, 5);
    members.colwise() = Eigen::Vector3d(1.0, -2.0, 0.5);
    const EnsembleStats stats = ensemble_stats(direct_ensemble(members));
    CHECK(stats.anomalies.cwiseAbs().maxCoeff() == 0.0);
    CHECK(stats.mean.head(3) == Eigen::Vector3d(1.0, -2.0, 0.5));
}

TEST_CASE("ensemble_stats: two symmetric members give the rank-one covariance") {
    Eigen::Vector2d center(1.0, 2.0), a(0.3, -0.7);
    Eigen::MatrixXd members(2, 2);
    members.col(0) = center + a;
    members.col(1) = center - a;
    const EnsembleStats stats = ensemble_stats(direct_ensemble(members));
    REQUIRE(stats.covariance.has_value());
    // Sample covariance with the 1/(m-1) convention: sum of squared
    // deviations a a^T + a a^T over m - 1 = 1.
    const Eigen::MatrixXd expected = 2.0 * a * a.transpose();
    CHECK((stats.covariance->topLeftCorner(2, 2) - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("ensemble_stats: covariance trace equals the sum of sample variances") {
    Rng rng(21);
    const Eigen::MatrixXd members = random_members(4, 12, rng);
    const EnsembleStats stats = ensemble_stats(direct_ensemble(members));
    REQUIRE(stats.covariance.has_value());
    double var_sum = 0.0;
    for (Eigen::Index i = 0; i < 8; ++i) {
        const auto row = i < 4 ? members.row(i) : members.row(i - 4);
        var_sum += (row.array() - row.mean()).square().sum() / 11.0;
    }
    CHECK(stats.covariance->trace() == doctest::Approx(var_sum).epsilon(1e-10));
}

TEST_CASE("ensemble_stats: covariance is factored, not formed, for wide states") {
    Rng rng(22);
    AugmentedEnsemble ens = direct_ensemble(random_members(20, 3, rng));  // 40 rows > 30
    CHECK_FALSE(ensemble_stats(ens).covariance.has_value());
    AugmentedEnsemble small = direct_ensemble(random_members(4, 3, rng));
    CHECK(ensemble_stats(small).covariance.has_value());
}

TEST_CASE("ensemble_stats: fewer than two members is an error") {
    Eigen::MatrixXd one(2, 1);
    one << 1.0, 2.0;
    CHECK_THROWS_AS(ensemble_stats(direct_ensemble(one)), std::invalid_argument);
}

TEST_CASE("analysis_update: huge observation noise leaves the forecast unchanged") {
    Rng rng(31);
    AugmentedEnsemble ens = direct_ensemble(random_members(3, 8, rng));
    const Eigen::MatrixXd before = ens.members;
    Observation obs;
    obs.d = Eigen::Vector3d(10.0, -10.0, 5.0);
    obs.c_dd_diag = Eigen::VectorXd::Constant(3, 1e12);
    analysis_update(ens, obs, PodBasis{}, MeasurementOperator{});
    const double rel = ((ens.members - before).cwiseAbs().maxCoeff()) /
                       before.cwiseAbs().maxCoeff();
    CHECK(rel < 1e-6);
}

TEST_CASE("analysis_update: scalar case matches the closed-form Kalman update") {
    Rng rng(32);
    const Eigen::Index m = 100;
    Eigen::MatrixXd members(1, m);
    for (Eigen::Index j = 0; j < m; ++j) members(0, j) = 2.0 + 0.5 * rng.normal01();
    AugmentedEnsemble ens = direct_ensemble(members);

    const double prior_mean = members.row(0).mean();
    const double prior_var =
        (members.row(0).array() - prior_mean).square().sum() / (m - 1.0);
    const double r = 0.3 * 0.3, d = 3.1;
    const double gain = prior_var / (prior_var + r);
    const double post_mean = prior_mean + gain * (d - prior_mean);
    const double post_var = (1.0 - gain) * prior_var;

    Observation obs;
    obs.d = Eigen::VectorXd::Constant(1, d);
    obs.c_dd_diag = Eigen::VectorXd::Constant(1, r);
    analysis_update(ens, obs, PodBasis{}, MeasurementOperator{});

    const double mean_a = ens.members.row(0).mean();
    const double var_a = (ens.members.row(0).array() - mean_a).square().sum() / (m - 1.0);
    CHECK(mean_a == doctest::Approx(post_mean).epsilon(0.02));
    CHECK(var_a == doctest::Approx(post_var).epsilon(0.02));
}

TEST_CASE("analysis_update: near-perfect observations pin the mean to the data") {
    Rng rng(33);
    AugmentedEnsemble ens = direct_ensemble(random_members(5, 64, rng));
    Observation obs;
    obs.d = Eigen::VectorXd::LinSpaced(5, -1.0, 1.0);
    obs.c_dd_diag = Eigen::VectorXd::Constant(5, 1e-12);
    analysis_update(ens, obs, PodBasis{}, MeasurementOperator{});
    const Eigen::VectorXd mean = ens.members.topRows(5).rowwise().mean();
    CHECK((mean - obs.d).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("analysis_update: matches the explicit Kalman formulas exactly") {
    // 6-dimensional state observed through 3 of its coordinates... realized
    // here as a direct ensemble whose observation block is the full state;
    // the sparse-sensor variant is covered below.
    Rng rng(34);
    AugmentedEnsemble ens = direct_ensemble(random_members(6, 16, rng));
    Observation obs;
    obs.d = Eigen::VectorXd::LinSpaced(6, -0.5, 1.5);
    obs.c_dd_diag = Eigen::VectorXd::LinSpaced(6, 0.1, 0.4);
    const KalmanOracle oracle = kalman_oracle(ens, obs);

    analysis_update(ens, obs, PodBasis{}, MeasurementOperator{});
    const EnsembleStats after = ensemble_stats(ens);
    CHECK((after.mean - oracle.mean_a).cwiseAbs().maxCoeff() < 1e-8);
    const Eigen::MatrixXd cov_a = after.anomalies * after.anomalies.transpose();
    CHECK((cov_a - oracle.cov_a).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("analysis_update: square-root identity holds with sparse sensors") {
    Setup s = make_setup(Scenario::TwoFold, 12, /*sensors=*/true, 40);
    Observation obs;
    obs.d = Eigen::VectorXd::Constant(4, 1.0);
    obs.c_dd_diag = Eigen::VectorXd::Constant(4, 0.01);

    // Oracle over the active rows plus the observation block. The inactive
    // alpha slice is excluded: it stays frozen by scenario containment.
    const EnsembleStats before = ensemble_stats(s.ens);
    const Eigen::Index n_act = s.ens.layout.phi_len + s.ens.layout.r_len;
    const Eigen::Index n_d = s.ens.layout.obs_len;
    Eigen::MatrixXd a(n_act + n_d, s.ens.size());
    a.topRows(n_act) = before.anomalies.topRows(n_act);
    a.bottomRows(n_d) = before.anomalies.bottomRows(n_d);
    const Eigen::MatrixXd c = a * a.transpose();
    Eigen::MatrixXd sel = Eigen::MatrixXd::Zero(n_d, n_act + n_d);
    sel.rightCols(n_d).setIdentity();
    const Eigen::MatrixXd sm =
        Eigen::MatrixXd(obs.c_dd_diag.asDiagonal()) + sel * c * sel.transpose();
    const Eigen::MatrixXd k = c * sel.transpose() * sm.inverse();
    const Eigen::MatrixXd cov_oracle =
        (Eigen::MatrixXd::Identity(n_act + n_d, n_act + n_d) - k * sel) * c;

    analysis_update(s.ens, obs, s.basis, s.op);
    const EnsembleStats after = ensemble_stats(s.ens);
    Eigen::MatrixXd aa(n_act + n_d, s.ens.size());
    aa.topRows(n_act) = after.anomalies.topRows(n_act);
    aa.bottomRows(n_d) = after.anomalies.bottomRows(n_d);
    const Eigen::MatrixXd cov_after = aa * aa.transpose();
    const double scale = cov_oracle.cwiseAbs().maxCoeff();
    CHECK((cov_after - cov_oracle).cwiseAbs().maxCoeff() < 1e-8 * std::max(1.0, scale));
}

TEST_CASE("analysis_update: degenerate innovation covariance reports singularity") {
    // Perfectly correlated observation anomalies plus vanishing noise make
    // the innovation covariance numerically rank deficient.
    Eigen::MatrixXd members(2, 4);
    members.row(0) << 1.0, 2.0, -0.5, 0.25;
    members.row(1) = 2.0 * members.row(0);
    AugmentedEnsemble ens = direct_ensemble(members);
    Observation obs;
    obs.d = Eigen::Vector2d(0.0, 0.0);
    obs.c_dd_diag = Eigen::VectorXd::Constant(2, 1e-320);
    CHECK_THROWS_WITH_AS(analysis_update(ens, obs, PodBasis{}, MeasurementOperator{}),
                         doctest::Contains("inflation"), std::runtime_error);
}

TEST_CASE("analysis_update: dimension and covariance validation") {
    Rng rng(35);
    AugmentedEnsemble ens = direct_ensemble(random_members(3, 6, rng));
    Observation obs;
    obs.d = Eigen::Vector2d(0.0, 0.0);  // wrong size
    obs.c_dd_diag = Eigen::VectorXd::Constant(2, 0.1);
    CHECK_THROWS_AS(analysis_update(ens, obs, PodBasis{}, MeasurementOperator{}),
                    std::invalid_argument);
    obs.d = Eigen::Vector3d::Zero();
    obs.c_dd_diag = Eigen::Vector3d(0.1, 0.0, 0.1);  // nonpositive entry
    CHECK_THROWS_AS(analysis_update(ens, obs, PodBasis{}, MeasurementOperator{}),
                    std::invalid_argument);
}

TEST_CASE("inflate: factor one is the identity; spread scales; mean is kept") {
    Rng rng(36);
    AugmentedEnsemble ens = direct_ensemble(random_members(3, 10, rng));
    const Eigen::MatrixXd before = ens.members;
    inflate(ens, 1.0);
    CHECK(ens.members == before);

    const EnsembleStats s0 = ensemble_stats(ens);
    inflate(ens, 2.0);
    const EnsembleStats s1 = ensemble_stats(ens);
    CHECK((s1.mean - s0.mean).cwiseAbs().maxCoeff() < 1e-12);
    const Eigen::MatrixXd c0 = s0.anomalies * s0.anomalies.transpose();
    const Eigen::MatrixXd c1 = s1.anomalies * s1.anomalies.transpose();
    CHECK((c1 - 4.0 * c0).cwiseAbs().maxCoeff() < 1e-10 * c0.cwiseAbs().maxCoeff());

    CHECK_THROWS_AS(inflate(ens, 0.5), std::invalid_argument);
}

TEST_CASE("inflate: a collapsed ensemble stays collapsed") {
    Eigen::MatrixXd members(2, 5);
    members.colwise() = Eigen::Vector2d(3.0, -1.0);
    AugmentedEnsemble ens = direct_ensemble(members);
    inflate(ens, 10.0);
    CHECK(phi_spread(ens) == 0.0);
}

TEST_CASE("init_ensemble: zero spreads give identical members") {
    Setup s = make_setup(Scenario::ThreeFold, 6, false, 50, 0.0, 0.0);
    for (Eigen::Index j = 1; j < s.ens.size(); ++j)
        CHECK(s.ens.members.col(j) == s.ens.members.col(0));
}

TEST_CASE("init_ensemble: layout stacks phi, reservoir, alpha, observations") {
    Setup s = make_setup(Scenario::ThreeFold, 50, false, 51);
    CHECK(s.ens.layout.phi_len == 4);
    CHECK(s.ens.layout.r_len == 30);
    CHECK(s.ens.layout.alpha_len == 4);
    CHECK(s.ens.layout.obs_len == 4);
    CHECK(s.ens.layout.total() == 4 + 30 + 4 + 4);
    CHECK(s.ens.size() == 50);
}

TEST_CASE("init_ensemble: phi spread matches the request at m = 50") {
    Setup s = make_setup(Scenario::TwoFold, 50, false, 52, 0.1);
    double var = 0.0;
    for (Eigen::Index i = 0; i < 4; ++i) {
        const auto row = s.ens.members.row(i).head(50);
        var += (row.array() - row.mean()).square().sum() / 49.0;
    }
    const double stddev = std::sqrt(var / 4.0);
    CHECK(stddev == doctest::Approx(0.1).epsilon(0.15));
}

TEST_CASE("init_ensemble: alpha stays nonnegative and is perturbed only threefold") {
    Setup s3 = make_setup(Scenario::ThreeFold, 20, false, 53, 0.1, 0.5);
    CHECK(s3.ens.alpha_block().minCoeff() >= 0.0);
    CHECK(alpha_spread(s3.ens) > 0.0);

    Setup s2 = make_setup(Scenario::TwoFold, 20, false, 53, 0.1, 0.5);
    const Eigen::VectorXd trained_alpha = factorize_output(s2.model).alpha;
    for (Eigen::Index j = 0; j < s2.ens.size(); ++j)
        CHECK(s2.ens.members.col(j).segment(s2.ens.layout.alpha_offset, 4) == trained_alpha);
}

TEST_CASE("init_ensemble: deterministic given the seed") {
    Setup a = make_setup(Scenario::ThreeFold, 8, true, 54);
    Setup b = make_setup(Scenario::ThreeFold, 8, true, 54);
    CHECK(a.ens.members == b.ens.members);
}

TEST_CASE("forecast_ensemble: identical members stay identical") {
    Setup s = make_setup(Scenario::TwoFold, 6, false, 60, 0.0, 0.0);
    forecast_ensemble(s.ens, s.model, s.basis, s.op, 7);
    for (Eigen::Index j = 1; j < s.ens.size(); ++j)
        CHECK(s.ens.members.col(j) == s.ens.members.col(0));
}

TEST_CASE("forecast_ensemble: a zeroed alpha member outputs the zero readout") {
    Setup s = make_setup(Scenario::ThreeFold, 6, false, 61);
    s.ens.members.col(2).segment(s.ens.layout.alpha_offset, 4).setZero();
    forecast_ensemble(s.ens, s.model, s.basis, s.op, 3);
    CHECK(s.ens.members.col(2).segment(s.ens.layout.phi_offset, 4).cwiseAbs().maxCoeff() == 0.0);
    CHECK(s.ens.members.col(0).segment(s.ens.layout.phi_offset, 4).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("scenario containment: inactive slices are bit-unchanged by analysis") {
    const auto run_one = [](Scenario scenario) {
        Setup s = make_setup(scenario, 10, true, 62);
        forecast_ensemble(s.ens, s.model, s.basis, s.op, 5);
        const Eigen::MatrixXd r_before = s.ens.r_block();
        const Eigen::MatrixXd alpha_before = s.ens.alpha_block();
        Observation obs;
        obs.d = Eigen::VectorXd::Constant(4, 1.0);
        obs.c_dd_diag = Eigen::VectorXd::Constant(4, 0.01);
        analysis_update(s.ens, obs, s.basis, s.op);
        return std::tuple(Eigen::MatrixXd(s.ens.r_block()) == r_before,
                          Eigen::MatrixXd(s.ens.alpha_block()) == alpha_before);
    };
    {
        const auto [r_same, alpha_same] = run_one(Scenario::PhysicalOnly);
        CHECK(r_same);
        CHECK(alpha_same);
    }
    {
        const auto [r_same, alpha_same] = run_one(Scenario::TwoFold);
        CHECK_FALSE(r_same);
        CHECK(alpha_same);
    }
    {
        const auto [r_same, alpha_same] = run_one(Scenario::ThreeFold);
        CHECK_FALSE(r_same);
        CHECK_FALSE(alpha_same);
    }
}

TEST_CASE("observation block is consistent after forecasts and analyses") {
    for (const bool sensors : {false, true}) {
        Setup s = make_setup(Scenario::ThreeFold, 8, sensors, 63);
        forecast_ensemble(s.ens, s.model, s.basis, s.op, 4);
        AugmentedEnsemble check = s.ens;
        refresh_observation_block(check, s.basis, s.op);
        CHECK((check.members - s.ens.members).cwiseAbs().maxCoeff() < 1e-12);

        Observation obs;
        obs.d = Eigen::VectorXd::Constant(s.ens.layout.obs_len, 0.5);
        obs.c_dd_diag = Eigen::VectorXd::Constant(s.ens.layout.obs_len, 0.05);
        analysis_update(s.ens, obs, s.basis, s.op);
        check = s.ens;
        refresh_observation_block(check, s.basis, s.op);
        CHECK((check.members - s.ens.members).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("alpha values stay nonnegative after an aggressive update") {
    Setup s = make_setup(Scenario::ThreeFold, 10, false, 64, 0.3, 0.5);
    Observation obs;
    obs.d = Eigen::VectorXd::Constant(4, -5.0);
    obs.c_dd_diag = Eigen::VectorXd::Constant(4, 1e-6);
    analysis_update(s.ens, obs, s.basis, s.op);
    CHECK(s.ens.alpha_block().minCoeff() >= 0.0);
}

TEST_CASE("phi_spread is the maximum anomaly magnitude of the state slice") {
    Eigen::MatrixXd members(2, 2);
    members << 1.0, 3.0, 0.0, 0.0;  // mean (2, 0), max |deviation| = 1
    CHECK(phi_spread(direct_ensemble(members)) == doctest::Approx(1.0));
}
