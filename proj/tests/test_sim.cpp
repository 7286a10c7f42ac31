#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "iplab/sim.hpp"

using namespace iplab;

namespace {

LqrGain toi1_gain(const PendulumModel& model) {
    auto params = controller_preset("toi1").for_gait(model.gait());
    return lqr_gain(linearize(model), params.lqr_spec());
}

NoiseSpec noise_for(const PendulumModel& model, double sigma, std::uint64_t seed) {
    NoiseSpec n;
    n.sigma = VecJ::Constant(model.dof(), sigma);
    n.base_seed = seed;
    return n;
}

bool identical(const TrialSeries& a, const TrialSeries& b) {
    if (a.size() != b.size() || a.failed != b.failed) return false;
    for (std::size_t k = 0; k < a.size(); ++k) {
        if (a.time[k] != b.time[k] || a.fx[k] != b.fx[k] || a.fz[k] != b.fz[k] ||
            a.cop_x[k] != b.cop_x[k] || a.com_ax[k] != b.com_ax[k] ||
            a.com_az[k] != b.com_az[k])
            return false;
        if (a.angles[k] != b.angles[k] || a.rates[k] != b.rates[k] ||
            a.torques[k] != b.torques[k])
            return false;
    }
    return true;
}

} // namespace

TEST_CASE("noiseless equilibrium stays at rest") {
    auto model = PendulumModel::tip_default();
    auto gain = toi1_gain(model);
    SimConfig config;
    config.duration_s = 2.0;

    auto series = run_trial(model, gain, noise_for(model, 0.0, 1), config, 0);
    REQUIRE(series.size() == 200);
    CHECK_FALSE(series.failed);
    for (std::size_t k = 0; k < series.size(); ++k) {
        CHECK(series.angles[k].norm() == 0.0);
        CHECK(series.torques[k].norm() == 0.0);
        CHECK(series.fx[k] == 0.0);
        CHECK(series.cop_x[k] == 0.0);
        CHECK(series.fz[k] == Catch::Approx(666.4).epsilon(1e-12));
    }
}

TEST_CASE("noiseless perturbation decays under the closed loop") {
    auto model = PendulumModel::tip_default();
    auto gain = toi1_gain(model);
    SimConfig config;
    JointState init = JointState::zero(3);
    init.angles[0] = 1e-3;
    config.initial_state = init;

    auto series = run_trial(model, gain, noise_for(model, 0.0, 1), config, 0);
    REQUIRE(series.size() == 5000);
    CHECK_FALSE(series.failed);
    double final_norm = std::hypot(series.angles.back().norm(), series.rates.back().norm());
    CHECK(final_norm < 1e-6);
}

TEST_CASE("trials are bit-deterministic in (base_seed, trial_index)") {
    auto model = PendulumModel::dip_default();
    auto gain = toi1_gain(model);
    SimConfig config;
    config.duration_s = 5.0;
    auto noise = noise_for(model, 1.0, 42);

    auto a = run_trial(model, gain, noise, config, 3);
    auto b = run_trial(model, gain, noise, config, 3);
    CHECK(identical(a, b));

    auto c = run_trial(model, gain, noise, config, 4);
    CHECK_FALSE(identical(a, c));
}

TEST_CASE("batch semantics: count, ordering, determinism") {
    auto model = PendulumModel::tip_default();
    auto params = controller_preset("toi1");
    SimConfig config;
    config.duration_s = 3.0;
    auto noise = noise_for(model, 1.0, 7);

    auto batch = run_batch(model, params.lqr_spec(), noise, config, 4, 2);
    REQUIRE(batch.size() == 4);
    for (int i = 0; i < 4; ++i) {
        CHECK(batch[i].trial_index == i);
        CHECK(batch[i].size() == 300);
    }

    auto again = run_batch(model, params.lqr_spec(), noise, config, 4, 1);
    for (int i = 0; i < 4; ++i) CHECK(identical(batch[i], again[i]));

    auto single = run_trial(model, toi1_gain(model), noise, config, 0);
    CHECK(identical(batch[0], single));
}

TEST_CASE("stationary sway: mean vertical load and zero horizontal drift") {
    auto model = PendulumModel::tip_default();
    auto gain = toi1_gain(model);
    SimConfig config;
    auto noise = noise_for(model, 1.0, 7);

    for (int trial = 0; trial < 5; ++trial) {
        auto series = run_trial(model, gain, noise, config, trial);
        REQUIRE_FALSE(series.failed);
        double mean_fz = 0.0, mean_fx = 0.0;
        for (std::size_t k = 0; k < series.size(); ++k) {
            mean_fz += series.fz[k];
            mean_fx += series.fx[k];
        }
        mean_fz /= series.size();
        mean_fx /= series.size();
        CHECK(mean_fz == Catch::Approx(666.4).epsilon(0.005));
        CHECK(std::abs(mean_fx) < 0.5);
    }
}

TEST_CASE("integrator convergence: doubling substeps barely moves trajectories") {
    auto model = PendulumModel::tip_default();
    auto gain = toi1_gain(model);
    auto noise = noise_for(model, 1.0, 11);
    SimConfig coarse;
    coarse.duration_s = 10.0;
    SimConfig fine = coarse;
    fine.internal_substeps = 20;

    auto a = run_trial(model, gain, noise, coarse, 0);
    auto b = run_trial(model, gain, noise, fine, 0);
    REQUIRE(a.size() == b.size());
    double diff2 = 0.0, ref2 = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        diff2 += (a.angles[k] - b.angles[k]).squaredNorm();
        ref2 += b.angles[k].squaredNorm();
    }
    CHECK(std::sqrt(diff2 / ref2) < 1e-3);
}

TEST_CASE("cop: static equilibrium, held lean, and pure vertical loading") {
    auto model = PendulumModel::tip_default();
    int n = model.dof();
    double mt = model.total_mass();
    double g = model.gravity();

    // Zero-torque equilibrium.
    TrialSeries rest;
    rest.time = {0.0};
    rest.angles = {VecJ::Zero(n)};
    rest.rates = {VecJ::Zero(n)};
    rest.torques = {VecJ::Zero(n)};
    rest.fz = {mt * g};
    rest.fx = {0.0};
    CHECK(compute_cop(rest, model)[0] == 0.0);

    // Held lean: pick absolute-angle sines u so that both the lumped COM x
    // and the chain-weighted COM x equal +0.01 m, then hold tau = G(theta).
    Eigen::Matrix<double, 2, 3> a;
    double lc1 = 0.3, lc2 = 0.1, lc3 = 0.45;
    a.row(0) << lc1, lc2, lc3;
    double w1 = 6 * 0.3 + (14 + 48) * 0.6, w2 = 14 * 0.1 + 48 * 0.42, w3 = 48 * 0.45;
    a.row(1) << w1 / mt, w2 / mt, w3 / mt;
    Eigen::Vector2d rhs(-0.01, -0.01);
    Eigen::Vector3d u = a.transpose() * (a * a.transpose()).inverse() * rhs;

    JointState lean = JointState::zero(n);
    double prev_phi = 0.0;
    for (int i = 0; i < n; ++i) {
        double phi = std::asin(u[i]);
        lean.angles[i] = phi - prev_phi;
        prev_phi = phi;
    }
    auto kin = com_kinematics(model, lean);
    REQUIRE(kin.position.x() == Catch::Approx(0.01).epsilon(1e-9));

    VecJ hold = dynamics_terms(model, lean).gravity_vector;
    auto acc = forward_dynamics(model, lean, hold).accelerations;
    REQUIRE(acc.norm() < 1e-12);  // pose is in static balance under hold
    auto grf = ground_reaction(model, lean, acc);

    TrialSeries held;
    held.time = {0.0};
    held.angles = {lean.angles};
    held.rates = {lean.rates};
    held.torques = {hold};
    held.fz = {grf.fz};
    held.fx = {grf.fx};
    double cop = compute_cop(held, model)[0];
    CHECK(cop == Catch::Approx(0.01).margin(1e-6));
    CHECK(cop * kin.position.x() > 0.0);  // same sign as the COM offset

    // Vertical load changes with zero pin torque keep the COP at the origin.
    TrialSeries vertical;
    vertical.time = {0.0, 0.01, 0.02};
    vertical.angles.assign(3, VecJ::Zero(n));
    vertical.rates.assign(3, VecJ::Zero(n));
    vertical.torques.assign(3, VecJ::Zero(n));
    vertical.fz = {600.0, 700.0, 650.0};
    vertical.fx = {0.0, 0.0, 0.0};
    for (double c : compute_cop(vertical, model)) CHECK(c == 0.0);

    TrialSeries bad = vertical;
    bad.fz[1] = -1.0;
    CHECK_THROWS_AS(compute_cop(bad, model), Error);
}

TEST_CASE("unstabilized lean falls and is marked failed") {
    auto model = PendulumModel::tip_default();
    LqrGain zero_gain;
    zero_gain.gain = GainMat::Zero(3, 6);
    SimConfig config;
    config.duration_s = 5.0;
    JointState init = JointState::zero(3);
    init.angles[0] = 0.3;
    config.initial_state = init;

    auto series = run_trial(model, zero_gain, noise_for(model, 0.0, 1), config, 0);
    CHECK(series.failed);
    CHECK(series.failure_time > 0.0);
    CHECK(series.size() < 500);
    for (double f : series.fz) CHECK(f > 0.0);
}

TEST_CASE("ensemble cop spread grows with the noise scale") {
    auto model = PendulumModel::tip_default();
    auto params = controller_preset("toi1");
    SimConfig config;
    config.duration_s = 20.0;

    double prev = 0.0;
    for (double scale : {0.5, 1.0, 2.0}) {
        NoiseSpec noise = noise_for(model, scale, 99);
        auto batch = run_batch(model, params.lqr_spec(), noise, config, 30, 2);
        double acc = 0.0;
        std::size_t count = 0;
        for (const auto& trial : batch) {
            REQUIRE_FALSE(trial.failed);
            double mean = 0.0;
            for (double c : trial.cop_x) mean += c;
            mean /= trial.size();
            for (double c : trial.cop_x) acc += (c - mean) * (c - mean);
            count += trial.size();
        }
        double sd = std::sqrt(acc / count);
        CHECK(sd > prev);
        prev = sd;
    }
}
