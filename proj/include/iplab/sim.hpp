#pragma once

#include <atomic>
#include <cmath>
#include <optional>
#include <thread>
#include <vector>

#include "iplab/control.hpp"
#include "iplab/core.hpp"
#include "iplab/model.hpp"
#include "iplab/rng.hpp"

namespace iplab {

/// Per-joint torque disturbance: zero-mean Gaussian, standard deviation in
/// N m, resampled once per output step and held across the step.
struct NoiseSpec {
    VecJ sigma;
    std::uint64_t base_seed = 0;

    void validate(int n) const {
        require(sigma.size() == n, "invalid-noise-spec",
                "sigma dimension must match gait dof");
        require((sigma.array() >= 0.0).all(), "invalid-noise-spec",
                "all sigma entries must be >= 0");
    }
};

struct SimConfig {
    double duration_s = 50.0;
    double output_rate_hz = 100.0;
    int internal_substeps = 10;
    std::optional<JointState> initial_state;  // default: upright at rest
    std::optional<ExoSpec> exo;

    void validate() const {
        require(duration_s > 0.0, "invalid-sim-config", "duration must be > 0");
        require(output_rate_hz > 0.0, "invalid-sim-config", "output rate must be > 0");
        require(internal_substeps >= 1, "invalid-sim-config", "substeps must be >= 1");
    }

    int sample_count() const {
        return static_cast<int>(std::llround(duration_s * output_rate_hz));
    }
};

/// Uniformly sampled closed-loop trial record. All channels share the same
/// length; a failed trial holds the samples before the failure instant.
struct TrialSeries {
    std::vector<double> time;
    std::vector<VecJ> angles;
    std::vector<VecJ> rates;
    std::vector<VecJ> torques;  // commanded joint torque (control + noise + exo)
    std::vector<double> fx;
    std::vector<double> fz;
    std::vector<double> cop_x;
    std::vector<double> com_ax;
    std::vector<double> com_az;
    double sample_rate_hz = 0.0;
    int trial_index = 0;
    bool failed = false;
    double failure_time = 0.0;

    std::size_t size() const { return time.size(); }
};

namespace detail {

template <int N>
TrialSeries run_trial_impl(const Chain<N>& chain, const PendulumModel& model,
                           const Eigen::Matrix<double, N, 2 * N>& gain,
                           const NoiseSpec& noise, const SimConfig& config,
                           int trial_index) {
    const int samples = config.sample_count();
    const double dt_out = 1.0 / config.output_rate_hz;
    const double dt = dt_out / config.internal_substeps;

    TrialSeries out;
    out.trial_index = trial_index;
    out.sample_rate_hz = config.output_rate_hz;
    out.time.reserve(samples);
    out.angles.reserve(samples);
    out.rates.reserve(samples);
    out.torques.reserve(samples);
    out.fx.reserve(samples);
    out.fz.reserve(samples);
    out.cop_x.reserve(samples);
    out.com_ax.reserve(samples);
    out.com_az.reserve(samples);

    GaussianRng rng(substream(noise.base_seed, static_cast<std::uint64_t>(trial_index)));

    using StateVec = Eigen::Matrix<double, 2 * N, 1>;
    StateVec y = StateVec::Zero();
    if (config.initial_state) {
        for (int i = 0; i < N; ++i) {
            y[i] = config.initial_state->angles[i];
            y[N + i] = config.initial_state->rates[i];
        }
    }

    const bool exo_on = config.exo.has_value();
    const int exo_row = exo_on ? exo_torque_row(model) : 0;
    ExoSpec exo = config.exo.value_or(ExoSpec{});
    if (exo_on) exo.validate();
    const double thigh_m = model.segments()[0].mass;
    const double thigh_len = model.segments()[0].length;
    const double thigh_lc = model.segments()[0].com_offset;
    const double hat_m = model.segments()[1].mass;
    const double hat_lc = model.segments()[1].com_offset;
    const double grav = model.gravity();

    // Commanded torque at a given state under the held disturbance.
    auto torque_at = [&](const StateVec& s, const Eigen::Matrix<double, N, 1>& w) {
        Eigen::Matrix<double, N, 1> tau = w - gain * s;
        if (exo_on) {
            if (exo.mode == ExoSpec::Mode::StanceStiffness) {
                tau[exo_row] += -exo.k_r * s[1];
            } else {
                tau[exo_row] += -exo.k_p * s[0] - exo.k_d * s[N] -
                                exo.gamma * grav *
                                    (0.5 * hat_m * (thigh_len * std::sin(s[0]) -
                                                    hat_lc * std::sin(s[1])) +
                                     thigh_m * thigh_lc * std::sin(s[0]));
            }
        }
        return tau;
    };

    auto deriv = [&](const StateVec& s, const Eigen::Matrix<double, N, 1>& w,
                     StateVec& ds) {
        Eigen::Matrix<double, N, 1> tau = torque_at(s, w);
        ds.template head<N>() = s.template tail<N>();
        chain.accelerations(s.data(), s.data() + N, tau.data(), ds.data() + N);
    };

    Eigen::Matrix<double, N, 1> w;
    StateVec k1, k2, k3, k4;
    for (int k = 0; k < samples; ++k) {
        for (int i = 0; i < N; ++i) w[i] = noise.sigma[i] * rng.next();
        const double t = k * dt_out;

        // Sample the observables at t under the torque commanded there.
        Eigen::Matrix<double, N, 1> tau = torque_at(y, w);
        Eigen::Matrix<double, N, 1> qdd;
        chain.accelerations(y.data(), y.data() + N, tau.data(), qdd.data());
        auto trig = chain.trig(y.data());
        double xdd, zdd;
        chain.com_acceleration(trig, chain.lam, y.data() + N, qdd.data(), xdd, zdd);
        double fx = chain.mt * xdd;
        double fz = chain.mt * (zdd + chain.g);

        bool finite = y.allFinite() && tau.allFinite();
        bool upright = finite && y.template head<N>().cwiseAbs().maxCoeff() <= M_PI / 2;
        if (!finite || !upright || fz <= 0.0) {
            out.failed = true;
            out.failure_time = t;
            break;
        }

        out.time.push_back(t);
        VecJ q(N), qd(N), tq(N);
        for (int i = 0; i < N; ++i) {
            q[i] = y[i];
            qd[i] = y[N + i];
            tq[i] = tau[i];
        }
        out.angles.push_back(q);
        out.rates.push_back(qd);
        out.torques.push_back(tq);
        out.fx.push_back(fx);
        out.fz.push_back(fz);
        out.cop_x.push_back(tau[0] / fz);  // pin-joint moment balance
        out.com_ax.push_back(xdd);
        out.com_az.push_back(zdd);

        for (int sub = 0; sub < config.internal_substeps; ++sub) {
            deriv(y, w, k1);
            deriv(y + 0.5 * dt * k1, w, k2);
            deriv(y + 0.5 * dt * k2, w, k3);
            deriv(y + dt * k3, w, k4);
            y += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
    }
    return out;
}

} // namespace detail

/// Integrates the nonlinear closed loop under tau = -K x + w (plus the
/// optional exoskeleton knee torque). Deterministic given
/// (noise.base_seed, trial_index).
inline TrialSeries run_trial(const PendulumModel& model, const LqrGain& gain,
                             const NoiseSpec& noise, const SimConfig& config,
                             int trial_index) {
    config.validate();
    int n = model.dof();
    noise.validate(n);
    require(gain.gain.rows() == n && gain.gain.cols() == 2 * n, "dimension-mismatch",
            "gain dimensions do not match gait");
    if (config.initial_state) check_state_dim(model, *config.initial_state);

    if (model.gait() == Gait::Stance) {
        detail::Chain<3> chain(model);
        Eigen::Matrix<double, 3, 6> k = gain.gain;
        return detail::run_trial_impl<3>(chain, model, k, noise, config, trial_index);
    }
    detail::Chain<2> chain(model);
    Eigen::Matrix<double, 2, 4> k = gain.gain;
    return detail::run_trial_impl<2>(chain, model, k, noise, config, trial_index);
}

/// Runs n_trials independent trials (indices 0..n-1). Trials execute in
/// parallel up to `threads` workers; per-trial substreams make the result
/// independent of scheduling.
inline std::vector<TrialSeries> run_batch(const PendulumModel& model, const LqrSpec& spec,
                                          const NoiseSpec& noise, const SimConfig& config,
                                          int n_trials, int threads = 0) {
    require(n_trials >= 1, "invalid-sim-config", "n_trials must be >= 1");
    auto gain = lqr_gain(linearize(model), spec);

    if (threads <= 0) {
        unsigned hw = std::thread::hardware_concurrency();
        threads = hw == 0 ? 1 : static_cast<int>(hw);
    }
    threads = std::min(threads, n_trials);

    std::vector<TrialSeries> out(n_trials);
    if (threads == 1) {
        for (int i = 0; i < n_trials; ++i)
            out[i] = run_trial(model, gain, noise, config, i);
        return out;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int w = 0; w < threads; ++w) {
        pool.emplace_back([&] {
            for (int i = next.fetch_add(1); i < n_trials; i = next.fetch_add(1))
                out[i] = run_trial(model, gain, noise, config, i);
        });
    }
    for (auto& th : pool) th.join();
    return out;
}

/// COP along x from pin-joint moment balance: cop_x = tau_pin / fz. The pin
/// torque is the first torque channel (ankle in stance, knee in kneeling).
inline std::vector<double> compute_cop(const TrialSeries& series, const PendulumModel& model) {
    (void)model;
    std::vector<double> cop(series.size());
    for (std::size_t k = 0; k < series.size(); ++k) {
        require(series.fz[k] > 0.0, "unsupported-body",
                "fz <= 0 at sample " + std::to_string(k));
        cop[k] = series.torques[k][0] / series.fz[k];
    }
    return cop;
}

} // namespace iplab
