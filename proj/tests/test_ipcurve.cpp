#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "iplab/ipcurve.hpp"
#include "iplab/rng.hpp"

using namespace iplab;

namespace {

std::vector<double> white_noise(std::size_t n, double sigma, std::uint64_t seed) {
    GaussianRng rng(seed);
    std::vector<double> x(n);
    for (double& v : x) v = sigma * rng.next();
    return x;
}

// Force-plate channels of force lines pivoting about (0, h): the line
// x(z) = cop + q z passes through the pivot, so cop = -h * q exactly.
struct PivotData {
    std::vector<double> cop, fx, fz;
};

PivotData pivot_data(double height, std::size_t n, std::uint64_t seed) {
    PivotData d;
    d.fz.assign(n, 666.4);
    auto q = white_noise(n, 0.01, seed);
    d.fx.resize(n);
    d.cop.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        d.fx[k] = q[k] * d.fz[k];
        d.cop[k] = -height * q[k];
    }
    return d;
}

} // namespace

TEST_CASE("grf inclination angle") {
    std::vector<double> fx = {6.664, 0.0, -6.664};
    std::vector<double> fz = {666.4, 666.4, 666.4};
    auto q = q_angle(fx, fz);
    CHECK(q[0] == Catch::Approx(0.01));
    CHECK(q[1] == 0.0);
    CHECK(q[2] == Catch::Approx(-0.01));

    std::vector<double> bad_fz = {666.4, -1.0, 666.4};
    CHECK_THROWS_AS(q_angle(fx, bad_fz), Error);
}

TEST_CASE("per-band height estimation") {
    auto cop = white_noise(2000, 0.01, 3);
    std::vector<double> q(cop.size());
    for (std::size_t k = 0; k < q.size(); ++k) q[k] = cop[k] / 0.8;
    auto est = ip_height_band(cop, q);
    CHECK(est.reliable);
    CHECK(est.height == Catch::Approx(0.8).epsilon(1e-12));
    CHECK(est.r2 == Catch::Approx(1.0).epsilon(1e-12));

    // Band-limited pivot trace with ~1% additive noise on both channels.
    auto base = bandpass_zero_lag(white_noise(6000, 1.0, 5), 2.4, 2.6, 100.0);
    double rms = 0.0;
    for (double v : base) rms += v * v;
    rms = std::sqrt(rms / base.size());
    auto nc = bandpass_zero_lag(white_noise(6000, 1.0, 6), 2.4, 2.6, 100.0);
    auto nq = bandpass_zero_lag(white_noise(6000, 1.0, 7), 2.4, 2.6, 100.0);
    std::vector<double> cop_b(base.size()), q_b(base.size());
    for (std::size_t k = 0; k < base.size(); ++k) {
        cop_b[k] = 0.85 * (base[k] + 0.01 * rms * nc[k]);
        q_b[k] = base[k] + 0.01 * rms * nq[k];
    }
    auto noisy = ip_height_band(cop_b, q_b);
    CHECK(noisy.reliable);
    CHECK(noisy.height == Catch::Approx(0.85).margin(0.02));

    // Degenerate: q carries no signal.
    std::vector<double> zeros(2000, 0.0);
    CHECK_FALSE(ip_height_band(cop, zeros).reliable);

    std::vector<double> tiny(10, 1.0);
    CHECK_THROWS_AS(ip_height_band(tiny, tiny), Error);
}

TEST_CASE("full curve on rigid-pivot data") {
    auto spec = BandSpec::standard();
    for (double h : {0.3, 0.6, 0.85, 1.2}) {
        auto d = pivot_data(h, 5000, 11);
        auto curve = ip_curve(d.cop, d.fx, d.fz, spec, 0.85);
        REQUIRE(curve.bands() == 38);
        for (std::size_t b = 0; b < curve.bands(); ++b) {
            REQUIRE(curve.reliable[b]);
            CHECK(curve.ip_height[b] == Catch::Approx(h).epsilon(0.02));
            CHECK(curve.normalized[b] == Catch::Approx(h / 0.85).epsilon(0.02));
        }
    }
}

TEST_CASE("curve normalization and scale invariance") {
    auto spec = BandSpec::standard();
    auto d = pivot_data(0.85, 5000, 13);
    auto curve = ip_curve(d.cop, d.fx, d.fz, spec, 0.85);
    auto doubled = ip_curve(d.cop, d.fx, d.fz, spec, 1.70);
    for (std::size_t b = 0; b < curve.bands(); ++b) {
        CHECK(doubled.ip_height[b] == curve.ip_height[b]);
        CHECK(doubled.normalized[b] == Catch::Approx(0.5 * curve.normalized[b]).epsilon(1e-12));
        CHECK(curve.normalized[b] * curve.reference_height ==
              Catch::Approx(curve.ip_height[b]).margin(1e-12));
    }

    // Co-scaling cop and fx with fz held fixed leaves heights unchanged.
    PivotData scaled = d;
    for (std::size_t k = 0; k < scaled.cop.size(); ++k) {
        scaled.cop[k] *= 3.7;
        scaled.fx[k] *= 3.7;
    }
    auto curve2 = ip_curve(scaled.cop, scaled.fx, scaled.fz, spec, 0.85);
    for (std::size_t b = 0; b < curve.bands(); ++b)
        CHECK(curve2.ip_height[b] == Catch::Approx(curve.ip_height[b]).epsilon(1e-9));

    // All-degenerate input is rejected.
    std::vector<double> zeros(5000, 0.0), fz(5000, 666.4);
    CHECK_THROWS_AS(ip_curve(zeros, zeros, fz, spec, 0.85), Error);
}

TEST_CASE("curve averaging across trials") {
    IpCurve a, b;
    a.band_centers = b.band_centers = {0.5, 0.7, 0.9};
    a.reference_height = b.reference_height = 0.85;
    a.ip_height = {0.8, 1.0, 1.2};
    b.ip_height = {0.9, 0.0, 1.0};
    a.normalized = a.ip_height;
    b.normalized = b.ip_height;
    a.regression_r2 = {1, 1, 1};
    b.regression_r2 = {1, 0, 1};
    a.reliable = {true, true, true};
    b.reliable = {true, false, true};

    auto m = mean_curve({a, b});
    CHECK(m.ip_height[0] == Catch::Approx(0.85));
    CHECK(m.ip_height[1] == Catch::Approx(1.0));  // only trial a contributes
    CHECK(m.reliable[1]);                         // 1 of 2 is still half
    CHECK(m.ip_height[2] == Catch::Approx(1.1));

    IpCurve c = a;
    c.band_centers = {0.5, 0.7};
    c.ip_height = {1, 1};
    c.normalized = {1, 1};
    c.regression_r2 = {1, 1};
    c.reliable = {true, true};
    CHECK_THROWS_AS(mean_curve({a, c}), Error);
}

TEST_CASE("descriptors from a synthetic exponential curve") {
    IpCurve curve;
    curve.reference_height = 0.85;
    for (int k = 0; k < 38; ++k) {
        double f = 0.5 + 0.2 * k;
        double y = 0.6 + 0.9 * std::exp(-0.8 * f);
        curve.band_centers.push_back(f);
        curve.normalized.push_back(y);
        curve.ip_height.push_back(y * 0.85);
        curve.regression_r2.push_back(1.0);
        curve.reliable.push_back(true);
    }
    auto d = descriptors(curve);
    REQUIRE(d.crossover_hz.has_value());
    CHECK(*d.crossover_hz == Catch::Approx(std::log(0.9 / 0.4) / 0.8).epsilon(1e-6));
    CHECK(*d.crossover_hz == Catch::Approx(1.014).epsilon(1e-3));
    CHECK(d.hfa_slope == Catch::Approx(-0.72 * std::exp(-0.8 * 7.9)).epsilon(1e-4));
    CHECK(d.hfa_slope == Catch::Approx(-1.3e-3).epsilon(0.01));
    CHECK(d.asymptote_level == Catch::Approx(0.6).epsilon(1e-6));
    REQUIRE(d.raw_crossover_hz.has_value());
    CHECK(*d.raw_crossover_hz == Catch::Approx(*d.crossover_hz).margin(0.2));

    // Constant curve exactly at 1: crossover at the first band, zero slope.
    IpCurve flat = curve;
    for (int k = 0; k < 38; ++k) {
        flat.normalized[k] = 1.0;
        flat.ip_height[k] = 0.85;
    }
    auto df = descriptors(flat);
    REQUIRE(df.crossover_hz.has_value());
    CHECK(*df.crossover_hz == Catch::Approx(0.5));
    CHECK(df.hfa_slope == Catch::Approx(0.0).margin(1e-12));

    // Asymptote above 1: the curve never crosses, so no crossover.
    IpCurve high = curve;
    for (int k = 0; k < 38; ++k)
        high.normalized[k] = 1.1 + 0.9 * std::exp(-0.8 * high.band_centers[k]);
    auto dh = descriptors(high);
    CHECK_FALSE(dh.crossover_hz.has_value());
    CHECK_FALSE(dh.raw_crossover_hz.has_value());

    // Too few reliable bands.
    IpCurve sparse = curve;
    for (int k = 0; k < 33; ++k) sparse.reliable[k] = false;
    CHECK_THROWS_AS(descriptors(sparse), Error);
}
