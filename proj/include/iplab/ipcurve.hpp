#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "iplab/core.hpp"
#include "iplab/signal.hpp"

namespace iplab {

struct SamplingSpec {
    double rate = 100.0;  // Hz
    double step = 0.01;   // s

    static SamplingSpec from_rate(double rate_hz) {
        require(rate_hz > 0.0, "invalid-sampling", "sample rate must be > 0");
        return SamplingSpec{rate_hz, 1.0 / rate_hz};
    }
};

/// GRF inclination from vertical under the small-angle approximation,
/// kept signed so band regression against the signed COP is well posed.
inline std::vector<double> q_angle(std::span<const double> fx, std::span<const double> fz) {
    require(fx.size() == fz.size(), "invalid-signal", "fx and fz lengths differ");
    std::vector<double> q(fx.size());
    for (std::size_t k = 0; k < fx.size(); ++k) {
        require(fz[k] > 0.0, "unsupported-body", "fz <= 0 at sample " + std::to_string(k));
        q[k] = fx[k] / fz[k];
    }
    return q;
}

struct BandIpEstimate {
    double height = 0.0;  // m
    double r2 = 0.0;
    bool reliable = false;
};

/// Minimum in-band r-squared for a band estimate to count as a linear trace.
/// Uncorrelated channels produce r^2 around 1/(2 B T) (about 0.05 for a
/// 0.2 Hz band over 50 s), well below this floor.
inline constexpr double kBandR2Floor = 0.2;

/// Zero-intercept regression of the band-limited GRF angle on the
/// band-limited COP; the intersection-point height is the reciprocal slope.
inline BandIpEstimate ip_height_band(std::span<const double> cop_b,
                                     std::span<const double> q_b) {
    require(cop_b.size() == q_b.size() && cop_b.size() >= 100, "invalid-signal",
            "band series must have equal length >= 100");
    double scc = 0.0, sqq = 0.0, sqc = 0.0;
    for (std::size_t k = 0; k < cop_b.size(); ++k) {
        scc += cop_b[k] * cop_b[k];
        sqq += q_b[k] * q_b[k];
        sqc += q_b[k] * cop_b[k];
    }
    BandIpEstimate out;
    const double n = static_cast<double>(cop_b.size());
    if (scc / n < 1e-24 || sqq / n < 1e-24) return out;  // degenerate variance
    double slope = sqc / scc;
    if (std::abs(slope) < 1e-9) return out;
    out.height = 1.0 / slope;
    out.r2 = (sqc * sqc) / (scc * sqq);
    out.reliable = out.r2 >= kBandR2Floor;
    return out;
}

/// Intersection-point heights across the analysis bands, with heights also
/// normalized by a reference (COM) height.
struct IpCurve {
    std::vector<double> band_centers;
    std::vector<double> ip_height;   // m
    std::vector<double> normalized;  // ip_height / reference_height
    std::vector<double> regression_r2;
    std::vector<bool> reliable;
    double reference_height = 0.0;

    std::size_t bands() const { return band_centers.size(); }
    int reliable_count() const {
        return static_cast<int>(std::count(reliable.begin(), reliable.end(), true));
    }
};

inline IpCurve ip_curve(std::span<const double> cop, std::span<const double> fx,
                        std::span<const double> fz, const BandSpec& spec,
                        double reference_height) {
    require(reference_height > 0.0, "invalid-reference", "reference height must be > 0");
    require(cop.size() == fx.size() && fx.size() == fz.size(), "invalid-signal",
            "cop/grf series lengths differ");
    // Force lines x(z) = cop + q z at adjacent instants intersect at
    // h = -dcop/dq, so the regressand is the mirrored inclination -q = y1/fz
    // (y1 being the negated horizontal GRF). This keeps recovered heights
    // positive for force lines that pivot above the plate.
    std::vector<double> q = q_angle(fx, fz);
    for (double& v : q) v = -v;
    auto bands = band_decompose(cop, q, spec);

    IpCurve curve;
    curve.reference_height = reference_height;
    curve.band_centers.reserve(bands.size());
    for (const auto& band : bands) {
        auto est = ip_height_band(band.cop, band.q);
        curve.band_centers.push_back(band.center_hz);
        curve.ip_height.push_back(est.reliable ? est.height : 0.0);
        curve.normalized.push_back(est.reliable ? est.height / reference_height : 0.0);
        curve.regression_r2.push_back(est.r2);
        curve.reliable.push_back(est.reliable);
    }
    require(2 * curve.reliable_count() > static_cast<int>(curve.bands()),
            "ip-curve-unreliable", "more than half of the bands are unreliable");
    return curve;
}

/// Band-wise mean of per-trial IP heights over the trials whose band estimate
/// is reliable. A mean band stays reliable while at least half of the curves
/// contribute to it.
inline IpCurve mean_curve(const std::vector<IpCurve>& curves) {
    require(!curves.empty(), "invalid-signal", "no curves to average");
    const auto& first = curves.front();
    for (const auto& c : curves)
        require(c.bands() == first.bands() &&
                    c.reference_height == first.reference_height,
                "band-grid-mismatch", "curves use different band grids");

    IpCurve mean;
    mean.band_centers = first.band_centers;
    mean.reference_height = first.reference_height;
    mean.ip_height.assign(first.bands(), 0.0);
    mean.normalized.assign(first.bands(), 0.0);
    mean.regression_r2.assign(first.bands(), 0.0);
    mean.reliable.assign(first.bands(), false);
    for (std::size_t b = 0; b < first.bands(); ++b) {
        int count = 0;
        double h = 0.0, r2 = 0.0;
        for (const auto& c : curves) {
            if (!c.reliable[b]) continue;
            ++count;
            h += c.ip_height[b];
            r2 += c.regression_r2[b];
        }
        if (2 * count >= static_cast<int>(curves.size())) {
            mean.ip_height[b] = h / count;
            mean.normalized[b] = mean.ip_height[b] / mean.reference_height;
            mean.regression_r2[b] = r2 / count;
            mean.reliable[b] = true;
        }
    }
    return mean;
}

/// Descriptors of the normalized IP curve: the crossover frequency where the
/// fitted curve passes 1, and the high-frequency-asymptote slope.
struct IpDescriptors {
    std::optional<double> crossover_hz;      // from the exponential fit
    std::optional<double> raw_crossover_hz;  // linear interpolation fallback
    double hfa_slope = 0.0;                  // dy/df of the fit at the top band
    double hfa_slope_linear = 0.0;           // OLS slope over the top 15 bands
    double asymptote_level = 0.0;            // c0
    double fit_c0 = 0.0, fit_c1 = 0.0, fit_c2 = 0.0;
    double fit_cost = 0.0;
    int fit_iterations = 0;
};

namespace detail {

struct ExpFit {
    double c0 = 0.0, c1 = 0.0, c2 = 0.0;
    double cost = 0.0;
    int iterations = 0;
};

/// Damped least squares (Levenberg-Marquardt) for y = c0 + c1 exp(-c2 f),
/// with c2 kept nonnegative.
inline ExpFit fit_exponential(const std::vector<double>& f, const std::vector<double>& y) {
    const int n = static_cast<int>(f.size());
    require(n >= 3, "descriptor-failure", "too few points for the exponential fit");

    ExpFit fit;
    // Initial guess: asymptote from the top quarter, decay rate from the
    // first and middle points.
    double tail = 0.0;
    int tail_n = std::max(1, n / 4);
    for (int i = n - tail_n; i < n; ++i) tail += y[i];
    fit.c0 = tail / tail_n;
    fit.c2 = 1.0;
    int mid = n / 2;
    double d0 = y[0] - fit.c0, dm = y[mid] - fit.c0;
    if (d0 * dm > 0.0 && std::abs(dm) < std::abs(d0))
        fit.c2 = std::log(d0 / dm) / (f[mid] - f[0]);
    if (!(fit.c2 > 0.0) || !std::isfinite(fit.c2)) fit.c2 = 1.0;
    fit.c1 = d0 * std::exp(fit.c2 * f[0]);

    auto cost_at = [&](double a, double b, double c) {
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
            double r = a + b * std::exp(-c * f[i]) - y[i];
            acc += r * r;
        }
        return acc;
    };

    fit.cost = cost_at(fit.c0, fit.c1, fit.c2);
    double lambda = 1e-3;
    for (fit.iterations = 0; fit.iterations < 200; ++fit.iterations) {
        if (fit.cost < 1e-28) break;
        Eigen::Matrix3d jtj = Eigen::Matrix3d::Zero();
        Eigen::Vector3d jtr = Eigen::Vector3d::Zero();
        for (int i = 0; i < n; ++i) {
            double e = std::exp(-fit.c2 * f[i]);
            Eigen::Vector3d j(1.0, e, -fit.c1 * f[i] * e);
            double r = fit.c0 + fit.c1 * e - y[i];
            jtj += j * j.transpose();
            jtr += j * r;
        }
        bool stepped = false;
        for (int attempt = 0; attempt < 24; ++attempt) {
            Eigen::Matrix3d damped = jtj;
            damped.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-12);
            Eigen::Vector3d step = damped.ldlt().solve(-jtr);
            double a = fit.c0 + step[0], b = fit.c1 + step[1];
            double c = std::max(0.0, fit.c2 + step[2]);
            double cost = cost_at(a, b, c);
            if (std::isfinite(cost) && cost < fit.cost) {
                double gain = (fit.cost - cost) / std::max(fit.cost, 1e-300);
                fit.c0 = a;
                fit.c1 = b;
                fit.c2 = c;
                fit.cost = cost;
                lambda = std::max(lambda * 0.3, 1e-12);
                stepped = true;
                if (gain < 1e-12 && step.norm() < 1e-12) fit.iterations = 200;
                break;
            }
            lambda *= 8.0;
        }
        if (!stepped) break;
    }
    require(std::isfinite(fit.cost), "descriptor-failure",
            "exponential fit did not converge");
    return fit;
}

} // namespace detail

inline IpDescriptors descriptors(const IpCurve& curve) {
    std::vector<double> f, y;
    for (std::size_t b = 0; b < curve.bands(); ++b) {
        if (!curve.reliable[b]) continue;
        f.push_back(curve.band_centers[b]);
        y.push_back(curve.normalized[b]);
    }
    require(static_cast<int>(f.size()) >= 10, "descriptor-failure",
            "need at least 10 reliable bands");

    auto fit = detail::fit_exponential(f, y);

    IpDescriptors out;
    out.fit_c0 = fit.c0;
    out.fit_c1 = fit.c1;
    out.fit_c2 = fit.c2;
    out.fit_cost = fit.cost;
    out.fit_iterations = fit.iterations;
    out.asymptote_level = fit.c0;

    const double f_lo = curve.band_centers.front();
    const double f_hi = curve.band_centers.back();
    auto model = [&](double x) { return fit.c0 + fit.c1 * std::exp(-fit.c2 * x); };

    // Smallest frequency in the band range where the fitted curve equals 1.
    const double y_lo = model(f_lo), y_hi = model(f_hi);
    if (std::abs(fit.c1) < 1e-12 || fit.c2 == 0.0) {
        if (std::abs(y_lo - 1.0) < 1e-9) out.crossover_hz = f_lo;
    } else if ((y_lo - 1.0) * (y_hi - 1.0) <= 0.0) {
        double ratio = fit.c1 / (1.0 - fit.c0);
        if (ratio > 0.0) {
            double fx = std::log(ratio) / fit.c2;
            if (fx >= f_lo - 1e-12 && fx <= f_hi + 1e-12)
                out.crossover_hz = std::clamp(fx, f_lo, f_hi);
        }
    }

    out.hfa_slope = -fit.c1 * fit.c2 * std::exp(-fit.c2 * f_hi);

    // Raw crossing by linear interpolation between adjacent reliable bands.
    for (std::size_t i = 0; i + 1 < f.size(); ++i) {
        if ((y[i] - 1.0) == 0.0) {
            out.raw_crossover_hz = f[i];
            break;
        }
        if ((y[i] - 1.0) * (y[i + 1] - 1.0) < 0.0) {
            double t = (1.0 - y[i]) / (y[i + 1] - y[i]);
            out.raw_crossover_hz = f[i] + t * (f[i + 1] - f[i]);
            break;
        }
    }
    if (!out.raw_crossover_hz && !f.empty() && y.back() == 1.0)
        out.raw_crossover_hz = f.back();

    // Secondary linear-tail estimate over the top 15 bands.
    int tail = std::min<std::size_t>(15, f.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = f.size() - tail; i < f.size(); ++i) {
        sx += f[i];
        sy += y[i];
        sxx += f[i] * f[i];
        sxy += f[i] * y[i];
    }
    double denom = tail * sxx - sx * sx;
    if (denom > 0.0) out.hfa_slope_linear = (tail * sxy - sx * sy) / denom;

    return out;
}

} // namespace iplab
