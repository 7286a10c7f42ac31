#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "iplab/core.hpp"

namespace iplab {

/// 95% covariance ellipse of paired samples (chi-square scaling, 2 DOF).
struct EllipseMetrics {
    double area = 0.0;        // input-unit^2
    double semi_major = 0.0;
    double semi_minor = 0.0;
    double orientation = 0.0;  // rad, major axis vs +x, in (-pi/2, pi/2]
    double mean_x = 0.0;
    double mean_y = 0.0;
};

inline constexpr double kChi2P95Dof2 = 5.991464547107980;  // -2 ln 0.05

inline EllipseMetrics ellipse_95(std::span<const double> x, std::span<const double> y) {
    require(x.size() == y.size(), "invalid-signal", "paired series lengths differ");
    const std::size_t n = x.size();
    require(n >= 30, "invalid-signal", "ellipse needs at least 30 paired samples");

    EllipseMetrics out;
    for (std::size_t k = 0; k < n; ++k) {
        out.mean_x += x[k];
        out.mean_y += y[k];
    }
    out.mean_x /= n;
    out.mean_y /= n;

    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        double dx = x[k] - out.mean_x, dy = y[k] - out.mean_y;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    sxx /= (n - 1);
    syy /= (n - 1);
    sxy /= (n - 1);

    double tr = sxx + syy;
    double det = sxx * syy - sxy * sxy;
    double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
    double l1 = tr / 2.0 + disc, l2 = tr / 2.0 - disc;
    require(l2 > 0.0 && det > 0.0, "degenerate-ellipse",
            "sample covariance is singular");

    out.semi_major = std::sqrt(kChi2P95Dof2 * l1);
    out.semi_minor = std::sqrt(kChi2P95Dof2 * l2);
    out.area = M_PI * kChi2P95Dof2 * std::sqrt(det);
    out.orientation = 0.5 * std::atan2(2.0 * sxy, sxx - syy);
    return out;
}

/// Fraction of the samples falling inside their own fitted 95% ellipse.
inline double ellipse_coverage(std::span<const double> x, std::span<const double> y) {
    auto e = ellipse_95(x, y);
    double c = std::cos(e.orientation), s = std::sin(e.orientation);
    std::size_t inside = 0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        double dx = x[k] - e.mean_x, dy = y[k] - e.mean_y;
        double u = (c * dx + s * dy) / e.semi_major;
        double v = (-s * dx + c * dy) / e.semi_minor;
        if (u * u + v * v <= 1.0) ++inside;
    }
    return static_cast<double>(inside) / x.size();
}

namespace detail {

// Regularized incomplete beta function I_x(a, b) via the continued fraction.
inline double betacf(double a, double b, double x) {
    const int max_it = 300;
    const double eps = 1e-15, fpmin = 1e-300;
    double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::abs(d) < fpmin) d = fpmin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_it; ++m) {
        int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::abs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::abs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < eps) break;
    }
    return h;
}

inline double incbeta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                      a * std::log(x) + b * std::log1p(-x);
    double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

} // namespace detail

struct AnovaResult {
    double f_stat = 0.0;
    int dof_between = 0;
    int dof_within = 0;
    double p_value = 1.0;
    std::vector<double> group_means;
    bool degenerate = false;  // zero within-group variance with unequal means
};

inline AnovaResult anova_oneway(const std::vector<std::vector<double>>& groups) {
    require(groups.size() >= 2, "invalid-anova", "need at least 2 groups");
    for (const auto& g : groups)
        require(g.size() >= 2, "invalid-anova", "each group needs at least 2 samples");

    AnovaResult out;
    std::size_t total_n = 0;
    double grand = 0.0;
    for (const auto& g : groups) {
        double mean = 0.0;
        for (double v : g) mean += v;
        mean /= g.size();
        out.group_means.push_back(mean);
        grand += mean * g.size();
        total_n += g.size();
    }
    grand /= total_n;

    double ssb = 0.0, ssw = 0.0;
    for (std::size_t i = 0; i < groups.size(); ++i) {
        ssb += groups[i].size() * (out.group_means[i] - grand) * (out.group_means[i] - grand);
        for (double v : groups[i]) ssw += (v - out.group_means[i]) * (v - out.group_means[i]);
    }
    out.dof_between = static_cast<int>(groups.size()) - 1;
    out.dof_within = static_cast<int>(total_n - groups.size());

    if (ssw == 0.0) {
        if (ssb == 0.0) {
            out.f_stat = 0.0;
            out.p_value = 1.0;
        } else {
            out.f_stat = std::numeric_limits<double>::infinity();
            out.p_value = 0.0;
            out.degenerate = true;
        }
        return out;
    }
    out.f_stat = (ssb / out.dof_between) / (ssw / out.dof_within);

    double d1 = out.dof_between, d2 = out.dof_within;
    out.p_value = detail::incbeta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * out.f_stat));
    return out;
}

// ---------------------------------------------------------------------------
// Welding-image scoring

struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;  // packed rgb

    std::array<std::uint8_t, 3> pixel(int idx) const {
        return {data[3 * idx], data[3 * idx + 1], data[3 * idx + 2]};
    }
    int pixels() const { return width * height; }
};

/// Binary P6 portable pixmap reader (8-bit, dependency free, bit exact).
inline RgbImage read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "input-missing", "cannot open image: " + path);

    auto next_token = [&in, &path]() {
        std::string tok;
        int c;
        while ((c = in.get()) != EOF) {
            if (c == '#') {
                while ((c = in.get()) != EOF && c != '\n') {
                }
                continue;
            }
            if (std::isspace(c)) {
                if (!tok.empty()) break;
                continue;
            }
            tok.push_back(static_cast<char>(c));
        }
        require(!tok.empty(), "malformed-image", "truncated PPM header in " + path);
        return tok;
    };

    require(next_token() == "P6", "malformed-image", "not a binary P6 PPM: " + path);
    RgbImage img;
    img.width = std::stoi(next_token());
    img.height = std::stoi(next_token());
    int maxval = std::stoi(next_token());
    require(img.width > 0 && img.height > 0, "malformed-image", "bad PPM dimensions");
    require(maxval == 255, "malformed-image", "only 8-bit PPM supported");

    img.data.resize(static_cast<std::size_t>(img.pixels()) * 3);
    in.read(reinterpret_cast<char*>(img.data.data()),
            static_cast<std::streamsize>(img.data.size()));
    require(in.gcount() == static_cast<std::streamsize>(img.data.size()),
            "malformed-image", "truncated PPM pixel data in " + path);
    return img;
}

/// Exact-match class palette for weld masks.
struct WeldPalette {
    std::array<std::uint8_t, 3> target_welded{};
    std::array<std::uint8_t, 3> outside_weld{};
    std::array<std::uint8_t, 3> unfinished{};
    std::array<std::uint8_t, 3> workpiece_background{};
    std::array<std::uint8_t, 3> non_workpiece{};
};

enum class PrecisionDenominator { WeldedArea, WorkpieceArea };

struct WeldScore {
    long a_t = 0;   // correctly welded pixels
    long a_o = 0;   // weld outside the target
    long a_u = 0;   // unfinished target pixels
    long a_wp = 0;  // full workpiece region
    long a_bg = 0;  // workpiece pixels neither welded nor unfinished
    long a_nw = 0;  // pixels outside the workpiece
    double accuracy = 0.0;
    double precision = 0.0;
    double completion = 0.0;  // percent
    bool precision_defined = true;
};

inline WeldScore weld_score(const RgbImage& image, const WeldPalette& palette,
                            PrecisionDenominator denom = PrecisionDenominator::WeldedArea) {
    WeldScore s;
    std::map<std::array<std::uint8_t, 3>, long> unknown;
    for (int i = 0; i < image.pixels(); ++i) {
        auto px = image.pixel(i);
        if (px == palette.target_welded)
            ++s.a_t;
        else if (px == palette.outside_weld)
            ++s.a_o;
        else if (px == palette.unfinished)
            ++s.a_u;
        else if (px == palette.workpiece_background)
            ++s.a_bg;
        else if (px == palette.non_workpiece)
            ++s.a_nw;
        else
            ++unknown[px];
    }
    if (!unknown.empty()) {
        std::ostringstream msg;
        msg << "unmapped pixel colors:";
        for (const auto& [rgb, count] : unknown)
            msg << " (" << int(rgb[0]) << "," << int(rgb[1]) << "," << int(rgb[2]) << ")x"
                << count;
        throw Error("unmapped-color", msg.str());
    }

    s.a_wp = s.a_t + s.a_u + s.a_bg;
    require(s.a_wp > 0, "degenerate-mask", "no workpiece pixels in the mask");
    s.accuracy = static_cast<double>(s.a_t) / s.a_wp;
    s.completion = 100.0 * static_cast<double>(s.a_wp - s.a_u) / s.a_wp;

    long welded = s.a_t + s.a_o;
    if (denom == PrecisionDenominator::WeldedArea) {
        if (welded == 0) {
            s.precision = 0.0;
            s.precision_defined = false;
        } else {
            s.precision = static_cast<double>(s.a_o) / welded;
        }
    } else {
        s.precision = static_cast<double>(s.a_o) / s.a_wp;
    }
    return s;
}

} // namespace iplab
