#pragma once

#include <cmath>
#include <complex>
#include <span>
#include <vector>

#include "iplab/core.hpp"

namespace iplab {

/// Symmetric Hann window: out[k] = in[k] * 0.5 (1 - cos(2 pi k / (N-1))).
inline std::vector<double> hann(std::span<const double> series) {
    const std::size_t n = series.size();
    require(n >= 2, "invalid-signal", "hann window needs at least 2 samples");
    std::vector<double> out(n);
    const double step = 2.0 * M_PI / static_cast<double>(n - 1);
    for (std::size_t k = 0; k < n; ++k)
        out[k] = series[k] * 0.5 * (1.0 - std::cos(step * static_cast<double>(k)));
    return out;
}

/// The 38-band analysis grid: 0.2 Hz wide bands centered 0.5..7.9 Hz.
struct BandSpec {
    std::vector<double> centers;
    double width = 0.2;
    double sample_rate = 100.0;

    static BandSpec standard(double fs = 100.0) {
        BandSpec spec;
        spec.sample_rate = fs;
        spec.centers.resize(38);
        for (int k = 0; k < 38; ++k) spec.centers[k] = 0.5 + 0.2 * k;
        spec.validate();
        return spec;
    }

    void validate() const {
        require(!centers.empty(), "invalid-band-spec", "no band centers");
        require(width > 0.0 && sample_rate > 0.0, "invalid-band-spec",
                "width and sample rate must be > 0");
        for (std::size_t i = 0; i < centers.size(); ++i) {
            require(centers[i] - width / 2 > 0.0, "invalid-band-spec",
                    "band extends to or below 0 Hz");
            require(centers[i] + width / 2 < sample_rate / 2, "invalid-band-spec",
                    "band extends to or beyond Nyquist");
            if (i > 0)
                require(centers[i] - centers[i - 1] >= width - 1e-12, "invalid-band-spec",
                        "bands overlap or are not increasing");
        }
    }
};

struct PsdCurve {
    std::vector<double> frequencies;
    std::vector<double> power;
};

namespace detail {

struct Biquad {
    double b0 = 0, b1 = 0, b2 = 0, a1 = 0, a2 = 0;

    void filter_inplace(std::vector<double>& x) const {
        double s1 = 0.0, s2 = 0.0;  // transposed direct form II
        for (double& v : x) {
            double y = b0 * v + s1;
            s1 = b1 * v - a1 * y + s2;
            s2 = b2 * v - a2 * y;
            v = y;
        }
    }
};

/// 2nd-order Butterworth band-pass per pass (4 poles), designed by band-pass
/// transforming the analog prototype and discretizing with a prewarped
/// bilinear transform. Center gain is normalized to exactly 1.
struct BandpassFilter {
    Biquad s1, s2;
    double time_constant_s = 0.0;  // dominant-pole envelope time constant
    double sample_rate = 0.0;

    static BandpassFilter design(double f_lo, double f_hi, double fs) {
        require(0.0 < f_lo && f_lo < f_hi && f_hi < fs / 2, "invalid-band-spec",
                "band edges must satisfy 0 < lo < hi < fs/2");
        using cd = std::complex<double>;
        const double w_lo = std::tan(M_PI * f_lo / fs);  // prewarped edges
        const double w_hi = std::tan(M_PI * f_hi / fs);
        const double bw = w_hi - w_lo;
        const double w0sq = w_lo * w_hi;

        // Analog prototype poles (order-2 Butterworth), band-pass transformed:
        // s^2 - p bw s + w0^2 = 0 for each prototype pole p.
        const cd proto[2] = {std::polar(1.0, 3.0 * M_PI / 4.0),
                             std::polar(1.0, 5.0 * M_PI / 4.0)};
        cd zpoles[4];
        int idx = 0;
        double max_radius = 0.0;
        for (const cd& p : proto) {
            cd disc = std::sqrt(p * p * bw * bw - 4.0 * w0sq);
            for (cd s : {(p * bw + disc) / 2.0, (p * bw - disc) / 2.0}) {
                cd z = (1.0 + s) / (1.0 - s);  // bilinear map
                require(std::abs(z) < 1.0, "invalid-band-spec",
                        "unstable band-pass design");
                max_radius = std::max(max_radius, std::abs(z));
                zpoles[idx++] = z;
            }
        }

        // Pair complex-conjugate poles into two real sections, numerator
        // (1 - z^-2) each (zeros at +-1 from the two s-plane zeros at 0).
        cd pair_a = zpoles[0];
        cd pair_b;
        int found = -1;
        for (int i = 1; i < 4; ++i) {
            if (std::abs(zpoles[i] - std::conj(pair_a)) < 1e-9) {
                found = i;
                break;
            }
        }
        require(found > 0, "invalid-band-spec", "pole pairing failed");
        pair_b = (found == 1) ? zpoles[2] : zpoles[1];

        BandpassFilter f;
        f.sample_rate = fs;
        auto section = [](cd pole) {
            Biquad s;
            s.b0 = 1.0;
            s.b1 = 0.0;
            s.b2 = -1.0;
            s.a1 = -2.0 * pole.real();
            s.a2 = std::norm(pole);
            return s;
        };
        f.s1 = section(pair_a);
        f.s2 = section(pair_b);

        // Normalize per-pass gain to 1 at the nominal band center.
        const double theta0 = 2.0 * M_PI * (0.5 * (f_lo + f_hi)) / fs;
        cd z = std::polar(1.0, theta0);
        auto gain_at = [&](const Biquad& s) {
            cd zn1 = 1.0 / z, zn2 = zn1 * zn1;
            return (s.b0 + s.b1 * zn1 + s.b2 * zn2) / (1.0 + s.a1 * zn1 + s.a2 * zn2);
        };
        double g = std::abs(gain_at(f.s1) * gain_at(f.s2));
        f.s1.b0 /= g;
        f.s1.b2 /= g;

        f.time_constant_s = -1.0 / (std::log(max_radius) * fs);
        return f;
    }

    void cascade_inplace(std::vector<double>& x) const {
        s1.filter_inplace(x);
        s2.filter_inplace(x);
    }

    /// Bidirectional (zero net phase) application with odd-reflective padding
    /// of three time constants per side. The two pass orders
    /// (forward-backward and backward-forward) differ only in their edge
    /// transients; averaging them makes the operator exactly
    /// reversal-symmetric, so time-reversing the input time-reverses the
    /// output bit for bit.
    std::vector<double> filtfilt(std::span<const double> x) const {
        const std::size_t n = x.size();
        require(n >= 2, "invalid-signal", "series too short to filter");
        std::size_t pad = static_cast<std::size_t>(
            std::ceil(3.0 * time_constant_s * sample_rate));
        pad = std::min(pad, n - 1);

        std::vector<double> work(n + 2 * pad);
        for (std::size_t i = 0; i < pad; ++i)
            work[i] = 2.0 * x[0] - x[pad - i];
        for (std::size_t i = 0; i < n; ++i) work[pad + i] = x[i];
        for (std::size_t i = 0; i < pad; ++i)
            work[pad + n + i] = 2.0 * x[n - 1] - x[n - 2 - i];

        std::vector<double> fb = work;
        cascade_inplace(fb);
        std::reverse(fb.begin(), fb.end());
        cascade_inplace(fb);
        std::reverse(fb.begin(), fb.end());

        std::vector<double> bf = work;
        std::reverse(bf.begin(), bf.end());
        cascade_inplace(bf);
        std::reverse(bf.begin(), bf.end());
        cascade_inplace(bf);

        std::vector<double> out(n);
        for (std::size_t i = 0; i < n; ++i)
            out[i] = 0.5 * (fb[pad + i] + bf[pad + i]);
        return out;
    }
};

} // namespace detail

inline std::vector<double> bandpass_zero_lag(std::span<const double> series, double f_lo,
                                             double f_hi, double fs) {
    return detail::BandpassFilter::design(f_lo, f_hi, fs).filtfilt(series);
}

/// One analysis band: identically filtered COP and GRF-angle channels.
struct BandPair {
    double center_hz = 0.0;
    std::vector<double> cop;
    std::vector<double> q;
};

/// Hann-windows both channels once, then applies the per-band zero-lag
/// filters to each.
inline std::vector<BandPair> band_decompose(std::span<const double> cop,
                                            std::span<const double> q,
                                            const BandSpec& spec) {
    require(cop.size() == q.size(), "invalid-signal",
            "cop and q series must have equal length");
    spec.validate();
    std::vector<double> wc = hann(cop);
    std::vector<double> wq = hann(q);

    std::vector<BandPair> out(spec.centers.size());
    for (std::size_t b = 0; b < spec.centers.size(); ++b) {
        auto filt = detail::BandpassFilter::design(spec.centers[b] - spec.width / 2,
                                                   spec.centers[b] + spec.width / 2,
                                                   spec.sample_rate);
        out[b].center_hz = spec.centers[b];
        out[b].cop = filt.filtfilt(wc);
        out[b].q = filt.filtfilt(wq);
    }
    return out;
}

/// Welch power spectral density: Hann-windowed segments (default 10 s), 50%
/// overlap, one-sided density normalization.
inline PsdCurve psd(std::span<const double> series, double fs,
                    double segment_seconds = 10.0) {
    require(fs > 0.0 && segment_seconds > 0.0, "invalid-signal",
            "psd needs positive rate and segment length");
    const std::size_t nseg = static_cast<std::size_t>(std::llround(segment_seconds * fs));
    require(nseg >= 2 && series.size() >= nseg, "invalid-signal",
            "series shorter than one PSD segment");
    const std::size_t hop = nseg / 2;

    std::vector<double> window(nseg);
    double u = 0.0;
    for (std::size_t k = 0; k < nseg; ++k) {
        window[k] = 0.5 * (1.0 - std::cos(2.0 * M_PI * k / (nseg - 1)));
        u += window[k] * window[k];
    }

    const std::size_t nbins = nseg / 2 + 1;
    PsdCurve curve;
    curve.frequencies.resize(nbins);
    curve.power.assign(nbins, 0.0);
    for (std::size_t k = 0; k < nbins; ++k) curve.frequencies[k] = k * fs / nseg;

    // Direct DFT per segment; segments are ~1000 samples so this stays cheap
    // and keeps Parseval exact.
    std::vector<double> seg(nseg);
    int count = 0;
    for (std::size_t start = 0; start + nseg <= series.size(); start += hop) {
        for (std::size_t k = 0; k < nseg; ++k) seg[k] = series[start + k] * window[k];
        for (std::size_t bin = 0; bin < nbins; ++bin) {
            double re = 0.0, im = 0.0;
            const double w = -2.0 * M_PI * bin / nseg;
            double c = 1.0, s = 0.0;
            const double cw = std::cos(w), sw = std::sin(w);
            for (std::size_t k = 0; k < nseg; ++k) {
                re += seg[k] * c;
                im += seg[k] * s;
                const double cn = c * cw - s * sw;
                s = c * sw + s * cw;
                c = cn;
            }
            double scale = (bin == 0 || (nseg % 2 == 0 && bin == nbins - 1)) ? 1.0 : 2.0;
            curve.power[bin] += scale * (re * re + im * im) / (fs * u);
        }
        ++count;
    }
    for (double& p : curve.power) p /= count;
    return curve;
}

} // namespace iplab
