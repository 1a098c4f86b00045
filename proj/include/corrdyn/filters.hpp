#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "corrdyn/types.hpp"

namespace corrdyn {

enum class FilterKind { Highpass, Lowpass, Bandstop };

inline const char* to_string(FilterKind k) {
    switch (k) {
        case FilterKind::Highpass: return "highpass";
        case FilterKind::Lowpass: return "lowpass";
        case FilterKind::Bandstop: return "bandstop";
    }
    return "?";
}

/// One second-order section, denominator normalized (a0 = 1).
struct Biquad {
    double b0 = 1.0, b1 = 0.0, b2 = 0.0;
    double a1 = 0.0, a2 = 0.0;

    // Pole radius of z^2 + a1 z + a2.
    double pole_radius() const {
        const double disc = a1 * a1 - 4.0 * a2;
        if (disc < 0.0) return std::sqrt(a2);
        const double r = std::sqrt(disc);
        return std::max(std::abs((-a1 + r) / 2.0), std::abs((-a1 - r) / 2.0));
    }

    bool stable() const { return pole_radius() < 1.0; }

    double dc_gain() const { return (b0 + b1 + b2) / (1.0 + a1 + a2); }
};

/// Butterworth filter as a cascade of biquads at a fixed sampling rate.
struct FilterSpec {
    FilterKind kind = FilterKind::Lowpass;
    double cutoff_lo_hz = 0.0;  // single cutoff for lowpass/highpass
    double cutoff_hi_hz = 0.0;  // upper band edge for bandstop
    int order = 0;
    double fs = 0.0;
    std::vector<Biquad> sections;

    void validate() const {
        require(fs > 0.0, "FilterSpec: fs must be positive");
        require(order >= 2 && order % 2 == 0, strfmt("FilterSpec: order %d must be even and >= 2", order));
        require(cutoff_lo_hz > 0.0 && cutoff_lo_hz < fs / 2.0,
                strfmt("FilterSpec: cutoff %g Hz outside (0, Nyquist)", cutoff_lo_hz));
        if (kind == FilterKind::Bandstop)
            require(cutoff_hi_hz > cutoff_lo_hz && cutoff_hi_hz < fs / 2.0,
                    "FilterSpec: bandstop needs cutoff_lo < cutoff_hi < Nyquist");
        for (const auto& s : sections) require(s.stable(), "FilterSpec: unstable section");
    }

    /// Single-pass complex response at frequency f.
    std::complex<double> response(double f_hz) const {
        const std::complex<double> z = std::polar(1.0, -2.0 * std::numbers::pi * f_hz / fs);
        std::complex<double> h = 1.0;
        for (const auto& s : sections)
            h *= (s.b0 + z * (s.b1 + z * s.b2)) / (1.0 + z * (s.a1 + z * s.a2));
        return h;
    }

    double magnitude_db(double f_hz) const { return 20.0 * std::log10(std::abs(response(f_hz))); }

    /// Samples until the slowest pole decays by 1/e.
    double time_constant_samples() const {
        double rho = 0.0;
        for (const auto& s : sections) rho = std::max(rho, s.pole_radius());
        if (rho <= 0.0) return 1.0;
        return -1.0 / std::log(rho);
    }
};

namespace detail {

inline int order_from_slope(double slope_db_per_octave) {
    const double per_order = 6.0;
    double n = slope_db_per_octave / per_order;
    require(n > 0.0 && std::abs(n - std::round(n)) < 1e-9,
            strfmt("slope %g dB/octave is not a positive multiple of 6", slope_db_per_octave));
    const int order = static_cast<int>(std::lround(n));
    require(order % 2 == 0 && order >= 2, strfmt("slope %g dB/octave maps to odd order %d; cascade uses even orders",
                                                 slope_db_per_octave, order));
    return order;
}

// Conjugate-pair quality factors of the order-n Butterworth prototype.
inline std::vector<double> butterworth_pair_q(int order) {
    std::vector<double> q;
    for (int k = 0; k < order / 2; ++k) {
        const double theta = std::numbers::pi * (2.0 * k + 1.0) / (2.0 * order);
        q.push_back(1.0 / (2.0 * std::cos(theta)));
    }
    return q;
}

inline Biquad biquad_from_pole_pair(std::complex<double> p1, std::complex<double> p2, double cos_w0) {
    Biquad s;
    s.a1 = -(p1 + p2).real();
    s.a2 = (p1 * p2).real();
    const double g = (1.0 + s.a1 + s.a2) / (2.0 - 2.0 * cos_w0);
    s.b0 = g;
    s.b1 = -2.0 * cos_w0 * g;
    s.b2 = g;
    return s;
}

}  // namespace detail

/// Lowpass/highpass Butterworth with asymptotic single-pass slope = 6 dB/octave per order.
inline FilterSpec design_butterworth(FilterKind kind, double cutoff_hz, double slope_db_per_octave, double fs) {
    require(kind != FilterKind::Bandstop, "design_butterworth: use design_bandstop for band-stop filters");
    require(fs > 0.0, "design_butterworth: fs must be positive");
    require(cutoff_hz > 0.0 && cutoff_hz < fs / 2.0,
            strfmt("design_butterworth: cutoff %g Hz outside (0, %g)", cutoff_hz, fs / 2.0));
    FilterSpec spec;
    spec.kind = kind;
    spec.cutoff_lo_hz = spec.cutoff_hi_hz = cutoff_hz;
    spec.order = detail::order_from_slope(slope_db_per_octave);
    spec.fs = fs;

    const double K = std::tan(std::numbers::pi * cutoff_hz / fs);
    for (double q : detail::butterworth_pair_q(spec.order)) {
        const double norm = 1.0 / (1.0 + K / q + K * K);
        Biquad s;
        if (kind == FilterKind::Lowpass) {
            s.b0 = K * K * norm;
            s.b1 = 2.0 * s.b0;
            s.b2 = s.b0;
        } else {
            s.b0 = norm;
            s.b1 = -2.0 * norm;
            s.b2 = norm;
        }
        s.a1 = 2.0 * (K * K - 1.0) * norm;
        s.a2 = (1.0 - K / q + K * K) * norm;
        spec.sections.push_back(s);
    }
    spec.validate();
    return spec;
}

/// Band-stop Butterworth; total order = slope/6 (twice the lowpass prototype order).
inline FilterSpec design_bandstop(double lo_hz, double hi_hz, double slope_db_per_octave, double fs) {
    require(fs > 0.0, "design_bandstop: fs must be positive");
    require(lo_hz > 0.0 && hi_hz > lo_hz && hi_hz < fs / 2.0, "design_bandstop: need 0 < lo < hi < Nyquist");
    FilterSpec spec;
    spec.kind = FilterKind::Bandstop;
    spec.cutoff_lo_hz = lo_hz;
    spec.cutoff_hi_hz = hi_hz;
    spec.order = detail::order_from_slope(slope_db_per_octave);
    spec.fs = fs;
    const int proto_order = spec.order / 2;

    const double w1 = std::tan(std::numbers::pi * lo_hz / fs);
    const double w2 = std::tan(std::numbers::pi * hi_hz / fs);
    const double w0_sq = w1 * w2;
    const double bw = w2 - w1;
    const double w0_dig = 2.0 * std::atan(std::sqrt(w0_sq));
    const double cos_w0 = std::cos(w0_dig);

    auto bandstop_poles = [&](std::complex<double> q) {
        // s_lp = bw*s / (s^2 + w0^2) evaluated at prototype pole q.
        const std::complex<double> disc = std::sqrt(bw * bw - 4.0 * q * q * w0_sq);
        return std::pair{(bw + disc) / (2.0 * q), (bw - disc) / (2.0 * q)};
    };
    auto bilinear = [](std::complex<double> s) { return (1.0 + s) / (1.0 - s); };

    for (int k = 0; k < proto_order; ++k) {
        const double ang = std::numbers::pi * (2.0 * k + proto_order + 1.0) / (2.0 * proto_order);
        const std::complex<double> q(std::cos(ang), std::sin(ang));
        if (q.imag() < -1e-12) continue;  // conjugates handled with their partner
        auto [s1, s2] = bandstop_poles(q);
        if (std::abs(q.imag()) <= 1e-12) {
            // real prototype pole: the two band-stop poles form one section
            spec.sections.push_back(detail::biquad_from_pole_pair(bilinear(s1), bilinear(s2), cos_w0));
        } else {
            spec.sections.push_back(detail::biquad_from_pole_pair(bilinear(s1), std::conj(bilinear(s1)), cos_w0));
            spec.sections.push_back(detail::biquad_from_pole_pair(bilinear(s2), std::conj(bilinear(s2)), cos_w0));
        }
    }
    spec.validate();
    return spec;
}

/// 50/60 Hz style notch: order-4 band-stop centered at center_hz.
inline FilterSpec design_notch(double center_hz, double bandwidth_hz, double fs) {
    require(bandwidth_hz > 0.0, "design_notch: bandwidth must be positive");
    return design_bandstop(center_hz - bandwidth_hz / 2.0, center_hz + bandwidth_hz / 2.0, 24.0, fs);
}

namespace detail {

// Transposed direct form II with steady-state initial conditions for input x0.
struct BiquadState {
    double s1 = 0.0, s2 = 0.0;

    void prime(const Biquad& c, double x0, double y0) {
        s1 = y0 - c.b0 * x0;
        s2 = c.b2 * x0 - c.a2 * y0;
    }

    double step(const Biquad& c, double x) {
        const double y = c.b0 * x + s1;
        s1 = c.b1 * x - c.a1 * y + s2;
        s2 = c.b2 * x - c.a2 * y;
        return y;
    }
};

inline void filter_forward(const FilterSpec& spec, std::vector<double>& x) {
    std::vector<BiquadState> state(spec.sections.size());
    double x0 = x.empty() ? 0.0 : x.front();
    for (std::size_t k = 0; k < spec.sections.size(); ++k) {
        const double y0 = spec.sections[k].dc_gain() * x0;
        state[k].prime(spec.sections[k], x0, y0);
        x0 = y0;
    }
    for (double& v : x)
        for (std::size_t k = 0; k < spec.sections.size(); ++k) v = state[k].step(spec.sections[k], v);
}

inline std::vector<double> filtfilt_channel(const FilterSpec& spec, std::span<const double> x) {
    const std::size_t n = x.size();
    if (n == 0) return {};
    const std::size_t pad =
        std::min<std::size_t>(n - 1, static_cast<std::size_t>(std::ceil(3.0 * spec.time_constant_samples())));

    // odd reflection about both end points
    std::vector<double> buf;
    buf.reserve(n + 2 * pad);
    for (std::size_t i = 0; i < pad; ++i) buf.push_back(2.0 * x[0] - x[pad - i]);
    buf.insert(buf.end(), x.begin(), x.end());
    for (std::size_t i = 0; i < pad; ++i) buf.push_back(2.0 * x[n - 1] - x[n - 2 - i]);

    filter_forward(spec, buf);
    std::reverse(buf.begin(), buf.end());
    filter_forward(spec, buf);
    std::reverse(buf.begin(), buf.end());
    return std::vector<double>(buf.begin() + static_cast<std::ptrdiff_t>(pad),
                               buf.begin() + static_cast<std::ptrdiff_t>(pad + n));
}

}  // namespace detail

/// Forward-backward filtering: zero phase, magnitude |H|^2, output shape = input shape.
inline Recording filter_zero_phase(const Recording& rec, const FilterSpec& spec) {
    require(rec.fs == spec.fs, strfmt("filter_zero_phase: recording fs %g != filter fs %g", rec.fs, spec.fs));
    require(rec.data.allFinite(), "filter_zero_phase: non-finite samples");
    Recording out = rec;
    const auto n = static_cast<std::size_t>(rec.n_samples());
    std::vector<double> channel(n);
    for (Eigen::Index c = 0; c < rec.n_channels(); ++c) {
        for (std::size_t i = 0; i < n; ++i) channel[i] = rec.data(c, static_cast<Eigen::Index>(i));
        auto filtered = detail::filtfilt_channel(spec, channel);
        for (std::size_t i = 0; i < n; ++i) out.data(c, static_cast<Eigen::Index>(i)) = filtered[i];
    }
    return out;
}

/// Single-pass impulse response, for decay diagnostics.
inline std::vector<double> impulse_response(const FilterSpec& spec, std::size_t n) {
    std::vector<double> x(n, 0.0);
    if (!x.empty()) x[0] = 1.0;
    std::vector<detail::BiquadState> state(spec.sections.size());
    for (double& v : x)
        for (std::size_t k = 0; k < spec.sections.size(); ++k) v = state[k].step(spec.sections[k], v);
    return x;
}

}  // namespace corrdyn
