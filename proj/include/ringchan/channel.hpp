#pragma once

// Closed-form transport solutions for a dispersive ring channel: the
// free-space Gaussian, its wrapped counterpart on the loop, peak-time
// prediction for repeated passes, and the Aris-Taylor effective
// diffusion coefficient.

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace ringchan {

inline constexpr double two_pi = 6.283185307179586476925287;

/// Physical parameter set of one ring channel: effective diffusion,
/// effective flow velocity, loop circumference, and the receiver's
/// arc-distance from the release point. All SI.
struct ChannelParams {
    double d_eff;  // m^2/s
    double v_eff;  // m/s
    double l_eff;  // m
    double d_rx;   // m

    ChannelParams(double d_eff_, double v_eff_, double l_eff_, double d_rx_)
        : d_eff(d_eff_), v_eff(v_eff_), l_eff(l_eff_), d_rx(d_rx_) {
        // Canonical orientation: flow in +x. A negative velocity is the
        // mirror image of the same ring.
        if (v_eff < 0.0) {
            v_eff = -v_eff;
            d_rx = l_eff - d_rx;
        }
        if (!(d_eff > 0.0)) throw std::invalid_argument("ChannelParams: d_eff must be > 0");
        if (!(l_eff > 0.0)) throw std::invalid_argument("ChannelParams: l_eff must be > 0");
        if (!(d_rx >= 0.0 && d_rx < l_eff))
            throw std::invalid_argument("ChannelParams: d_rx must be in [0, l_eff)");
    }
};

/// Inputs for the effective-dispersion computation.
struct DispersionInputs {
    double d_molecular;  // m^2/s
    double r0;           // m
    double v_eff;        // m/s
};

/// Aris-Taylor effective diffusion: D_eff = D * (1 + (r0*v/D)^2 / 48).
inline double dispersion_coefficient(const DispersionInputs& d) {
    if (!(d.d_molecular > 0.0 && d.r0 > 0.0 && d.v_eff > 0.0))
        throw std::domain_error("dispersion_coefficient: inputs must be strictly positive");
    const double peclet = d.r0 * d.v_eff / d.d_molecular;
    return d.d_molecular * (1.0 + peclet * peclet / 48.0);
}

/// Free-space solution: Gaussian with mean v_eff*t and variance 2*D_eff*t.
/// Release is instantaneous at x = 0, t = 0; t <= 0 is rejected.
inline double normal_concentration(const ChannelParams& q, double x, double t) {
    if (!(t > 0.0)) throw std::domain_error("normal_concentration: t must be > 0");
    const double var = 2.0 * q.d_eff * t;
    const double dx = x - q.v_eff * t;
    return std::exp(-dx * dx / (2.0 * var)) / std::sqrt(two_pi * var);
}

/// Wrapped-normal solution on the ring, truncated adaptively so the
/// omitted tail is below `tol` relative to the partial sum.
inline double wrapped_concentration(const ChannelParams& q, double x, double t,
                                    double tol = 1e-12) {
    if (!(t > 0.0)) throw std::domain_error("wrapped_concentration: t must be > 0");
    if (!(x >= 0.0 && x <= q.l_eff))
        throw std::domain_error("wrapped_concentration: x must be in [0, l_eff]");
    if (!(tol > 0.0)) throw std::domain_error("wrapped_concentration: tol must be > 0");
    if (x == q.l_eff) x = 0.0;  // the two endpoints are the same ring point

    const double lambda = two_pi / q.l_eff;
    const double sbar = lambda * std::sqrt(2.0 * q.d_eff * t);
    const double inv2s2 = 1.0 / (2.0 * sbar * sbar);

    // Shifting the circular mean by a multiple of 2*pi only relabels k,
    // so reduce the offset first; the sum is then centered at k = 0.
    double theta = std::fmod(lambda * (x - q.v_eff * t), two_pi);
    if (theta > two_pi / 2.0) theta -= two_pi;
    if (theta < -two_pi / 2.0) theta += two_pi;

    const int k0 = static_cast<int>(std::ceil(4.0 * sbar / two_pi)) + 2;
    double sum = 0.0;
    for (int k = -k0; k <= k0; ++k) {
        const double d = theta + two_pi * k;
        sum += std::exp(-d * d * inv2s2);
    }
    for (int k = k0 + 1;; ++k) {
        const double dp = theta + two_pi * k;
        const double dm = theta - two_pi * k;
        const double pair = std::exp(-dp * dp * inv2s2) + std::exp(-dm * dm * inv2s2);
        sum += pair;
        // The pair underflows to exactly zero far from the pulse; without
        // the second test a zero partial sum never satisfies the relative
        // criterion.
        if (pair == 0.0 || pair < tol * sum) break;
    }
    return std::sqrt(two_pi) / (q.l_eff * sbar) * sum;
}

/// The steady-state-normalized ring trace is exactly invariant under the
/// scaling (l_eff, v_eff, d_rx, d_eff) -> (s*l_eff, s*v_eff, s*d_rx,
/// s^2*d_eff): only the ratios v_eff/l_eff, d_rx/l_eff and d_eff/l_eff^2
/// are identifiable from a normalized trace. This maps a parameter set
/// along that flat direction onto a chosen loop length, e.g. to compare
/// two gauge-equivalent fits.
inline ChannelParams rescale_channel(const ChannelParams& q, double l_eff_target) {
    if (!(l_eff_target > 0.0))
        throw std::domain_error("rescale_channel: l_eff_target must be > 0");
    const double s = l_eff_target / q.l_eff;
    return ChannelParams(q.d_eff * s * s, q.v_eff * s, l_eff_target, q.d_rx * s);
}

/// Arrival times of the k-th pass peak at the receiver, k = 0..k_max.
/// Diffusion-only channels (v_eff = 0) are not supported.
inline std::vector<double> peak_times(const ChannelParams& q, int k_max) {
    if (!(q.v_eff > 0.0)) throw std::domain_error("peak_times: v_eff must be > 0");
    if (k_max < 0) throw std::invalid_argument("peak_times: k_max must be >= 0");
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(k_max) + 1);
    const double a = q.d_eff / (q.v_eff * q.v_eff);
    for (int k = 0; k <= k_max; ++k) {
        const double dist = q.d_rx + k * q.l_eff;
        const double r = dist / q.d_eff * q.v_eff;
        out.push_back(a * (-1.0 + std::sqrt(1.0 + r * r)));
    }
    return out;
}

}  // namespace ringchan
