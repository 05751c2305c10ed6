#pragma once

// Forward parametric signal models (injection pulse, wrapped-normal
// mixtures, accumulation saturation) and the trace preprocessing steps:
// backward-difference derivative, steady-state normalization, reference
// subtraction, and the transient/accumulation phase split.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ringchan/channel.hpp"

namespace ringchan {

enum class TraceKind { raw, dist, acc };

inline std::string to_string(TraceKind k) {
    switch (k) {
        case TraceKind::raw: return "raw";
        case TraceKind::dist: return "dist";
        case TraceKind::acc: return "acc";
    }
    return "raw";
}

inline TraceKind trace_kind_from_string(const std::string& s) {
    if (s == "raw") return TraceKind::raw;
    if (s == "dist") return TraceKind::dist;
    if (s == "acc") return TraceKind::acc;
    throw std::invalid_argument("unknown trace kind: " + s);
}

struct TraceMeta {
    int egg = 0;
    int roi = 0;
    int ded = 0;          // day of egg development
    double d_inj = 0.0;   // m, injection distance
    TraceKind kind = TraceKind::raw;
    std::map<std::string, std::string> extra;  // unknown keys, preserved on round trip
};

/// Uniformly sampled intensity time series. Sample i is at time i*dt.
struct IntensityTrace {
    double dt = 0.0;
    std::vector<double> samples;
    TraceMeta meta;

    std::size_t size() const { return samples.size(); }
    double duration() const { return dt * static_cast<double>(samples.size() - 1); }
    double time(std::size_t i) const { return dt * static_cast<double>(i); }

    void validate() const {
        if (!(dt > 0.0)) throw std::invalid_argument("IntensityTrace: dt must be > 0");
        if (samples.size() < 2) throw std::invalid_argument("IntensityTrace: need >= 2 samples");
    }
};

/// Raised-cosine injection pulse {t_w, t_0}.
struct InjectionParams {
    double t_w;  // s, injection duration
    double t_0;  // s, injection start

    InjectionParams(double t_w_, double t_0_) : t_w(t_w_), t_0(t_0_) {
        if (!(t_w > 0.0)) throw std::invalid_argument("InjectionParams: t_w must be > 0");
        if (!(t_0 >= 0.0)) throw std::invalid_argument("InjectionParams: t_0 must be >= 0");
    }
};

/// Weighted superposition of ring channels. Weights lie on the simplex.
struct MixtureParams {
    struct Component {
        double weight;
        ChannelParams channel;
    };
    std::vector<Component> components;

    explicit MixtureParams(std::vector<Component> comps) : components(std::move(comps)) {
        if (components.empty()) throw std::invalid_argument("MixtureParams: need >= 1 component");
        double sum = 0.0;
        for (const auto& c : components) {
            if (!(c.weight >= 0.0 && c.weight <= 1.0))
                throw std::invalid_argument("MixtureParams: weight must be in [0, 1]");
            sum += c.weight;
        }
        if (std::abs(sum - 1.0) > 1e-9)
            throw std::invalid_argument("MixtureParams: weights must sum to 1");
    }
};

/// Saturating accumulation model 1 - a*exp(-b*t).
struct AccumulationParams {
    double a;  // dimensionless, in (0, 1]
    double b;  // 1/s

    AccumulationParams(double a_, double b_) : a(a_), b(b_) {
        if (!(a > 0.0 && a <= 1.0)) throw std::invalid_argument("AccumulationParams: a must be in (0, 1]");
        if (!(b > 0.0)) throw std::invalid_argument("AccumulationParams: b must be > 0");
    }
};

/// Injection rate at time t: (1/t_w)(1 - cos(2*pi*(t - t_0)/t_w)) on the
/// pulse support, zero elsewhere. Unit mass.
inline double injection_profile(const InjectionParams& p, double t) {
    if (t <= p.t_0 || t >= p.t_0 + p.t_w) return 0.0;
    return (1.0 - std::cos(two_pi * (t - p.t_0) / p.t_w)) / p.t_w;
}

/// Backward difference with zero prehistory; same grid as the input.
inline IntensityTrace derivative(const IntensityTrace& trace) {
    trace.validate();
    IntensityTrace out;
    out.dt = trace.dt;
    out.meta = trace.meta;
    out.samples.resize(trace.samples.size());
    double prev = 0.0;
    for (std::size_t i = 0; i < trace.samples.size(); ++i) {
        out.samples[i] = (trace.samples[i] - prev) / trace.dt;
        prev = trace.samples[i];
    }
    return out;
}

/// Divides by the mean of the final tail_fraction of samples.
inline IntensityTrace normalize_steady(const IntensityTrace& trace, double tail_fraction = 0.2) {
    trace.validate();
    if (!(tail_fraction > 0.0 && tail_fraction <= 0.5))
        throw std::invalid_argument("normalize_steady: tail_fraction must be in (0, 0.5]");
    const std::size_t n = trace.samples.size();
    std::size_t tail = static_cast<std::size_t>(std::ceil(tail_fraction * static_cast<double>(n)));
    tail = std::max<std::size_t>(tail, 1);
    const double mean =
        std::accumulate(trace.samples.end() - static_cast<std::ptrdiff_t>(tail),
                        trace.samples.end(), 0.0) /
        static_cast<double>(tail);
    if (!(mean > 0.0)) throw std::runtime_error("normalize_steady: steady-state tail mean <= 0");
    IntensityTrace out = trace;
    for (auto& s : out.samples) s /= mean;
    return out;
}

/// Pointwise difference, clamped at zero from below.
inline IntensityTrace subtract_reference(const IntensityTrace& trace,
                                         const IntensityTrace& reference) {
    trace.validate();
    reference.validate();
    if (trace.dt != reference.dt || trace.samples.size() != reference.samples.size())
        throw std::invalid_argument("subtract_reference: grid mismatch");
    IntensityTrace out = trace;
    for (std::size_t i = 0; i < out.samples.size(); ++i)
        out.samples[i] = std::max(0.0, trace.samples[i] - reference.samples[i]);
    return out;
}

struct PhaseSplit {
    IntensityTrace dist;
    IntensityTrace acc;
};

/// Splits at t_acc: samples with t <= t_acc belong to the distribution
/// phase, the rest to the accumulation phase. The accumulation segment is
/// re-based to t = 0.
inline PhaseSplit split_phases(const IntensityTrace& trace, double t_acc) {
    trace.validate();
    if (!(t_acc > 0.0 && t_acc < trace.duration()))
        throw std::invalid_argument("split_phases: t_acc out of range");
    const std::size_t n_dist =
        static_cast<std::size_t>(std::floor(t_acc / trace.dt + 1e-9)) + 1;
    PhaseSplit out;
    out.dist.dt = trace.dt;
    out.dist.meta = trace.meta;
    out.dist.meta.kind = TraceKind::dist;
    out.dist.samples.assign(trace.samples.begin(),
                            trace.samples.begin() + static_cast<std::ptrdiff_t>(n_dist));
    out.acc.dt = trace.dt;
    out.acc.meta = trace.meta;
    out.acc.meta.kind = TraceKind::acc;
    out.acc.samples.assign(trace.samples.begin() + static_cast<std::ptrdiff_t>(n_dist),
                           trace.samples.end());
    return out;
}

/// Forward model for the transient and steady-state phases: injection
/// pulse convolved with the weighted wrapped-normal kernels, evaluated at
/// each component's receiver position, then steady-state normalized.
/// The kernel's t = 0 sample uses t = dt/2 to sidestep the release delta.
inline IntensityTrace model_dist(const MixtureParams& p, const InjectionParams& inj,
                                 double dt, std::size_t n_samples) {
    if (!(dt > 0.0)) throw std::invalid_argument("model_dist: dt must be > 0");
    if (n_samples < 2) throw std::invalid_argument("model_dist: need >= 2 samples");

    std::vector<double> kernel(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) {
        const double t = (i == 0) ? dt / 2.0 : dt * static_cast<double>(i);
        double v = 0.0;
        for (const auto& c : p.components)
            v += c.weight * wrapped_concentration(c.channel, c.channel.d_rx, t);
        kernel[i] = v;
    }

    std::vector<double> pulse(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i)
        pulse[i] = injection_profile(inj, dt * static_cast<double>(i));

    IntensityTrace out;
    out.dt = dt;
    out.meta.kind = TraceKind::dist;
    out.samples.resize(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j <= i; ++j) acc += pulse[j] * kernel[i - j];
        out.samples[i] = acc * dt;
    }
    return normalize_steady(out);
}

/// Accumulation model 1 - a*exp(-b*t) on a uniform grid.
inline IntensityTrace model_acc(const AccumulationParams& p, double dt, std::size_t n_samples) {
    if (!(dt > 0.0)) throw std::invalid_argument("model_acc: dt must be > 0");
    if (n_samples < 2) throw std::invalid_argument("model_acc: need >= 2 samples");
    IntensityTrace out;
    out.dt = dt;
    out.meta.kind = TraceKind::acc;
    out.samples.resize(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i)
        out.samples[i] = 1.0 - p.a * std::exp(-p.b * dt * static_cast<double>(i));
    return out;
}

}  // namespace ringchan
