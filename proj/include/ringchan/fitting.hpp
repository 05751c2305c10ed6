#pragma once

// Bounded nonlinear least squares via multi-start Nelder-Mead. Bounds are
// enforced through a smooth sin^2 mapping onto each parameter interval;
// wide positive ranges (diffusion, velocity, rate) are searched in log
// space. Starts are independent and reduced in (objective, index) order,
// so results do not depend on the thread count.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <thread>
#include <vector>

#include "ringchan/rng.hpp"
#include "ringchan/signal.hpp"

namespace ringchan {

/// One closed search interval; log_scale selects log-uniform start
/// sampling and log-space optimization.
struct Interval {
    double lo;
    double hi;
    bool log_scale = false;
};

struct SearchSpace {
    std::vector<Interval> dims;

    void validate() const {
        if (dims.empty()) throw std::invalid_argument("SearchSpace: empty");
        for (const auto& d : dims) {
            if (!(d.lo < d.hi)) throw std::invalid_argument("SearchSpace: need lo < hi");
            if (d.log_scale && !(d.lo > 0.0))
                throw std::invalid_argument("SearchSpace: log-scale interval needs lo > 0");
        }
    }

    // Bounds bracket every parameter value reported for the biological
    // system; see the README for the rationale.
    static SearchSpace injection_default() {
        return SearchSpace{{{0.1, 30.0, false}, {0.0, 30.0, false}}};
    }
    // Per component: D_eff, v_eff, L_eff, d_rx as a fraction of L_eff;
    // then n-1 stick-breaking weights.
    static SearchSpace dist_default(int n_components) {
        SearchSpace s;
        for (int j = 0; j < n_components; ++j) {
            s.dims.push_back({1e-12, 1e-3, true});  // D_eff, m^2/s
            s.dims.push_back({1e-6, 0.1, true});    // v_eff, m/s
            s.dims.push_back({1e-3, 0.2, false});   // L_eff, m
            s.dims.push_back({1e-4, 1.0, false});   // d_rx / L_eff
        }
        for (int j = 0; j + 1 < n_components; ++j) s.dims.push_back({0.0, 1.0, false});
        return s;
    }
    static SearchSpace acc_default() {
        return SearchSpace{{{1e-3, 1.0, false}, {1e-6, 1.0, true}}};
    }
};

template <typename Params>
struct FitResult {
    Params params;
    double objective = std::numeric_limits<double>::infinity();
    double rmse = std::numeric_limits<double>::infinity();
    std::size_t n_starts = 0;
    bool converged = false;
    bool at_bound = false;
    bool warning_not_normalized = false;
    IntensityTrace model;
};

/// Eq.-faithful root mean square error: divides by N while summing the
/// N+1 residuals i = 0..N.
inline double rmse(const IntensityTrace& measured, const IntensityTrace& modeled) {
    measured.validate();
    modeled.validate();
    if (measured.dt != modeled.dt || measured.samples.size() != modeled.samples.size())
        throw std::invalid_argument("rmse: grid mismatch");
    const std::size_t count = measured.samples.size();  // N + 1 terms
    double ss = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        const double r = measured.samples[i] - modeled.samples[i];
        ss += r * r;
    }
    return std::sqrt(ss / static_cast<double>(count - 1));
}

namespace detail {

// Bounded <-> unbounded coordinate maps. The optimizer works in u-space;
// x = lo + (hi - lo) * sin^2(u) stays inside the interval for any u.
inline double to_internal(double x, const Interval& iv) {
    double lo = iv.lo, hi = iv.hi, v = x;
    if (iv.log_scale) {
        lo = std::log(iv.lo);
        hi = std::log(iv.hi);
        v = std::log(x);
    }
    double f = (v - lo) / (hi - lo);
    f = std::clamp(f, 0.0, 1.0);
    return std::asin(std::sqrt(f));
}

inline double from_internal(double u, const Interval& iv) {
    const double s = std::sin(u);
    const double f = s * s;
    if (iv.log_scale) {
        const double lo = std::log(iv.lo), hi = std::log(iv.hi);
        return std::exp(lo + (hi - lo) * f);
    }
    return iv.lo + (iv.hi - iv.lo) * f;
}

inline std::vector<double> decode(const std::vector<double>& u, const SearchSpace& space) {
    std::vector<double> x(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) x[i] = from_internal(u[i], space.dims[i]);
    return x;
}

struct NmOptions {
    std::size_t max_iter = 0;  // 0 selects 250 * dim
    double tol = 1e-10;
};

struct NmOutcome {
    std::vector<double> u;
    double value = std::numeric_limits<double>::infinity();
    bool converged = false;
};

// Plain Nelder-Mead on the unbounded internal coordinates.
inline NmOutcome nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                             std::vector<double> u0, const NmOptions& opt = {}) {
    const std::size_t d = u0.size();
    const std::size_t max_iter = opt.max_iter ? opt.max_iter : 250 * d;
    std::vector<std::vector<double>> simplex(d + 1, u0);
    for (std::size_t i = 0; i < d; ++i) simplex[i + 1][i] += 0.1;
    std::vector<double> fv(d + 1);
    for (std::size_t i = 0; i <= d; ++i) fv[i] = f(simplex[i]);

    std::vector<std::size_t> order(d + 1);
    NmOutcome out;
    for (std::size_t iter = 0; iter < max_iter; ++iter) {
        for (std::size_t i = 0; i <= d; ++i) order[i] = i;
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
        const std::size_t best = order[0], worst = order[d], second = order[d - 1];
        const double spread = std::abs(fv[worst] - fv[best]);
        if (spread <= opt.tol * (std::abs(fv[best]) + opt.tol)) {
            out.converged = true;
            break;
        }

        std::vector<double> centroid(d, 0.0);
        for (std::size_t i = 0; i <= d; ++i) {
            if (i == worst) continue;
            for (std::size_t k = 0; k < d; ++k) centroid[k] += simplex[i][k];
        }
        for (auto& c : centroid) c /= static_cast<double>(d);

        auto blend = [&](double coef) {
            std::vector<double> p(d);
            for (std::size_t k = 0; k < d; ++k)
                p[k] = centroid[k] + coef * (simplex[worst][k] - centroid[k]);
            return p;
        };

        auto refl = blend(-1.0);
        const double fr = f(refl);
        if (fr < fv[best]) {
            auto exp_pt = blend(-2.0);
            const double fe = f(exp_pt);
            if (fe < fr) {
                simplex[worst] = std::move(exp_pt);
                fv[worst] = fe;
            } else {
                simplex[worst] = std::move(refl);
                fv[worst] = fr;
            }
        } else if (fr < fv[second]) {
            simplex[worst] = std::move(refl);
            fv[worst] = fr;
        } else {
            auto con = blend(fr < fv[worst] ? -0.5 : 0.5);
            const double fc = f(con);
            if (fc < std::min(fr, fv[worst])) {
                simplex[worst] = std::move(con);
                fv[worst] = fc;
            } else {
                for (std::size_t i = 0; i <= d; ++i) {
                    if (i == best) continue;
                    for (std::size_t k = 0; k < d; ++k)
                        simplex[i][k] = simplex[best][k] + 0.5 * (simplex[i][k] - simplex[best][k]);
                    fv[i] = f(simplex[i]);
                }
            }
        }
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i <= d; ++i)
        if (fv[i] < fv[best]) best = i;
    out.u = simplex[best];
    out.value = fv[best];
    return out;
}

struct StartOutcome {
    NmOutcome nm;
    std::size_t index = 0;
};

// Runs the local solver from `starts` sampled points plus any explicit
// extra starts, reduced deterministically by (objective, start index).
inline StartOutcome multi_start(const std::function<double(const std::vector<double>&)>& f,
                                const SearchSpace& space, std::size_t starts,
                                std::uint64_t seed,
                                const std::vector<std::vector<double>>& extra_starts = {},
                                unsigned threads = 1) {
    space.validate();
    const std::size_t d = space.dims.size();
    std::vector<std::vector<double>> u0s;
    u0s.reserve(starts + extra_starts.size());
    Xoshiro256pp start_rng(derive_seed(seed, 0));
    for (std::size_t s = 0; s < starts; ++s) {
        std::vector<double> u(d);
        for (std::size_t k = 0; k < d; ++k) {
            const double frac = start_rng.uniform();
            u[k] = std::asin(std::sqrt(std::clamp(frac, 1e-9, 1.0 - 1e-9)));
        }
        u0s.push_back(std::move(u));
    }
    for (const auto& x : extra_starts) {
        std::vector<double> u(d);
        for (std::size_t k = 0; k < d; ++k) u[k] = to_internal(x[k], space.dims[k]);
        u0s.push_back(std::move(u));
    }

    std::vector<NmOutcome> results(u0s.size());
    auto worker = [&](std::size_t i) { results[i] = nelder_mead(f, u0s[i]); };
    if (threads <= 1) {
        for (std::size_t i = 0; i < u0s.size(); ++i) worker(i);
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t)
            pool.emplace_back([&, t] {
                for (std::size_t i = t; i < u0s.size(); i += threads) worker(i);
            });
        for (auto& th : pool) th.join();
    }

    StartOutcome best;
    best.nm.value = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < results.size(); ++i) {
        if (results[i].value < best.nm.value) {
            best.nm = results[i];
            best.index = i;
        }
    }
    // Restarting from the winner with a fresh simplex recovers from
    // premature simplex collapse.
    if (std::isfinite(best.nm.value)) {
        for (int round = 0; round < 2; ++round) {
            const auto polish = nelder_mead(f, best.nm.u);
            if (polish.value >= best.nm.value) break;
            best.nm = polish;
        }
    }
    return best;
}

inline bool near_bound(double x, const Interval& iv) {
    const double span = iv.log_scale ? std::log(iv.hi) - std::log(iv.lo) : iv.hi - iv.lo;
    const double v = iv.log_scale ? std::log(x) : x;
    const double lo = iv.log_scale ? std::log(iv.lo) : iv.lo;
    const double f = (v - lo) / span;
    return f < 1e-3 || f > 1.0 - 1e-3;
}

inline double sum_squares(const std::vector<double>& a, const std::vector<double>& b) {
    double ss = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double r = a[i] - b[i];
        ss += r * r;
    }
    return ss;
}

}  // namespace detail

/// Decodes the mixture dimension layout used by fit_dist: per component
/// [D_eff, v_eff, L_eff, d_rx/L_eff], then n-1 stick-breaking weights.
inline MixtureParams decode_mixture(const std::vector<double>& x, int n_components) {
    std::vector<MixtureParams::Component> comps;
    double remaining = 1.0;
    for (int j = 0; j < n_components; ++j) {
        const std::size_t base = static_cast<std::size_t>(j) * 4;
        const double d_eff = x[base + 0];
        const double v_eff = x[base + 1];
        const double l_eff = x[base + 2];
        const double d_rx = std::clamp(x[base + 3] * l_eff, 1e-5, l_eff * (1.0 - 1e-12));
        double w;
        if (j + 1 < n_components) {
            const double stick = x[static_cast<std::size_t>(n_components) * 4 +
                                   static_cast<std::size_t>(j)];
            w = remaining * stick;
            remaining -= w;
        } else {
            w = remaining;
        }
        comps.push_back({w, ChannelParams(d_eff, v_eff, l_eff, d_rx)});
    }
    return MixtureParams(std::move(comps));
}

inline std::vector<double> encode_mixture(const MixtureParams& p) {
    const int n = static_cast<int>(p.components.size());
    std::vector<double> x;
    for (const auto& c : p.components) {
        x.push_back(c.channel.d_eff);
        x.push_back(c.channel.v_eff);
        x.push_back(c.channel.l_eff);
        x.push_back(std::clamp(c.channel.d_rx / c.channel.l_eff, 1e-4, 1.0));
    }
    double remaining = 1.0;
    for (int j = 0; j + 1 < n; ++j) {
        const double w = p.components[static_cast<std::size_t>(j)].weight;
        x.push_back(remaining > 0.0 ? std::clamp(w / remaining, 0.0, 1.0) : 0.0);
        remaining -= w;
    }
    return x;
}

/// Fits the raised-cosine pulse to a measured injection-rate trace.
inline FitResult<InjectionParams> fit_injection(const IntensityTrace& measured,
                                                const SearchSpace& space = SearchSpace::injection_default(),
                                                std::size_t starts = 8,
                                                std::uint64_t seed = 0,
                                                unsigned threads = 1) {
    measured.validate();
    if (space.dims.size() != 2) throw std::invalid_argument("fit_injection: space needs 2 dims");

    const std::size_t count = measured.samples.size();
    auto objective = [&](const std::vector<double>& u) {
        const auto x = detail::decode(u, space);
        double ss = 0.0;
        for (std::size_t i = 0; i < count; ++i) {
            const double t = measured.time(i);
            const double model = (1.0 - std::cos(two_pi * (t - x[1]) / x[0])) / x[0];
            const double v = (t > x[1] && t < x[1] + x[0]) ? model : 0.0;
            const double r = measured.samples[i] - v;
            ss += r * r;
        }
        return ss;
    };

    // The objective is flat wherever the pulse support misses the data
    // window, so random starts alone can strand every simplex on the
    // plateau. Seed one start from the observed support.
    std::vector<std::vector<double>> extra;
    double peak = 0.0;
    for (double s : measured.samples) peak = std::max(peak, s);
    if (peak > 0.0) {
        std::size_t first = 0, last = count - 1;
        while (first < count && measured.samples[first] < 0.05 * peak) ++first;
        while (last > first && measured.samples[last] < 0.05 * peak) --last;
        const double t0_guess = std::clamp(measured.dt * static_cast<double>(first),
                                           space.dims[1].lo, space.dims[1].hi);
        const double tw_guess =
            std::clamp(measured.dt * static_cast<double>(last - first + 1),
                       space.dims[0].lo, space.dims[0].hi);
        extra.push_back({tw_guess, t0_guess});
    }

    const auto best = detail::multi_start(objective, space, starts, seed, extra, threads);
    const auto x = detail::decode(best.nm.u, space);

    FitResult<InjectionParams> res{InjectionParams(x[0], std::max(0.0, x[1]))};
    res.objective = best.nm.value;
    res.n_starts = starts + extra.size();
    res.converged = best.nm.converged;
    res.at_bound = detail::near_bound(x[0], space.dims[0]) || detail::near_bound(x[1], space.dims[1]);
    res.model.dt = measured.dt;
    res.model.meta = measured.meta;
    res.model.samples.resize(count);
    for (std::size_t i = 0; i < count; ++i)
        res.model.samples[i] = injection_profile(res.params, measured.time(i));
    res.rmse = rmse(measured, res.model);
    return res;
}

/// Fits an n-component wrapped-normal mixture to a normalized intensity
/// trace. Residuals are taken between the backward-difference derivatives
/// of measurement and model; the reported rmse is computed on the
/// undifferentiated traces.
inline FitResult<MixtureParams> fit_dist(const IntensityTrace& trace, int n_components,
                                         const InjectionParams& inj,
                                         const SearchSpace& space_in = {},
                                         std::size_t starts = 64,
                                         std::uint64_t seed = 0,
                                         unsigned threads = 1,
                                         const std::vector<MixtureParams>& extra_starts = {}) {
    trace.validate();
    if (n_components < 1) throw std::invalid_argument("fit_dist: n must be >= 1");
    const SearchSpace space =
        space_in.dims.empty() ? SearchSpace::dist_default(n_components) : space_in;
    if (space.dims.size() != static_cast<std::size_t>(n_components) * 5 - 1)
        throw std::invalid_argument("fit_dist: space dimension mismatch");

    const auto measured_deriv = derivative(trace).samples;
    const std::size_t count = trace.samples.size();

    auto objective = [&](const std::vector<double>& u) {
        try {
            const auto mix = decode_mixture(detail::decode(u, space), n_components);
            const auto model = model_dist(mix, inj, trace.dt, count);
            const auto model_deriv = derivative(model).samples;
            return detail::sum_squares(measured_deriv, model_deriv);
        } catch (const std::exception&) {
            return std::numeric_limits<double>::infinity();
        }
    };

    std::vector<std::vector<double>> extra;
    for (const auto& m : extra_starts) extra.push_back(encode_mixture(m));

    const auto best = detail::multi_start(objective, space, starts, seed, extra, threads);
    const auto mix = decode_mixture(detail::decode(best.nm.u, space), n_components);

    FitResult<MixtureParams> res{mix};
    res.objective = best.nm.value;
    res.n_starts = starts + extra.size();
    res.converged = best.nm.converged && std::isfinite(best.nm.value);
    res.model = model_dist(mix, inj, trace.dt, count);
    res.rmse = rmse(trace, res.model);

    // Tail of a normalized trace should sit near 1.
    const std::size_t tail = std::max<std::size_t>(count / 5, 1);
    double tail_mean = 0.0;
    for (std::size_t i = count - tail; i < count; ++i) tail_mean += trace.samples[i];
    tail_mean /= static_cast<double>(tail);
    res.warning_not_normalized = std::abs(tail_mean - 1.0) > 0.2;
    return res;
}

/// Evaluates a fixed mixture against a trace without optimizing,
/// producing a FitResult on the same objective and rmse definitions as
/// fit_dist. Lets nested-model candidates (e.g. an n=1 optimum duplicated
/// into n components) participate in rmse-based selection.
inline FitResult<MixtureParams> evaluate_dist(const IntensityTrace& trace,
                                              const MixtureParams& mix,
                                              const InjectionParams& inj) {
    trace.validate();
    FitResult<MixtureParams> res{mix};
    res.model = model_dist(mix, inj, trace.dt, trace.samples.size());
    res.objective =
        detail::sum_squares(derivative(trace).samples, derivative(res.model).samples);
    res.rmse = rmse(trace, res.model);
    res.converged = true;
    return res;
}

/// Fits the accumulation model to the accumulation-phase segment
/// (re-based to t = 0).
inline FitResult<AccumulationParams> fit_acc(const IntensityTrace& trace,
                                             const SearchSpace& space = SearchSpace::acc_default(),
                                             std::size_t starts = 8,
                                             std::uint64_t seed = 0,
                                             unsigned threads = 1) {
    trace.validate();
    if (space.dims.size() != 2) throw std::invalid_argument("fit_acc: space needs 2 dims");
    const std::size_t count = trace.samples.size();

    auto objective = [&](const std::vector<double>& u) {
        const auto x = detail::decode(u, space);
        double ss = 0.0;
        for (std::size_t i = 0; i < count; ++i) {
            const double r =
                trace.samples[i] - (1.0 - x[0] * std::exp(-x[1] * trace.time(i)));
            ss += r * r;
        }
        return ss;
    };

    const auto best = detail::multi_start(objective, space, starts, seed, {}, threads);
    const auto x = detail::decode(best.nm.u, space);

    FitResult<AccumulationParams> res{AccumulationParams(x[0], x[1])};
    res.objective = best.nm.value;
    res.n_starts = starts;
    res.at_bound = detail::near_bound(x[0], space.dims[0]) || detail::near_bound(x[1], space.dims[1]);
    res.converged = best.nm.converged && !res.at_bound;
    res.model = model_acc(res.params, trace.dt, count);
    res.model.meta = trace.meta;
    res.rmse = rmse(trace, res.model);
    return res;
}

/// Minimum-rmse selection.
template <typename Params>
const FitResult<Params>& select_best(const std::vector<FitResult<Params>>& results) {
    if (results.empty()) throw std::invalid_argument("select_best: empty list");
    std::size_t best = 0;
    for (std::size_t i = 1; i < results.size(); ++i)
        if (results[i].rmse < results[best].rmse) best = i;
    return results[best];
}

/// Keeps the results whose rmse is at or below the q-quantile threshold;
/// ties at the threshold are all included.
template <typename Params>
std::vector<FitResult<Params>> select_quantile(const std::vector<FitResult<Params>>& results,
                                               double q) {
    if (results.empty()) throw std::invalid_argument("select_quantile: empty list");
    if (!(q > 0.0 && q <= 1.0)) throw std::invalid_argument("select_quantile: q must be in (0, 1]");
    std::vector<double> vals;
    vals.reserve(results.size());
    for (const auto& r : results) vals.push_back(r.rmse);
    std::sort(vals.begin(), vals.end());
    auto k = static_cast<std::size_t>(std::floor(q * static_cast<double>(results.size()) + 1e-12));
    k = std::clamp<std::size_t>(k, 1, results.size());
    const double threshold = vals[k - 1];
    std::vector<FitResult<Params>> out;
    for (const auto& r : results)
        if (r.rmse <= threshold) out.push_back(r);
    return out;
}

}  // namespace ringchan
