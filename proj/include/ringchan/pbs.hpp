#pragma once

// 3D particle-based Monte Carlo simulation of a looped cylinder with
// parabolic laminar flow. Euler-Maruyama stepping, specular reflection at
// the lateral wall, axial wrap modulo the loop length. Serves as the
// independent validation reference for the closed-form ring solutions.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <thread>
#include <vector>

#include "ringchan/rng.hpp"
#include "ringchan/signal.hpp"

namespace ringchan {

struct PbsConfig {
    double l_eff;            // m, cylinder length (= loop circumference)
    double r0;               // m, cylinder radius
    double d_molecular;      // m^2/s
    double v_eff;            // m/s, mean flow velocity
    std::size_t n_particles;
    double dt;               // s
    double t_end;            // s
    std::size_t n_realizations = 1;
    std::uint64_t master_seed = 0;
    double bin_width = 0.0;       // m; 0 selects the default l_eff/100
    double sample_interval = 0.0; // s; 0 records every step

    void validate() const {
        if (!(l_eff > 0.0 && r0 > 0.0 && d_molecular > 0.0 && v_eff >= 0.0))
            throw std::invalid_argument("PbsConfig: physical quantities must be positive");
        if (!(dt > 0.0 && t_end > 0.0)) throw std::invalid_argument("PbsConfig: dt and t_end must be > 0");
        if (n_particles < 1) throw std::invalid_argument("PbsConfig: n_particles must be >= 1");
        if (n_realizations < 1) throw std::invalid_argument("PbsConfig: n_realizations must be >= 1");
        const double bw = effective_bin_width();
        if (!(bw > 0.0 && bw <= l_eff)) throw std::invalid_argument("PbsConfig: bad bin_width");
        // A particle must not be able to skip a bin in one step under pure drift.
        if (v_eff > 0.0 && !(dt < bw / (2.0 * v_eff)))
            throw std::invalid_argument("PbsConfig: dt violates the bin-skip bound bin_width/(2*v_eff)");
    }

    double effective_bin_width() const { return bin_width > 0.0 ? bin_width : l_eff / 100.0; }
    std::size_t n_bins() const {
        return static_cast<std::size_t>(std::ceil(l_eff / effective_bin_width() - 1e-9));
    }
    std::size_t n_steps() const { return static_cast<std::size_t>(std::ceil(t_end / dt - 1e-9)); }
    std::size_t sample_stride() const {
        if (sample_interval <= 0.0) return 1;
        auto s = static_cast<std::size_t>(sample_interval / dt + 0.5);
        return s < 1 ? 1 : s;
    }

    // Total particle-steps; refused above 1e11.
    double step_budget() const {
        return static_cast<double>(n_particles) * static_cast<double>(n_steps()) *
               static_cast<double>(n_realizations);
    }
};

/// Binned concentration estimates over time, averaged over realizations.
struct PbsResult {
    std::vector<double> times;                       // s, sample instants
    std::vector<std::vector<double>> concentration;  // [time][bin], 1/m
    double bin_width = 0.0;
    double l_eff = 0.0;
    std::size_t n_realizations = 0;
    std::uint64_t master_seed = 0;
};

/// Specular reflection in the radial coordinate: a point at radial
/// distance rho > r0 maps to 2*r0 - rho at the same azimuth and axial
/// coordinate. Points inside the wall are unchanged.
struct Point3 {
    double x, y, z;
};

inline Point3 reflect_lateral(Point3 p, double r0) {
    const double rho2 = p.y * p.y + p.z * p.z;
    if (rho2 <= r0 * r0) return p;
    const double rho = std::sqrt(rho2);
    const double scale = (2.0 * r0 - rho) / rho;
    return {p.x, p.y * scale, p.z * scale};
}

namespace detail {

inline void run_realization(const PbsConfig& cfg, std::uint64_t seed,
                            std::vector<std::vector<double>>& counts) {
    Xoshiro256pp rng(seed);
    const std::size_t n = cfg.n_particles;
    const double bw = cfg.effective_bin_width();
    const std::size_t n_bins = cfg.n_bins();
    const double sigma = std::sqrt(2.0 * cfg.d_molecular * cfg.dt);
    const double inv_r02 = 1.0 / (cfg.r0 * cfg.r0);
    const std::size_t stride = cfg.sample_stride();
    const std::size_t n_steps = cfg.n_steps();

    std::vector<double> xs(n), ys(n), zs(n);
    // Initial condition: uniform over the disc at x = 0.
    for (std::size_t i = 0; i < n; ++i) {
        const double rho = cfg.r0 * std::sqrt(rng.uniform());
        const double phi = two_pi * rng.uniform();
        xs[i] = 0.0;
        ys[i] = rho * std::cos(phi);
        zs[i] = rho * std::sin(phi);
    }

    std::size_t sample_idx = 0;
    auto record = [&](std::size_t idx) {
        auto& row = counts[idx];
        for (std::size_t i = 0; i < n; ++i) {
            auto b = static_cast<std::size_t>(xs[i] / bw);
            if (b >= n_bins) b = n_bins - 1;  // x == l_eff edge
            row[b] += 1.0;
        }
    };
    record(sample_idx++);

    for (std::size_t step = 1; step <= n_steps; ++step) {
        for (std::size_t i = 0; i < n; ++i) {
            const double rho2 = ys[i] * ys[i] + zs[i] * zs[i];
            // Parabolic laminar profile, evaluated at the pre-step radius.
            const double vx = 2.0 * cfg.v_eff * (1.0 - rho2 * inv_r02);
            double x = xs[i] + vx * cfg.dt + sigma * rng.normal();
            double y = ys[i] + sigma * rng.normal();
            double z = zs[i] + sigma * rng.normal();
            const double lat2 = y * y + z * z;
            if (lat2 > cfg.r0 * cfg.r0) {
                const double rho = std::sqrt(lat2);
                const double scale = (2.0 * cfg.r0 - rho) / rho;
                y *= scale;
                z *= scale;
            }
            x = std::fmod(x, cfg.l_eff);
            if (x < 0.0) x += cfg.l_eff;
            xs[i] = x;
            ys[i] = y;
            zs[i] = z;
        }
        if (step % stride == 0) record(sample_idx++);
    }
}

}  // namespace detail

/// Runs the simulation; realizations are independent streams averaged in
/// fixed index order, so the result does not depend on `threads`.
inline PbsResult run_pbs(const PbsConfig& cfg, unsigned threads = 1) {
    cfg.validate();
    if (cfg.step_budget() > 1e11)
        throw std::runtime_error("run_pbs: step budget exceeds 1e11 particle-steps");

    const std::size_t stride = cfg.sample_stride();
    const std::size_t n_samples = cfg.n_steps() / stride + 1;
    const std::size_t n_bins = cfg.n_bins();

    std::vector<std::vector<std::vector<double>>> per_real(
        cfg.n_realizations,
        std::vector<std::vector<double>>(n_samples, std::vector<double>(n_bins, 0.0)));

    auto worker = [&](std::size_t j) {
        detail::run_realization(cfg, derive_seed(cfg.master_seed, j), per_real[j]);
    };
    if (threads <= 1) {
        for (std::size_t j = 0; j < cfg.n_realizations; ++j) worker(j);
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t)
            pool.emplace_back([&, t] {
                for (std::size_t j = t; j < cfg.n_realizations; j += threads) worker(j);
            });
        for (auto& th : pool) th.join();
    }

    PbsResult res;
    res.bin_width = cfg.effective_bin_width();
    res.l_eff = cfg.l_eff;
    res.n_realizations = cfg.n_realizations;
    res.master_seed = cfg.master_seed;
    res.times.resize(n_samples);
    for (std::size_t s = 0; s < n_samples; ++s)
        res.times[s] = static_cast<double>(s) * static_cast<double>(stride) * cfg.dt;
    res.concentration.assign(n_samples, std::vector<double>(n_bins, 0.0));
    const double norm = 1.0 / (static_cast<double>(cfg.n_particles) * res.bin_width *
                               static_cast<double>(cfg.n_realizations));
    for (std::size_t j = 0; j < cfg.n_realizations; ++j)
        for (std::size_t s = 0; s < n_samples; ++s)
            for (std::size_t b = 0; b < n_bins; ++b)
                res.concentration[s][b] += per_real[j][s][b] * norm;
    return res;
}

enum class BinNormalization { raw, steady_state };

/// Concentration trace of the bin containing x. With steady-state
/// normalization the trace is divided by the uniform level 1/l_eff.
inline IntensityTrace observe_bin(const PbsResult& result, double x,
                                  BinNormalization mode = BinNormalization::raw) {
    if (!(x >= 0.0 && x <= result.l_eff))
        throw std::domain_error("observe_bin: x must be in [0, l_eff]");
    if (result.times.size() < 2) throw std::invalid_argument("observe_bin: result too short");
    const std::size_t n_bins = result.concentration.front().size();
    auto b = static_cast<std::size_t>(x / result.bin_width);
    if (b >= n_bins) b = 0;  // x == l_eff wraps to bin 0

    IntensityTrace out;
    out.dt = result.times[1] - result.times[0];
    out.meta.kind = TraceKind::raw;
    out.samples.reserve(result.times.size());
    const double scale = mode == BinNormalization::steady_state ? result.l_eff : 1.0;
    for (const auto& row : result.concentration) out.samples.push_back(row[b] * scale);
    return out;
}

}  // namespace ringchan
