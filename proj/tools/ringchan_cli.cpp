// Command-line front end: closed-form ring traces, particle simulation,
// model fitting, simulation-vs-analytic comparison, and synthetic dataset
// generation. All outputs are files; stdout mirrors short summaries.
//
// Exit codes: 0 success, 1 input/domain error, 2 usage error,
// 3 non-convergence (report still written).

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "ringchan/channel.hpp"
#include "ringchan/fitting.hpp"
#include "ringchan/pbs.hpp"
#include "ringchan/signal.hpp"
#include "ringchan/trace_io.hpp"
#include "ringchan/units.hpp"

namespace {

using namespace ringchan;

std::uint64_t default_seed() {
    if (const char* env = std::getenv("RINGCHAN_SEED")) return std::strtoull(env, nullptr, 10);
    return 1;
}

struct QuantityFlag {
    std::string text;
    double si(const std::string& name) const {
        try {
            return parse_quantity(text);
        } catch (const std::exception& e) {
            throw CLI::ValidationError(name, e.what());
        }
    }
};

int cmd_analytic(double d_eff, double v_eff, double l_eff, double x, double dt, double t_end,
                 int peaks, const std::string& out_prefix) {
    const ChannelParams q(d_eff, v_eff, l_eff, x);
    const auto n = static_cast<std::size_t>(t_end / dt);
    IntensityTrace wrapped, normal;
    wrapped.dt = normal.dt = dt;
    for (std::size_t i = 1; i <= n; ++i) {
        const double t = dt * static_cast<double>(i);
        wrapped.samples.push_back(wrapped_concentration(q, x, t));
        normal.samples.push_back(normal_concentration(q, x, t));
    }
    wrapped.meta.extra["x"] = format_double(x);
    wrapped.meta.extra["t_offset"] = format_double(dt);
    normal.meta.extra["x"] = format_double(x);
    normal.meta.extra["t_offset"] = format_double(dt);
    if (peaks >= 0 && v_eff > 0.0) {
        const auto tp = peak_times(q, peaks);
        std::string joined;
        for (double t : tp) {
            if (!joined.empty()) joined += ",";
            joined += format_double(t);
        }
        wrapped.meta.extra["peak_times"] = joined;
        std::cout << "peak times (s): " << joined << "\n";
    }
    write_trace(wrapped, out_prefix + "_wrapped.csv");
    write_trace(normal, out_prefix + "_normal.csv");
    std::cout << "wrote " << out_prefix << "_wrapped.csv and " << out_prefix << "_normal.csv\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ringchan: dispersive closed-loop transport toolkit"};
    app.require_subcommand(1);
    unsigned threads = std::max(1u, std::thread::hardware_concurrency());
    app.add_option("--threads", threads, "worker thread count");

    // --- analytic ---------------------------------------------------------
    auto* analytic = app.add_subcommand("analytic", "closed-form ring traces at a position");
    QuantityFlag a_d{"0"}, a_deff{"0"}, a_r0{"0"}, a_v{"0"}, a_l{"0"}, a_x{"0"},
        a_dt{"0.01"}, a_tend{"60"};
    int a_peaks = -1;
    std::string a_out = "analytic";
    analytic->add_option("--d-eff", a_deff.text, "effective diffusion coefficient, m^2/s");
    analytic->add_option("--d", a_d.text, "molecular diffusion coefficient, m^2/s (with --r0 derives D_eff)");
    analytic->add_option("--r0", a_r0.text, "vessel radius (for the dispersion formula)");
    analytic->add_option("--v-eff", a_v.text, "effective flow velocity, m/s")->required();
    analytic->add_option("--l-eff", a_l.text, "loop circumference, m")->required();
    analytic->add_option("--x", a_x.text, "observation position, m")->required();
    analytic->add_option("--dt", a_dt.text, "sample interval, s");
    analytic->add_option("--t-end", a_tend.text, "horizon, s");
    analytic->add_option("--peaks", a_peaks, "annotate peak times for loops 0..k");
    analytic->add_option("--out", a_out, "output file prefix");

    // --- simulate ---------------------------------------------------------
    auto* simulate = app.add_subcommand("simulate", "particle-based ring simulation");
    QuantityFlag s_l{"1mm"}, s_r0{"100um"}, s_d{"1.25e-9"}, s_v{"50um"}, s_dt{"1e-3"},
        s_tend{"25"}, s_bw{"0"}, s_si{"0.1"}, s_x{"0.39mm"};
    std::size_t s_particles = 2000, s_real = 20;
    std::uint64_t s_seed = default_seed();
    bool s_norm = false;
    std::string s_out = "pbs.csv";
    simulate->add_option("--l-eff", s_l.text, "loop circumference, m");
    simulate->add_option("--r0", s_r0.text, "cylinder radius, m");
    simulate->add_option("--d", s_d.text, "molecular diffusion coefficient, m^2/s");
    simulate->add_option("--v-eff", s_v.text, "mean flow velocity, m/s");
    simulate->add_option("--particles", s_particles, "particles per realization");
    simulate->add_option("--dt", s_dt.text, "time step, s");
    simulate->add_option("--t-end", s_tend.text, "horizon, s");
    simulate->add_option("--realizations", s_real, "realization count");
    simulate->add_option("--seed", s_seed, "master seed (env RINGCHAN_SEED sets the default)");
    simulate->add_option("--bin-width", s_bw.text, "observation bin length, m (0 = l_eff/100)");
    simulate->add_option("--sample-interval", s_si.text, "recording interval, s");
    simulate->add_option("--x", s_x.text, "observation position, m");
    simulate->add_flag("--normalize", s_norm, "steady-state normalize the bin trace");
    simulate->add_option("--out", s_out, "output trace file");

    // --- fit --------------------------------------------------------------
    auto* fit = app.add_subcommand("fit", "fit a parametric model to a trace");
    std::string f_trace, f_model = "dist", f_out = "fit.json";
    int f_n = 1;
    std::size_t f_starts = 0;
    std::uint64_t f_seed = default_seed();
    QuantityFlag f_tw{"0"}, f_t0{"0"};
    fit->add_option("--trace", f_trace, "input trace file")->required();
    fit->add_option("--model", f_model, "injection | dist | acc")
        ->check(CLI::IsMember({"injection", "dist", "acc"}));
    fit->add_option("--n", f_n, "mixture component count (dist)");
    fit->add_option("--starts", f_starts, "multi-start count (0 = default)");
    fit->add_option("--seed", f_seed, "solver seed");
    fit->add_option("--t-w", f_tw.text, "injection duration, s (dist; else taken from trace metadata)");
    fit->add_option("--t-0", f_t0.text, "injection start, s (dist)");
    fit->add_option("--out", f_out, "output report file");

    // --- compare ----------------------------------------------------------
    auto* compare = app.add_subcommand("compare", "deviation between a PBS trace and the closed form");
    std::string c_pbs, c_against = "wrapped", c_out = "compare.json";
    QuantityFlag c_deff{"0"}, c_v{"0"}, c_l{"0"}, c_x{"0"};
    compare->add_option("--pbs", c_pbs, "PBS bin trace file")->required();
    compare->add_option("--d-eff", c_deff.text, "effective diffusion coefficient, m^2/s")->required();
    compare->add_option("--v-eff", c_v.text, "effective flow velocity, m/s")->required();
    compare->add_option("--l-eff", c_l.text, "loop circumference, m")->required();
    compare->add_option("--x", c_x.text, "observation position, m")->required();
    compare->add_option("--against", c_against, "wrapped | normal")
        ->check(CLI::IsMember({"wrapped", "normal"}));
    compare->add_option("--out", c_out, "output report file");

    // --- synth ------------------------------------------------------------
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset with ground truth");
    std::string y_dir = "synth";
    std::size_t y_count = 69;
    std::uint64_t y_seed = default_seed();
    double y_noise = 0.01;
    synth->add_option("--out", y_dir, "output directory");
    synth->add_option("--count", y_count, "trace count");
    synth->add_option("--seed", y_seed, "generation seed");
    synth->add_option("--noise", y_noise, "additive Gaussian noise sigma");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*analytic) {
            double d_eff = a_deff.si("--d-eff");
            if (d_eff <= 0.0) {
                const double d = a_d.si("--d");
                const double r0 = a_r0.si("--r0");
                if (d <= 0.0 || r0 <= 0.0)
                    throw std::invalid_argument("provide --d-eff, or --d together with --r0");
                d_eff = dispersion_coefficient({d, r0, a_v.si("--v-eff")});
                std::cout << "derived D_eff = " << format_double(d_eff) << " m^2/s\n";
            }
            return cmd_analytic(d_eff, a_v.si("--v-eff"), a_l.si("--l-eff"), a_x.si("--x"),
                                a_dt.si("--dt"), a_tend.si("--t-end"), a_peaks, a_out);
        }

        if (*simulate) {
            PbsConfig cfg;
            cfg.l_eff = s_l.si("--l-eff");
            cfg.r0 = s_r0.si("--r0");
            cfg.d_molecular = s_d.si("--d");
            cfg.v_eff = s_v.si("--v-eff");
            cfg.n_particles = s_particles;
            cfg.dt = s_dt.si("--dt");
            cfg.t_end = s_tend.si("--t-end");
            cfg.n_realizations = s_real;
            cfg.master_seed = s_seed;
            cfg.bin_width = s_bw.si("--bin-width");
            cfg.sample_interval = s_si.si("--sample-interval");
            cfg.validate();
            std::cout << "particle-step budget: " << format_double(cfg.step_budget()) << "\n";
            if (cfg.step_budget() > 1e11) {
                std::cerr << "refused: budget exceeds 1e11 particle-steps; reduce --particles, "
                             "--realizations, or --t-end, or increase --dt (e.g. --particles "
                          << cfg.n_particles / 10 << ")\n";
                return 1;
            }
            const auto result = run_pbs(cfg, threads);
            auto trace = observe_bin(result, s_x.si("--x"),
                                     s_norm ? BinNormalization::steady_state
                                            : BinNormalization::raw);
            trace.meta.extra["master_seed"] = std::to_string(cfg.master_seed);
            trace.meta.extra["x"] = format_double(s_x.si("--x"));
            write_trace(trace, s_out);
            std::cout << "wrote " << s_out << "\n";
            return 0;
        }

        if (*fit) {
            const auto trace = read_trace(f_trace);
            FitReport report;
            report.trace_path = f_trace;
            report.seed = f_seed;
            bool converged = false;
            IntensityTrace model;

            if (f_model == "injection") {
                const auto r = fit_injection(trace, SearchSpace::injection_default(),
                                             f_starts ? f_starts : 8, f_seed, threads);
                report.model_kind = "injection";
                report.parameters = {{"t_w", r.params.t_w}, {"t_0", r.params.t_0}};
                report.rmse = r.rmse;
                report.objective = r.objective;
                report.n_starts = r.n_starts;
                converged = r.converged;
                model = r.model;
            } else if (f_model == "dist") {
                double t_w = f_tw.si("--t-w"), t_0 = f_t0.si("--t-0");
                if (t_w <= 0.0) {
                    const auto it = trace.meta.extra.find("t_w");
                    if (it == trace.meta.extra.end())
                        throw std::invalid_argument("dist fit needs --t-w or trace metadata t_w");
                    t_w = parse_double(it->second, "metadata t_w");
                    if (const auto i0 = trace.meta.extra.find("t_0"); i0 != trace.meta.extra.end())
                        t_0 = parse_double(i0->second, "metadata t_0");
                }
                const InjectionParams inj(t_w, t_0);
                const auto r = fit_dist(trace, f_n, inj, {}, f_starts ? f_starts : 64, f_seed,
                                        threads);
                report.model_kind = "dist-" + std::to_string(f_n);
                report.parameters = mixture_to_json(r.params);
                report.parameters["t_w"] = t_w;
                report.parameters["t_0"] = t_0;
                report.rmse = r.rmse;
                report.objective = r.objective;
                report.n_starts = r.n_starts;
                converged = r.converged;
                model = r.model;
            } else {
                const auto r = fit_acc(trace, SearchSpace::acc_default(),
                                       f_starts ? f_starts : 8, f_seed, threads);
                report.model_kind = "acc";
                report.parameters = {{"a", r.params.a}, {"b", r.params.b}};
                report.rmse = r.rmse;
                report.objective = r.objective;
                report.n_starts = r.n_starts;
                converged = r.converged;
                model = r.model;
            }
            report.converged = converged;
            write_report(report, f_out);
            model.meta = trace.meta;
            write_trace(model, f_out + ".model.csv");
            std::cout << "model: " << report.model_kind << "  rmse: " << format_double(report.rmse)
                      << "  converged: " << (converged ? "yes" : "no") << "\n";
            std::cout << "wrote " << f_out << " and " << f_out << ".model.csv\n";
            return converged ? 0 : 3;
        }

        if (*compare) {
            const auto pbs = read_trace(c_pbs);
            double t_offset = 0.0;
            if (const auto it = pbs.meta.extra.find("t_offset"); it != pbs.meta.extra.end())
                t_offset = parse_double(it->second, "metadata t_offset");
            const double x = c_x.si("--x");
            const ChannelParams q(c_deff.si("--d-eff"), c_v.si("--v-eff"), c_l.si("--l-eff"), x);

            double peak = 0.0, max_dev = 0.0, sum_dev = 0.0, tail_dev = 0.0;
            std::size_t count = 0, tail_count = 0;
            const std::size_t tail_from = pbs.samples.size() - pbs.samples.size() / 10 - 1;
            for (std::size_t i = 0; i < pbs.samples.size(); ++i) {
                const double t = t_offset + pbs.time(i);
                if (t <= 0.0) continue;
                const double ref = c_against == "wrapped" ? wrapped_concentration(q, x, t)
                                                          : normal_concentration(q, x, t);
                const double dev = std::abs(pbs.samples[i] - ref);
                peak = std::max(peak, ref);
                max_dev = std::max(max_dev, dev);
                sum_dev += dev;
                ++count;
                if (i >= tail_from) {
                    tail_dev += dev;
                    ++tail_count;
                }
            }
            if (count == 0) throw std::invalid_argument("compare: no usable samples");
            if (peak <= 0.0) peak = 1.0;
            const double uniform = 1.0 / q.l_eff;
            const bool steady_mismatch = tail_count > 0 && tail_dev / static_cast<double>(tail_count) > 0.25 * uniform;
            nlohmann::json j = {{"max_abs_deviation", max_dev},
                                {"mean_abs_deviation", sum_dev / static_cast<double>(count)},
                                {"analytic_peak", peak},
                                {"max_deviation_over_peak", max_dev / peak},
                                {"steady_state_mismatch", steady_mismatch},
                                {"against", c_against}};
            std::ofstream out(c_out, std::ios::binary);
            out << j.dump(2) << "\n";
            std::cout << j.dump(2) << "\n";
            return 0;
        }

        if (*synth) {
            SynthSpec spec;
            spec.noise_sigma = y_noise;
            Xoshiro256pp rng(derive_seed(y_seed, 0xda7a));
            for (std::size_t i = 0; i < y_count; ++i) {
                // Parameters scattered around the dataset-wide means.
                const double l = 0.034 * std::exp(0.3 * rng.normal());
                const double d_rx = std::clamp(0.5 * l * std::exp(0.3 * rng.normal()), 1e-4,
                                               l * 0.9);
                SynthEntry e{
                    MixtureParams({{1.0, ChannelParams(5e-6 * std::exp(0.5 * rng.normal()),
                                                       3.5e-3 * std::exp(0.3 * rng.normal()), l,
                                                       d_rx)}}),
                    InjectionParams(2.0 + rng.uniform(), 0.5 + 0.5 * rng.uniform())};
                e.egg = static_cast<int>(i / 3 + 1);
                e.roi = static_cast<int>(i % 3 + 1);
                e.ded = 9 + static_cast<int>(rng.uniform() * 7.0);
                spec.entries.push_back(std::move(e));
            }
            const auto paths = synth_dataset(spec, y_seed, y_dir);
            std::cout << "wrote " << paths.size() << " traces + ground_truth.json to " << y_dir
                      << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
