#pragma once

// Portable text persistence for traces and fit reports.
//
// Trace files are CSV with a commented header block:
//
//   # ringchan-trace v1
//   # dt = 0.04
//   # kind = dist
//   # egg = 1
//   ...
//   0.125
//   0.25
//
// All values are SI. Numbers serialize via the shortest round-trip
// decimal form, so write -> read -> write is byte-stable.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include "ringchan/fitting.hpp"
#include "ringchan/signal.hpp"

#include <json.hpp>

namespace ringchan {

inline std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s, const std::string& context) {
    double v = 0.0;
    const char* begin = s.data();
    const char* end = s.data() + s.size();
    const auto res = std::from_chars(begin, end, v);
    if (res.ec != std::errc{} || res.ptr != end)
        throw std::runtime_error("parse error: bad number '" + s + "' in " + context);
    return v;
}

struct ParseError : std::runtime_error {
    int line;
    ParseError(int line_, const std::string& msg)
        : std::runtime_error("line " + std::to_string(line_) + ": " + msg), line(line_) {}
};

inline std::string serialize_trace(const IntensityTrace& trace) {
    trace.validate();
    for (double s : trace.samples)
        if (!std::isfinite(s)) throw std::invalid_argument("serialize_trace: non-finite sample");

    std::ostringstream out;
    out << "# ringchan-trace v1\n";
    out << "# dt = " << format_double(trace.dt) << "\n";
    out << "# kind = " << to_string(trace.meta.kind) << "\n";
    out << "# egg = " << trace.meta.egg << "\n";
    out << "# roi = " << trace.meta.roi << "\n";
    out << "# ded = " << trace.meta.ded << "\n";
    out << "# d_inj = " << format_double(trace.meta.d_inj) << "\n";
    for (const auto& [k, v] : trace.meta.extra) out << "# " << k << " = " << v << "\n";
    for (double s : trace.samples) out << format_double(s) << "\n";
    return out.str();
}

inline IntensityTrace parse_trace(std::istream& in) {
    IntensityTrace trace;
    bool saw_magic = false, saw_dt = false;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::string body = line.substr(1);
            while (!body.empty() && body.front() == ' ') body.erase(body.begin());
            if (!saw_magic) {
                if (body != "ringchan-trace v1")
                    throw ParseError(line_no, "expected header 'ringchan-trace v1'");
                saw_magic = true;
                continue;
            }
            const auto eq = body.find(" = ");
            if (eq == std::string::npos) throw ParseError(line_no, "malformed header line");
            const std::string key = body.substr(0, eq);
            const std::string val = body.substr(eq + 3);
            if (key == "dt") {
                trace.dt = parse_double(val, "header field dt");
                saw_dt = true;
            } else if (key == "kind") {
                trace.meta.kind = trace_kind_from_string(val);
            } else if (key == "egg") {
                trace.meta.egg = std::stoi(val);
            } else if (key == "roi") {
                trace.meta.roi = std::stoi(val);
            } else if (key == "ded") {
                trace.meta.ded = std::stoi(val);
            } else if (key == "d_inj") {
                trace.meta.d_inj = parse_double(val, "header field d_inj");
            } else {
                trace.meta.extra[key] = val;
            }
        } else {
            if (!saw_magic) throw ParseError(line_no, "missing header");
            trace.samples.push_back(parse_double(line, "body"));
        }
    }
    if (!saw_magic) throw ParseError(line_no, "empty or non-trace file");
    if (!saw_dt) throw ParseError(line_no, "missing required header field 'dt'");
    if (!(trace.dt > 0.0)) throw std::runtime_error("validation error: dt must be > 0");
    if (trace.samples.size() < 2)
        throw std::runtime_error("validation error: need >= 2 samples");
    return trace;
}

inline IntensityTrace read_trace(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open trace file: " + path.string());
    try {
        return parse_trace(in);
    } catch (const ParseError& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

inline void write_trace(const IntensityTrace& trace, const std::filesystem::path& path) {
    const std::string body = serialize_trace(trace);  // validate before touching the file
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out << body;
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

// --- fit reports ---------------------------------------------------------

struct FitReport {
    std::string trace_path;
    std::string model_kind;  // "injection", "dist-1", "dist-2", ..., "acc"
    nlohmann::json parameters;
    double rmse = 0.0;
    double objective = 0.0;
    std::uint64_t seed = 0;
    std::size_t n_starts = 0;
    bool converged = false;
};

inline nlohmann::json mixture_to_json(const MixtureParams& p) {
    nlohmann::json comps = nlohmann::json::array();
    for (const auto& c : p.components) {
        comps.push_back({{"weight", c.weight},
                         {"d_eff", c.channel.d_eff},
                         {"v_eff", c.channel.v_eff},
                         {"l_eff", c.channel.l_eff},
                         {"d_rx", c.channel.d_rx}});
    }
    return {{"components", comps}};
}

inline nlohmann::json report_to_json(const FitReport& r) {
    return {{"trace", r.trace_path},     {"model", r.model_kind},
            {"parameters", r.parameters}, {"rmse", r.rmse},
            {"objective", r.objective},   {"seed", r.seed},
            {"n_starts", r.n_starts},     {"converged", r.converged}};
}

inline void write_report(const FitReport& r, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out << report_to_json(r).dump(2) << "\n";
}

inline FitReport read_report(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open report file: " + path.string());
    nlohmann::json j;
    in >> j;
    FitReport r;
    r.trace_path = j.at("trace").get<std::string>();
    r.model_kind = j.at("model").get<std::string>();
    r.parameters = j.at("parameters");
    r.rmse = j.at("rmse").get<double>();
    r.objective = j.at("objective").get<double>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.n_starts = j.at("n_starts").get<std::size_t>();
    r.converged = j.at("converged").get<bool>();
    return r;
}

// --- synthetic dataset ---------------------------------------------------

/// Ground truth for one synthetic trace.
struct SynthEntry {
    MixtureParams mixture;
    InjectionParams injection;
    double dt = 0.05;
    std::size_t n_samples = 400;
    int egg = 0;
    int roi = 0;
    int ded = 0;
};

struct SynthSpec {
    std::vector<SynthEntry> entries;
    double noise_sigma = 0.0;  // additive Gaussian, applied to the normalized trace
};

/// Emits noisy forward-model traces plus a sidecar JSON recording the
/// ground-truth parameters, fully reproducible from (spec, seed).
inline std::vector<std::filesystem::path> synth_dataset(const SynthSpec& spec,
                                                        std::uint64_t seed,
                                                        const std::filesystem::path& dir) {
    if (spec.entries.empty()) throw std::invalid_argument("synth_dataset: no entries");
    std::filesystem::create_directories(dir);
    nlohmann::json sidecar = nlohmann::json::array();
    std::vector<std::filesystem::path> paths;
    for (std::size_t i = 0; i < spec.entries.size(); ++i) {
        const auto& e = spec.entries[i];
        IntensityTrace trace = model_dist(e.mixture, e.injection, e.dt, e.n_samples);
        if (spec.noise_sigma > 0.0) {
            Xoshiro256pp rng(derive_seed(seed, i));
            for (auto& s : trace.samples) s += spec.noise_sigma * rng.normal();
        }
        trace.meta.egg = e.egg;
        trace.meta.roi = e.roi;
        trace.meta.ded = e.ded;
        trace.meta.kind = TraceKind::dist;
        trace.meta.extra["t_w"] = format_double(e.injection.t_w);
        trace.meta.extra["t_0"] = format_double(e.injection.t_0);

        std::ostringstream name;
        name << "trace_" << i << ".csv";
        const auto path = dir / name.str();
        write_trace(trace, path);
        paths.push_back(path);

        sidecar.push_back({{"trace", name.str()},
                           {"mixture", mixture_to_json(e.mixture)},
                           {"t_w", e.injection.t_w},
                           {"t_0", e.injection.t_0},
                           {"noise_sigma", spec.noise_sigma},
                           {"seed", seed}});
    }
    std::ofstream out(dir / "ground_truth.json", std::ios::binary);
    out << sidecar.dump(2) << "\n";
    return paths;
}

}  // namespace ringchan
