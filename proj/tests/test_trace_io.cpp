#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ringchan/rng.hpp"
#include "ringchan/trace_io.hpp"

using namespace ringchan;
namespace fs = std::filesystem;

namespace {
fs::path temp_dir() {
    const auto dir = fs::temp_directory_path() / "ringchan_io_test";
    fs::create_directories(dir);
    return dir;
}
}  // namespace

TEST_CASE("round trip is bit-exact for random traces") {
    const auto dir = temp_dir();
    Xoshiro256pp rng(20240811);
    for (int rep = 0; rep < 1000; ++rep) {
        IntensityTrace t;
        t.dt = 1e-4 + rng.uniform();
        const auto n = 2 + static_cast<std::size_t>(rng.uniform() * 40.0);
        for (std::size_t i = 0; i < n; ++i)
            t.samples.push_back((rng.uniform() - 0.5) * std::pow(10.0, rng.uniform() * 20.0 - 10.0));
        t.meta.egg = rep % 25;
        t.meta.roi = rep % 5;
        t.meta.ded = 9 + rep % 7;
        t.meta.d_inj = rng.uniform() * 0.05;
        t.meta.kind = rep % 2 ? TraceKind::dist : TraceKind::acc;
        if (rep % 3 == 0) t.meta.extra["note"] = "x" + std::to_string(rep);

        const auto path = dir / "roundtrip.csv";
        write_trace(t, path);
        const auto back = read_trace(path);
        CHECK(back.dt == t.dt);
        CHECK(back.samples == t.samples);
        CHECK(back.meta.egg == t.meta.egg);
        CHECK(back.meta.kind == t.meta.kind);
        CHECK(back.meta.extra == t.meta.extra);
    }
}

TEST_CASE("canonical serialization") {
    IntensityTrace t;
    t.dt = 0.04;
    t.samples = {0.1, 0.30000000000000004, 1.0 / 3.0};
    t.meta.extra["zkey"] = "v";
    t.meta.extra["akey"] = "w";

    SUBCASE("identical traces produce identical bytes") {
        CHECK(serialize_trace(t) == serialize_trace(t));
    }
    SUBCASE("re-serializing a parsed file reproduces the bytes") {
        const auto bytes = serialize_trace(t);
        std::istringstream in(bytes);
        const auto back = parse_trace(in);
        CHECK(serialize_trace(back) == bytes);
    }
    SUBCASE("NaN rejected before writing") {
        t.samples[1] = std::nan("");
        const auto path = temp_dir() / "never_written.csv";
        std::error_code ec;
        fs::remove(path, ec);
        CHECK_THROWS(write_trace(t, path));
        CHECK_FALSE(fs::exists(path));
    }
}

TEST_CASE("parse errors") {
    SUBCASE("missing dt names the field") {
        std::istringstream in("# ringchan-trace v1\n1.0\n2.0\n");
        CHECK_THROWS_WITH_AS(parse_trace(in), doctest::Contains("dt"), ParseError);
    }
    SUBCASE("bad number reports the line") {
        std::istringstream in("# ringchan-trace v1\n# dt = 0.1\n1.0\nnope\n");
        CHECK_THROWS(parse_trace(in));
    }
    SUBCASE("single sample fails validation") {
        std::istringstream in("# ringchan-trace v1\n# dt = 0.1\n1.0\n");
        CHECK_THROWS_WITH_AS(parse_trace(in), doctest::Contains("2 samples"),
                             std::runtime_error);
    }
    SUBCASE("wrong magic rejected") {
        std::istringstream in("# other-format v9\n1.0\n2.0\n");
        CHECK_THROWS_AS(parse_trace(in), ParseError);
    }
    SUBCASE("nonpositive dt rejected") {
        std::istringstream in("# ringchan-trace v1\n# dt = -0.1\n1.0\n2.0\n");
        CHECK_THROWS(parse_trace(in));
    }
    SUBCASE("missing file surfaces the path") {
        CHECK_THROWS_WITH_AS(read_trace("/no/such/file.csv"),
                             doctest::Contains("/no/such/file.csv"), std::runtime_error);
    }
}

TEST_CASE("fit report round trip and revalidation") {
    const auto dir = temp_dir();
    FitReport r;
    r.trace_path = "trace_0.csv";
    r.model_kind = "acc";
    r.parameters = {{"a", 0.6}, {"b", 0.01}};
    r.rmse = 1.25e-3;
    r.objective = 4.2e-5;
    r.seed = 77;
    r.n_starts = 8;
    r.converged = true;

    const auto path = dir / "report.json";
    write_report(r, path);
    const auto back = read_report(path);
    CHECK(back.model_kind == r.model_kind);
    CHECK(back.rmse == r.rmse);
    CHECK(back.parameters.at("a").get<double>() == 0.6);
    CHECK(back.seed == r.seed);

    SUBCASE("rmse can be recomputed from the referenced parameters") {
        const AccumulationParams p(back.parameters.at("a").get<double>(),
                                   back.parameters.at("b").get<double>());
        const auto truth = model_acc(AccumulationParams(0.6, 0.01), 1.0, 100);
        const auto model = model_acc(p, 1.0, 100);
        CHECK(rmse(truth, model) <= 1e-12);
    }
}

TEST_CASE("synthetic dataset") {
    const auto dir = temp_dir() / "synth";
    std::error_code ec;
    fs::remove_all(dir, ec);

    SynthSpec spec;
    spec.noise_sigma = 0.02;
    for (int i = 0; i < 3; ++i) {
        SynthEntry e{MixtureParams({{1.0, ChannelParams(5e-6, 3.5e-3, 0.034, 0.017)}}),
                     InjectionParams(2.0, 0.5)};
        e.dt = 0.1;
        e.n_samples = 120;
        e.egg = i + 1;
        spec.entries.push_back(std::move(e));
    }

    SUBCASE("fixed seed reproduces identical bytes") {
        const auto paths = synth_dataset(spec, 5, dir);
        std::ostringstream first;
        first << std::ifstream(paths[0]).rdbuf();
        synth_dataset(spec, 5, dir);
        std::ostringstream second;
        second << std::ifstream(paths[0]).rdbuf();
        CHECK(first.str() == second.str());
        CHECK(fs::exists(dir / "ground_truth.json"));
    }
    SUBCASE("zero noise equals the forward model") {
        auto clean_spec = spec;
        clean_spec.noise_sigma = 0.0;
        const auto paths = synth_dataset(clean_spec, 5, dir);
        const auto trace = read_trace(paths[1]);
        const auto expect = model_dist(clean_spec.entries[1].mixture,
                                       clean_spec.entries[1].injection, 0.1, 120);
        CHECK(trace.samples == expect.samples);
    }
}
