#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "ringchan/channel.hpp"

using namespace ringchan;

namespace {
// Micro-scale loop used throughout: 1 mm loop, 100 um radius, 50 um/s.
ChannelParams micro_loop(double d_eff, double d_rx = 0.39e-3) {
    return ChannelParams(d_eff, 50e-6, 1e-3, d_rx);
}
const double d_eff_low = dispersion_coefficient({1.25e-9, 100e-6, 50e-6});
const double d_eff_high = dispersion_coefficient({5e-9, 100e-6, 50e-6});
}  // namespace

TEST_CASE("dispersion coefficient") {
    // r0*v/D = 4 -> D_eff = D * (1 + 16/48)
    CHECK(d_eff_low == doctest::Approx(1.25e-9 * (1.0 + 16.0 / 48.0)).epsilon(1e-12));
    CHECK(d_eff_low == doctest::Approx(1.6667e-9).epsilon(1e-4));
    CHECK(d_eff_high == doctest::Approx(5e-9 * (1.0 + 1.0 / 48.0)).epsilon(1e-12));

    SUBCASE("no-dispersion limit") {
        const double d = dispersion_coefficient({1e-9, 1e-9, 1e-9});
        CHECK(d == doctest::Approx(1e-9).epsilon(1e-12));
    }
    SUBCASE("nonpositive input rejected") {
        CHECK_THROWS_AS(dispersion_coefficient({0.0, 1e-6, 1e-6}), std::domain_error);
        CHECK_THROWS_AS(dispersion_coefficient({1e-9, -1.0, 1e-6}), std::domain_error);
    }
}

TEST_CASE("channel params invariants") {
    CHECK_THROWS(ChannelParams(0.0, 1e-6, 1e-3, 0.0));
    CHECK_THROWS(ChannelParams(1e-9, 1e-6, 0.0, 0.0));
    CHECK_THROWS(ChannelParams(1e-9, 1e-6, 1e-3, 1e-3));  // d_rx == l_eff

    SUBCASE("negative velocity normalizes to the mirrored ring") {
        const ChannelParams q(1e-9, -50e-6, 1e-3, 0.39e-3);
        CHECK(q.v_eff == 50e-6);
        CHECK(q.d_rx == doctest::Approx(0.61e-3));
    }
}

TEST_CASE("normal concentration") {
    const auto q = micro_loop(d_eff_low);

    SUBCASE("peak at the mean") {
        const double t = 3.0;
        CHECK(normal_concentration(q, q.v_eff * t, t) ==
              doctest::Approx(1.0 / std::sqrt(4.0 * M_PI * q.d_eff * t)).epsilon(1e-14));
    }
    SUBCASE("matches direct formula evaluation at the first-peak point") {
        const double t = 7.16, x = 0.39e-3;
        const double var = 2.0 * q.d_eff * t;
        const double expected =
            std::exp(-(x - q.v_eff * t) * (x - q.v_eff * t) / (2.0 * var)) /
            std::sqrt(2.0 * M_PI * var);
        CHECK(normal_concentration(q, x, t) == doctest::Approx(expected).epsilon(1e-12));
    }
    SUBCASE("symmetry about the mean") {
        const double t = 5.0, mu = q.v_eff * t, delta = 1e-4;
        CHECK(normal_concentration(q, mu + delta, t) ==
              doctest::Approx(normal_concentration(q, mu - delta, t)).epsilon(1e-14));
    }
    SUBCASE("unit mass over the line") {
        const double t = 2.0;
        const double mass = oracles::integrate(
            [&](double x) { return normal_concentration(q, x, t); }, q.v_eff * t - 8e-3,
            q.v_eff * t + 8e-3, 1e-14);
        CHECK(mass == doctest::Approx(1.0).epsilon(1e-10));
    }
    SUBCASE("rejects t <= 0") {
        CHECK_THROWS_AS(normal_concentration(q, 0.0, 0.0), std::domain_error);
        CHECK_THROWS_AS(normal_concentration(q, 0.0, -1.0), std::domain_error);
    }
}

TEST_CASE("wrapped concentration") {
    const auto q = micro_loop(d_eff_low);

    SUBCASE("domain errors") {
        CHECK_THROWS_AS(wrapped_concentration(q, 0.0, 0.0), std::domain_error);
        CHECK_THROWS_AS(wrapped_concentration(q, -1e-4, 1.0), std::domain_error);
        CHECK_THROWS_AS(wrapped_concentration(q, 1.1e-3, 1.0), std::domain_error);
    }
    SUBCASE("uniform steady state") {
        for (double x : {0.0, 0.25e-3, 0.84e-3})
            CHECK(wrapped_concentration(q, x, 5000.0) ==
                  doctest::Approx(1.0 / q.l_eff).epsilon(1e-6));
    }
    SUBCASE("integrates to one at all times") {
        for (double t : {0.1, 1.0, 10.0, 100.0}) {
            const double mass = oracles::integrate(
                [&](double x) { return wrapped_concentration(q, x, t); }, 0.0, q.l_eff, 1e-13);
            CHECK(mass == doctest::Approx(1.0).epsilon(1e-9));
        }
    }
    SUBCASE("matches the brute-force image sum at small spread") {
        // sigma_bar <= 0.5 here, so k in {-1, 0, 1} suffices on the line.
        const double t = 0.5;
        for (double x : {0.1e-3, 0.39e-3, 0.9e-3}) {
            const double expected = oracles::image_sum(q.d_eff, q.v_eff, q.l_eff, x, t, 1);
            CHECK(wrapped_concentration(q, x, t, 1e-12) ==
                  doctest::Approx(expected).epsilon(1e-10));
        }
    }
    SUBCASE("periodic boundary holds exactly") {
        for (double t : {0.2, 3.0, 40.0})
            CHECK(wrapped_concentration(q, 0.0, t) == wrapped_concentration(q, q.l_eff, t));
    }
    SUBCASE("k = 0 truncation with lambda = 1 reproduces the free-space form") {
        // A loop so large that wrapping is negligible, evaluated where the
        // images vanish: the wrapped value equals the plain Gaussian.
        const ChannelParams big(1e-9, 1e-6, 1e3, 1.0);
        const double t = 10.0;
        CHECK(wrapped_concentration(big, 1e-4, t) ==
              doctest::Approx(normal_concentration(big, 1e-4, t)).epsilon(1e-12));
    }
    SUBCASE("nonnegative everywhere") {
        for (double t : {0.01, 1.0, 30.0})
            for (int i = 0; i <= 20; ++i)
                CHECK(wrapped_concentration(q, q.l_eff * i / 20.0, t) >= 0.0);
    }
}

TEST_CASE("wrapped solution satisfies the transport equation") {
    // Finite-difference residual of dt p - D dxx p + v dx p shrinks O(h^2).
    const auto q = micro_loop(d_eff_low);
    auto residual = [&](double h_frac) {
        const double hx = q.l_eff * h_frac;
        const double ht = 0.05 * h_frac;
        double worst = 0.0;
        for (double t : {2.0, 5.0}) {
            for (int i = 2; i <= 18; ++i) {
                const double x = q.l_eff * i / 20.0;
                const double p0 = wrapped_concentration(q, x, t);
                const double dt_p =
                    (wrapped_concentration(q, x, t + ht) - wrapped_concentration(q, x, t - ht)) /
                    (2.0 * ht);
                const double dx_p =
                    (wrapped_concentration(q, x + hx, t) - wrapped_concentration(q, x - hx, t)) /
                    (2.0 * hx);
                const double dxx_p = (wrapped_concentration(q, x + hx, t) - 2.0 * p0 +
                                      wrapped_concentration(q, x - hx, t)) /
                                     (hx * hx);
                worst = std::max(worst, std::abs(dt_p - q.d_eff * dxx_p + q.v_eff * dx_p));
            }
        }
        return worst;
    };
    const double coarse = residual(1e-2);
    const double fine = residual(5e-3);
    CHECK(fine < coarse / 3.0);  // ~4x expected for O(h^2)
}

TEST_CASE("peak times") {
    SUBCASE("first-peak prediction on the micro loop") {
        const auto q = micro_loop(d_eff_low);
        const auto tp = peak_times(q, 0);
        CHECK(tp[0] == doctest::Approx(7.16).epsilon(2e-3));
    }
    SUBCASE("numeric argmax agrees within one grid step") {
        const auto q = micro_loop(d_eff_low);
        const double t0 = peak_times(q, 0)[0];
        double best_t = 0.0, best_v = -1.0;
        for (double t = 1e-3; t < 2.0 * t0; t += 1e-3) {
            const double v = wrapped_concentration(q, q.d_rx, t);
            if (v > best_v) {
                best_v = v;
                best_t = t;
            }
        }
        CHECK(std::abs(best_t - t0) <= 2e-3);
    }
    SUBCASE("pure-drift limit") {
        const auto q = micro_loop(d_eff_low * 1e-6);
        CHECK(peak_times(q, 0)[0] == doctest::Approx(q.d_rx / q.v_eff).epsilon(1e-3));
    }
    SUBCASE("strictly increasing in k") {
        const auto q = micro_loop(d_eff_high, 0.84e-3);
        const auto tp = peak_times(q, 5);
        for (std::size_t k = 0; k + 1 < tp.size(); ++k) CHECK(tp[k + 1] > tp[k]);
    }
    SUBCASE("zero velocity rejected") {
        const ChannelParams q(1e-9, 0.0, 1e-3, 0.5e-3);
        CHECK_THROWS_AS(peak_times(q, 3), std::domain_error);
    }
}
