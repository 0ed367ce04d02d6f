#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "minsnr/schedule.hpp"

using namespace minsnr;

namespace {

bool mentions(const std::vector<std::string>& v, const std::string& needle) {
    return std::any_of(v.begin(), v.end(),
                       [&](const std::string& s) { return s.find(needle) != std::string::npos; });
}

Schedule two_point(double a, double s) {
    Schedule sch;
    sch.T = 1;
    sch.alphas = Vector::Constant(1, a);
    sch.sigmas = Vector::Constant(1, s);
    sch.snrs = Vector::Constant(1, snr_from(a, s));
    return sch;
}

}  // namespace

TEST_CASE("cosine schedule endpoints") {
    const auto s = build_cosine_schedule(1000);
    CHECK(s.alpha(1000) == 0.0);
    CHECK(s.sigma(1000) == 1.0);
    CHECK(snr(s, 1000) == 0.0);
    // The t -> 0 limit is clamped; t = 1 is still finite and below the cap.
    CHECK(snr(s, 1) < s.snr_cap);
    CHECK(snr_from(1.0, 0.0, 1e8) == 1e8);
}

TEST_CASE("cosine SNR matches the 50-digit closed form") {
    // Values from tests/oracles/cosine_snr.py (mpmath, 50 digits), s = 0.008, T = 1000.
    const auto s = build_cosine_schedule(1000, 0.008);
    CHECK(snr(s, 500) == doctest::Approx(0.9756738848186401963490216).epsilon(1e-12));
    CHECK(snr(s, 250) == doctest::Approx(5.536467268727170509229038).epsilon(1e-12));
    CHECK(snr(s, 750) == doctest::Approx(0.1685957683370621153176618).epsilon(1e-12));
    CHECK(snr(s, 1) == doctest::Approx(24221.3271556376891607171).epsilon(1e-9));
    CHECK(snr(s, 999) == doctest::Approx(0.000002428772805957484170774965).epsilon(1e-6));
}

TEST_CASE("snr of hand-built pairs") {
    CHECK(snr(two_point(0.6, 0.8), 1) == doctest::Approx(0.5625).epsilon(1e-15));
    const double h = 1.0 / std::sqrt(2.0);
    CHECK(snr(two_point(h, h), 1) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK_THROWS_AS(snr(build_cosine_schedule(10), 0), std::out_of_range);
    CHECK_THROWS_AS(snr(build_cosine_schedule(10), 11), std::out_of_range);
}

TEST_CASE("schedule invariants hold for several lengths") {
    for (int T : {2, 10, 100, 1000, 4000}) {
        for (const auto& s : {build_cosine_schedule(T), build_linear_schedule(T)}) {
            CAPTURE(T);
            CHECK(validate(s).empty());
            for (Step t = 1; t <= T; ++t) {
                const double a = s.alpha(t), g = s.sigma(t);
                REQUIRE(std::abs(a * a + g * g - 1.0) <= 1e-12);
                if (t > 1) {
                    REQUIRE(g >= s.sigma(t - 1));
                    if (snr(s, t - 1) < s.snr_cap) REQUIRE(snr(s, t) < snr(s, t - 1));
                }
            }
        }
    }
}

TEST_CASE("validate reports constructed violations") {
    auto s = build_cosine_schedule(100);
    CHECK(validate(s).empty());

    auto bad_alpha = s;
    bad_alpha.alphas[0] = 2.0;
    const auto v1 = validate(bad_alpha);
    CHECK(v1.size() == 1);
    CHECK(mentions(v1, "alpha^2 + sigma^2 = 1"));

    auto reversed = s;
    reversed.sigmas.reverseInPlace();
    CHECK(mentions(validate(reversed), "sigma monotonicity"));

    Schedule empty;
    empty.T = 3;
    CHECK_FALSE(validate(empty).empty());
}

TEST_CASE("builders reject bad arguments") {
    CHECK_THROWS_AS(build_cosine_schedule(1), std::invalid_argument);
    CHECK_THROWS_AS(build_cosine_schedule(100, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(build_cosine_schedule(100, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(build_cosine_schedule(100, 0.008, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(build_linear_schedule(1), std::invalid_argument);
}

TEST_CASE("schedules are deterministic and rebuild from JSON") {
    const auto a = build_cosine_schedule(1000, 0.01, 1e6);
    const auto b = build_cosine_schedule(1000, 0.01, 1e6);
    CHECK(a.alphas == b.alphas);
    CHECK(a.sigmas == b.sigmas);
    CHECK(a.snrs == b.snrs);

    const auto j = to_json(a);
    CHECK(j.at("kind") == "cosine");
    CHECK(j.size() == 4);
    const auto c = schedule_from_json(j);
    CHECK(c.alphas == a.alphas);
    CHECK(c.snrs == a.snrs);

    const auto lin = schedule_from_json(to_json(build_linear_schedule(50)));
    CHECK(lin.kind == ScheduleKind::Linear);
    CHECK(lin.sigmas == build_linear_schedule(50).sigmas);
}

TEST_CASE("uniform bins cover [1, T]") {
    const auto e = uniform_bin_edges(1000, 10);
    CHECK(e.front() == 1);
    CHECK(e.back() == 1001);
    CHECK(e[1] == 101);
    CHECK(bin_of(e, 1) == 0);
    CHECK(bin_of(e, 100) == 0);
    CHECK(bin_of(e, 101) == 1);
    CHECK(bin_of(e, 1000) == 9);
    CHECK(bin_of(e, 5000) == 9);
    const auto odd = uniform_bin_edges(7, 3);
    CHECK(odd == std::vector<int>{1, 3, 5, 8});
    CHECK_THROWS(uniform_bin_edges(5, 6));
}
