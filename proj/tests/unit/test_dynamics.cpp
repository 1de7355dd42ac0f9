#include <cmath>
#include <numbers>

#include "doctest.h"
#include "shield/dynamics.hpp"
#include "shield/errors.hpp"
#include "shield/rng.hpp"

using namespace shield;

TEST_CASE("step advances along the old heading") {
    WorldConfig cfg;
    auto s = step({0, 0, 0}, ActionId(1), cfg);
    CHECK(s.px == doctest::Approx(0.05));
    CHECK(s.py == doctest::Approx(0.0));
    CHECK(s.theta == doctest::Approx(0.0));

    s = step({0, 0, std::numbers::pi / 2}, ActionId(1), cfg);
    CHECK(s.px == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(s.py == doctest::Approx(0.05));
    CHECK(s.theta == doctest::Approx(std::numbers::pi / 2));

    s = step({0, 0, 0}, ActionId(2), cfg);
    CHECK(s.px == doctest::Approx(0.05));
    CHECK(s.py == 0.0);
    CHECK(s.theta == doctest::Approx(0.0625));
}

TEST_CASE("action ids are total over {0,1,2}") {
    CHECK(ActionId(0).turn_rate() == -1.25);
    CHECK(ActionId(1).turn_rate() == 0.0);
    CHECK(ActionId(2).turn_rate() == 1.25);
    CHECK(ActionId::straight().index() == 1);
    CHECK_THROWS_AS(ActionId(3), Error);
    CHECK_THROWS_AS(ActionId(-1), Error);
}

TEST_CASE("heading wraps into [-pi, pi)") {
    WorldConfig cfg;
    const double delta = 0.01;
    auto s = step({0, 0, std::numbers::pi - delta}, ActionId(2), cfg);
    CHECK(s.theta >= -std::numbers::pi);
    CHECK(s.theta < std::numbers::pi);
    CHECK(s.theta == doctest::Approx(-std::numbers::pi - delta + 0.0625));
    CHECK(wrap_angle(std::numbers::pi) == -std::numbers::pi);
    CHECK(wrap_angle(-std::numbers::pi) == -std::numbers::pi);
    CHECK(wrap_angle(7.0 * std::numbers::pi) == doctest::Approx(-std::numbers::pi));

    Rng rng(3);
    for (int i = 0; i < 10000; ++i) {
        const double t = (uniform01(rng) - 0.5) * 200.0;
        const double w = wrap_angle(t);
        REQUIRE(w >= -std::numbers::pi);
        REQUIRE(w < std::numbers::pi);
        REQUIRE(std::remainder(w - t, 2.0 * std::numbers::pi) == doctest::Approx(0.0).epsilon(1e-9));
    }
}

TEST_CASE("step is deterministic and finite") {
    WorldConfig cfg;
    Rng rng(5);
    for (int i = 0; i < 1000; ++i) {
        DubinsState s{uniform01(rng) * 4 - 2, uniform01(rng) * 4 - 2, wrap_angle(uniform01(rng) * 7)};
        ActionId a(uniform_int(rng, 0, 2));
        const auto s1 = step(s, a, cfg);
        const auto s2 = step(s, a, cfg);
        REQUIRE(s1 == s2);
        REQUIRE(std::isfinite(s1.px));
        REQUIRE(std::isfinite(s1.py));
        REQUIRE(std::isfinite(s1.theta));
    }
}

TEST_CASE("margin examples") {
    const auto circle = FailureSpec::circle(0, 0, 0.5);
    CHECK(margin({0, 0, 0}, circle) == doctest::Approx(-0.5));
    CHECK(margin({0.5, 0, 0}, circle) == doctest::Approx(0.0));
    CHECK(margin({0, 0.7, 0}, FailureSpec::band(0.6)) == doctest::Approx(-0.1));
}

TEST_CASE("margin sign agrees with membership and union is pointwise min") {
    const std::vector<FailureSpec> specs{
        FailureSpec::circle(0.2, -0.1, 0.5), FailureSpec::band(0.6),
        FailureSpec::any_of({FailureSpec::circle(0.5, 0.5, 0.3), FailureSpec::band(0.8)})};
    Rng rng(11);
    for (const auto& f : specs) {
        for (int i = 0; i < 10000; ++i) {
            DubinsState s{uniform01(rng) * 3 - 1.5, uniform01(rng) * 3 - 1.5, 0.0};
            REQUIRE((margin(s, f) < 0.0) == in_failure(s, f));
        }
    }
    const auto& u = std::get<FailureUnion>(specs[2].shape);
    for (int i = 0; i < 10000; ++i) {
        DubinsState s{uniform01(rng) * 3 - 1.5, uniform01(rng) * 3 - 1.5, 0.0};
        const double expected = std::min(margin(s, u.members[0]), margin(s, u.members[1]));
        REQUIRE(margin(s, specs[2]) == expected);
    }
}

TEST_CASE("bounding box is closed") {
    WorldConfig cfg;
    CHECK(in_bbox({0.5, 0.5, 0}, cfg));
    CHECK_FALSE(in_bbox({1.1, 0, 0}, cfg));
    CHECK(in_bbox({1.0, -1.0, 0}, cfg));
}

TEST_CASE("invalid failure specs are rejected") {
    CHECK_THROWS_AS(validate(FailureSpec::circle(0, 0, 0)), Error);
    CHECK_THROWS_AS(validate(FailureSpec::band(-1)), Error);
    CHECK_THROWS_AS(validate(FailureSpec::any_of({})), Error);
    WorldConfig cfg;
    cfg.dt = 0;
    CHECK_THROWS_AS(validate(cfg), Error);
}
