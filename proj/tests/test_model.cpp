#include <catch2/catch_amalgamated.hpp>

#include "rbrcap/model.hpp"
#include "rbrcap/simulator.hpp"

#include <cmath>

using namespace rbrcap;

TEST_CASE("parameter validation", "[model]") {
    CHECK_NOTHROW(validate_params(0.5, 2.0));
    CHECK_NOTHROW(validate_params(1.0, 0.0));  // degenerate but valid
    CHECK_THROWS_AS(validate_params(0.0, 2.0), std::domain_error);
    CHECK_THROWS_AS(validate_params(-0.1, 2.0), std::domain_error);
    CHECK_THROWS_AS(validate_params(1.5, 2.0), std::domain_error);
    CHECK_THROWS_AS(validate_params(0.5, -1.0), std::domain_error);
    CHECK_THROWS_AS(validate_params(std::nan(""), 2.0), std::domain_error);
    CHECK_THROWS_AS(validate_params(0.5, std::numeric_limits<double>::infinity()),
                    std::domain_error);
}

TEST_CASE("battery step follows the recursion", "[model]") {
    const auto params = validate_params(0.5, 2.0);

    const auto drained = battery_step({2.0, 1}, 1.5, false, params);
    CHECK(drained.level == Catch::Approx(0.5).margin(1e-15));
    CHECK(drained.age == 2);

    const auto recharged = battery_step({0.5, 2}, 0.5, true, params);
    CHECK(recharged.level == 2.0);
    CHECK(recharged.age == 1);

    CHECK_THROWS_AS(battery_step({1.0, 3}, 1.2, false, params), energy_violation);
    CHECK_THROWS_AS(battery_step({1.0, 1}, -0.5, false, params), std::domain_error);
}

TEST_CASE("recharge resets level and age from any state", "[model]") {
    const auto params = validate_params(0.3, 5.0);
    SplitMix64 rng(7);
    for (int i = 0; i < 200; ++i) {
        const double level = rng.uniform() * params.b_bar;
        const long age = 1 + static_cast<long>(rng.uniform() * 20);
        const double spent = rng.uniform() * level;
        const auto next = battery_step({level, age}, spent, true, params);
        CHECK(next.level == params.b_bar);
        CHECK(next.age == 1);
    }
}

TEST_CASE("battery level stays within [0, b_bar] on admissible sequences",
          "[model][property]") {
    const auto params = validate_params(0.2, 3.0);
    SplitMix64 rng(42);
    BatteryState state{params.b_bar, 1};
    for (int t = 0; t < 20000; ++t) {
        const double spent = rng.uniform() * state.level;
        const bool recharge = rng.uniform() < params.p;
        state = battery_step(state, spent, recharge, params);
        REQUIRE(state.level >= 0.0);
        REQUIRE(state.level <= params.b_bar);
        REQUIRE(state.age >= 1);
    }
}

TEST_CASE("rate matches half log2(1+P)", "[model]") {
    CHECK(rate(0.0).bits == 0.0);
    CHECK(rate(1.0).bits == Catch::Approx(0.5).margin(1e-15));
    CHECK(rate(3.0).bits == Catch::Approx(1.0).margin(1e-15));
    CHECK_THROWS_AS(rate(-0.1), std::domain_error);
}

TEST_CASE("rate is strictly increasing and concave", "[model][property]") {
    SplitMix64 rng(3);
    for (int i = 0; i < 500; ++i) {
        double a = rng.uniform() * 50.0;
        double b = rng.uniform() * 50.0;
        if (a == b) continue;
        if (a > b) std::swap(a, b);
        CHECK(rate(a).bits < rate(b).bits);
        const double mid = rate(0.5 * (a + b)).bits;
        CHECK(mid >= 0.5 * (rate(a).bits + rate(b).bits) - 1e-12);
    }
}

TEST_CASE("bound gap constant", "[model]") {
    // 0.5*log2(pi e / 2), quoted as roughly 1.05 bits.
    CHECK(kHalfLog2PiEOver2 == Catch::Approx(1.047095585181).margin(1e-10));
    CHECK(kHalfLog2PiEOver6 == Catch::Approx(0.254614334820).margin(1e-10));
}
