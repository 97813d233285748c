#include <catch2/catch_amalgamated.hpp>

#include "rbrcap/power_control.hpp"

#include <cmath>

using namespace rbrcap;

namespace {

// Brute-force scan of the threshold inequality, independent of the library's
// incremental loop.
long n_tilde_by_scan(double p, double b_bar) {
    for (long n = 1;; ++n) {
        const double lhs = std::pow(1.0 - p, static_cast<double>(n)) *
                           (1.0 + p * (b_bar + static_cast<double>(n)));
        if (lhs < 1.0) return n;
        REQUIRE(n < 100000000L);
    }
}

}  // namespace

TEST_CASE("threshold search", "[power_control]") {
    CHECK(find_n_tilde(validate_params(1.0, 5.0)) == 1);
    CHECK(find_n_tilde(validate_params(1.0, 0.0)) == 1);
    CHECK(find_n_tilde(validate_params(0.5, 2.0)) == 2);
    CHECK(find_n_tilde(validate_params(0.01, 100.0)) ==
          n_tilde_by_scan(0.01, 100.0));
    CHECK(find_n_tilde(validate_params(0.01, 1.0)) == n_tilde_by_scan(0.01, 1.0));
}

TEST_CASE("threshold is minimal", "[power_control]") {
    for (double p : {0.01, 0.05, 0.1, 0.3, 0.5, 0.9}) {
        for (double b : {0.1, 1.0, 10.0, 100.0, 1000.0}) {
            const long n = find_n_tilde(validate_params(p, b));
            const auto lhs = [&](long k) {
                return std::pow(1.0 - p, static_cast<double>(k)) *
                       (1.0 + p * (b + static_cast<double>(k)));
            };
            CHECK(lhs(n) < 1.0);
            if (n >= 2) CHECK(lhs(n - 1) >= 1.0);
        }
    }
}

TEST_CASE("hand-checked allocation at p=0.5, b_bar=2", "[power_control]") {
    const auto sol = optimal_allocation(validate_params(0.5, 2.0));
    REQUIRE(sol.n_tilde == 2);
    REQUIRE(sol.eps.size() == 2);
    CHECK(sol.eps[0] == Catch::Approx(5.0 / 3.0).margin(1e-12));
    CHECK(sol.eps[1] == Catch::Approx(1.0 / 3.0).margin(1e-12));
    CHECK(sol.lambda_tilde == Catch::Approx(0.09375).margin(1e-15));
    // 0.25*log2(8/3) + 0.125*log2(4/3), substituted by hand.
    CHECK(sol.value_bits.bits ==
          Catch::Approx(0.4056390622295664).margin(1e-12));
}

TEST_CASE("single-slot epoch at p=1 spends everything", "[power_control]") {
    const auto sol = optimal_allocation(validate_params(1.0, 3.0));
    REQUIRE(sol.n_tilde == 1);
    CHECK(sol.eps[0] == Catch::Approx(3.0).margin(1e-12));
    CHECK(sol.value_bits.bits == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("degenerate b_bar=0 allocation is empty", "[power_control]") {
    const auto sol = optimal_allocation(validate_params(0.5, 0.0));
    CHECK(sol.eps.empty());
    CHECK(sol.n_tilde == 0);
    CHECK(sol.value_bits.bits == 0.0);
}

TEST_CASE("allocation invariants on a parameter grid", "[power_control]") {
    for (double p : {0.01, 0.05, 0.1, 0.3, 0.5, 0.9, 1.0}) {
        for (double b : {0.1, 1.0, 10.0, 100.0}) {
            const auto params = validate_params(p, b);
            const auto sol = optimal_allocation(params);
            REQUIRE(static_cast<long>(sol.eps.size()) == sol.n_tilde);

            double sum = 0.0;
            for (std::size_t i = 0; i < sol.eps.size(); ++i) {
                CHECK(sol.eps[i] > 0.0);
                if (i > 0) CHECK(sol.eps[i] < sol.eps[i - 1]);
                sum += sol.eps[i];
            }
            CHECK(sum == Catch::Approx(b).epsilon(1e-10));

            // KKT stationarity: p(1-p)^(i-1) / (2(1+eps_i)) equals the
            // multiplier on active slots; inactive slots have smaller reward
            // coefficients than 2*lambda.
            const double q = 1.0 - p;
            for (std::size_t i = 0; i < sol.eps.size(); ++i) {
                const double stat = p * std::pow(q, static_cast<double>(i)) /
                                    (2.0 * (1.0 + sol.eps[i]));
                CHECK(stat == Catch::Approx(sol.lambda_tilde).margin(1e-10));
            }
            // Strict except at exact threshold boundaries (such as p=0.5,
            // b_bar=1) where the first inactive slot is degenerate.
            const double next_weight =
                p * std::pow(q, static_cast<double>(sol.n_tilde));
            CHECK(next_weight <= 2.0 * sol.lambda_tilde * (1.0 + 1e-12));
        }
    }
}

TEST_CASE("closed form agrees with direct summation", "[power_control]") {
    for (double p : {0.01, 0.1, 0.5, 0.9, 0.99}) {
        for (double b : {0.1, 1.0, 2.0, 10.0, 100.0, 1000.0}) {
            const auto params = validate_params(p, b);
            const double summed = optimal_allocation(params).value_bits.bits;
            const double closed = closed_form_value(params).bits;
            CHECK(closed == Catch::Approx(summed).epsilon(1e-10));
        }
    }
    CHECK_THROWS_AS(closed_form_value(validate_params(1.0, 1.0)),
                    std::domain_error);
}

TEST_CASE("monotonicity of the optimal value", "[power_control][property]") {
    const double ps[] = {0.01, 0.05, 0.1, 0.3, 0.5, 0.9, 1.0};
    const double bs[] = {0.1, 1.0, 10.0, 100.0};
    for (double b : bs) {
        double prev = -1.0;
        for (double p : ps) {
            const double v = optimal_allocation(validate_params(p, b)).value_bits.bits;
            CHECK(v >= prev - 1e-12);
            prev = v;
        }
    }
    for (double p : ps) {
        double prev = -1.0;
        for (double b : bs) {
            const double v = optimal_allocation(validate_params(p, b)).value_bits.bits;
            CHECK(v > prev);
            prev = v;
        }
    }
}

TEST_CASE("numeric oracle reproduces the closed form", "[power_control][oracle]") {
    const auto params = validate_params(0.5, 2.0);
    const auto oracle = numeric_oracle_allocation(params, 50, 1e-16);
    CHECK(oracle.eps[0] == Catch::Approx(5.0 / 3.0).margin(1e-5));
    CHECK(oracle.eps[1] == Catch::Approx(1.0 / 3.0).margin(1e-5));
    for (std::size_t i = 2; i < oracle.eps.size(); ++i)
        CHECK(oracle.eps[i] <= 1e-8);
    CHECK(oracle.value_bits.bits ==
          Catch::Approx(closed_form_value(params).bits).margin(1e-6));
}

TEST_CASE("numeric oracle degenerate cases", "[power_control][oracle]") {
    const auto zero = numeric_oracle_allocation(validate_params(0.3, 0.0), 40, 1e-12);
    for (double e : zero.eps) CHECK(e == 0.0);
    CHECK(zero.value_bits.bits == 0.0);

    const auto p1 = numeric_oracle_allocation(validate_params(1.0, 3.0), 20, 1e-16);
    CHECK(p1.eps[0] == Catch::Approx(3.0).margin(1e-5));
    for (std::size_t i = 1; i < p1.eps.size(); ++i) CHECK(p1.eps[i] <= 1e-6);
}

TEST_CASE("numeric oracle input validation", "[power_control][oracle]") {
    const auto params = validate_params(0.1, 10.0);  // n_tilde = 11
    CHECK_THROWS_AS(numeric_oracle_allocation(params, 12, 1e-12),
                    std::invalid_argument);
    CHECK_THROWS_AS(numeric_oracle_allocation(params, 40, 0.0),
                    std::invalid_argument);
}

TEST_CASE("oracle equivalence on a reduced grid", "[power_control][oracle]") {
    // The full grid runs in the acceptance suite; this keeps unit runs quick.
    for (double p : {0.1, 0.5}) {
        for (double b : {1.0, 10.0}) {
            const auto params = validate_params(p, b);
            const auto closed = optimal_allocation(params);
            const auto oracle = numeric_oracle_allocation(
                params, find_n_tilde(params) + 20, 1e-17);
            CHECK(oracle.value_bits.bits ==
                  Catch::Approx(closed.value_bits.bits).margin(1e-6));
            for (std::size_t i = 0; i < oracle.eps.size(); ++i) {
                const double expected =
                    i < closed.eps.size() ? closed.eps[i] : 0.0;
                CHECK(oracle.eps[i] == Catch::Approx(expected).margin(1e-5));
            }
        }
    }
}
