#pragma once

#include "rbrcap/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace rbrcap {

// Solution of the online power-control program
//   maximize sum_i p(1-p)^(i-1) * r(eps_i)  s.t.  eps_i >= 0, sum eps_i <= b_bar.
//
// eps holds the strictly positive per-age energies (eps[i] is spent at age
// i+1); ages beyond n_tilde receive zero. lambda_tilde is the multiplier of
// the total-energy constraint for the natural-log objective, so the water
// level is 1 + eps_i = p(1-p)^(i-1) / (2*lambda_tilde) on active slots. For
// the degenerate b_bar == 0 input the allocation is empty and n_tilde == 0.
struct AllocationSolution {
    std::vector<double> eps;
    long n_tilde = 0;
    double lambda_tilde = 0.0;
    RateValue value_bits{};
};

// Smallest N >= 1 with (1-p)^N * (1 + p*(b_bar + N)) < 1. The left side
// decays geometrically, so the loop always terminates for valid params; the
// cap only guards against parameter pathology.
inline long find_n_tilde(const ChannelParams& params) {
    const double q = 1.0 - params.p;
    double q_pow = 1.0;
    for (long n = 1; n <= 1000000000L; ++n) {
        q_pow *= q;
        if (q_pow * (1.0 + params.p * (params.b_bar + static_cast<double>(n))) < 1.0)
            return n;
    }
    throw convergence_error("find_n_tilde: iteration cap exceeded");
}

// Closed-form KKT solution:
//   eps_i = (N~ + b_bar) * p(1-p)^(i-1) / (1 - (1-p)^N~) - 1,  i <= N~,
//   lambda~ = (1 - (1-p)^N~) / (2(b_bar + N~)).
// The objective is reported from direct summation of p(1-p)^(i-1) r(eps_i),
// which stays valid at p == 1.
inline AllocationSolution optimal_allocation(const ChannelParams& params) {
    AllocationSolution sol;
    if (params.b_bar == 0.0) return sol;

    const double q = 1.0 - params.p;
    const long n_tilde = find_n_tilde(params);
    const double q_n = std::pow(q, static_cast<double>(n_tilde));
    const double denom = 1.0 - q_n;
    const double scale =
        (static_cast<double>(n_tilde) + params.b_bar) * params.p / denom;

    sol.eps.reserve(static_cast<std::size_t>(n_tilde));
    double q_pow = 1.0;
    double value = 0.0;
    for (long i = 1; i <= n_tilde; ++i) {
        const double e = scale * q_pow - 1.0;
        sol.eps.push_back(e);
        value += params.p * q_pow * rate(std::max(e, 0.0)).bits;
        q_pow *= q;
    }
    // When the threshold inequality holds with equality at n_tilde - 1 (for
    // example p = 0.5, b_bar = 1) the last slot is degenerate: its optimal
    // energy is exactly zero. Drop it so the allocation holds strictly
    // positive entries; the multiplier is unchanged at such boundary points.
    while (!sol.eps.empty() && sol.eps.back() <= 0.0) sol.eps.pop_back();
    sol.n_tilde = static_cast<long>(sol.eps.size());
    sol.lambda_tilde = denom / (2.0 * (params.b_bar + static_cast<double>(n_tilde)));
    sol.value_bits = RateValue{value};
    return sol;
}

// Closed-form expression for the optimal value. Cross-check only: at p == 1
// the second term is a 0*log(0) indeterminate form, so that input is
// rejected in favor of optimal_allocation.
inline RateValue closed_form_value(const ChannelParams& params) {
    if (params.p == 1.0)
        throw std::domain_error(
            "closed_form_value is undefined at p = 1; use optimal_allocation");
    if (params.b_bar == 0.0) return RateValue{0.0};

    const double q = 1.0 - params.p;
    const long n_tilde = find_n_tilde(params);
    const double n = static_cast<double>(n_tilde);
    const double q_n = std::pow(q, n);
    const double first =
        0.5 * (1.0 - q_n) *
        std::log2(params.p * (params.b_bar + n) / (1.0 - q_n));
    const double second =
        (q - q_n * (q + n * params.p)) / (2.0 * params.p) * std::log2(q);
    return RateValue{first + second};
}

namespace detail {

// Euclidean projection onto {x >= 0, sum x <= budget}. When the clamped sum
// exceeds the budget this reduces to the usual sorted-threshold simplex
// projection.
inline void project_capped_simplex(std::vector<double>& v, double budget,
                                   std::vector<double>& scratch) {
    double clamped_sum = 0.0;
    for (double& x : v) {
        if (x < 0.0) x = 0.0;
        clamped_sum += x;
    }
    if (clamped_sum <= budget) return;

    scratch.assign(v.begin(), v.end());
    std::sort(scratch.begin(), scratch.end(), std::greater<>());
    double prefix = 0.0;
    double tau = 0.0;
    for (std::size_t k = 0; k < scratch.size(); ++k) {
        prefix += scratch[k];
        const double t = (prefix - budget) / static_cast<double>(k + 1);
        if (k + 1 == scratch.size() || scratch[k + 1] <= t) {
            tau = t;
            break;
        }
    }
    for (double& x : v) x = std::max(x - tau, 0.0);
}

}  // namespace detail

// Independent numeric oracle for the same concave program: projected gradient
// ascent with fixed step 1/L, L = p/(2 ln 2). Deterministic by construction
// (uniform feasible start, no line search). Stops when the per-iteration
// objective improvement falls below tol.
inline AllocationSolution numeric_oracle_allocation(const ChannelParams& params,
                                                    long horizon, double tol) {
    if (!(tol > 0.0)) throw std::invalid_argument("tol must be positive");
    if (horizon < find_n_tilde(params) + 10)
        throw std::invalid_argument("horizon must be at least n_tilde + 10");

    const std::size_t h = static_cast<std::size_t>(horizon);
    AllocationSolution sol;
    if (params.b_bar == 0.0) {
        sol.eps.assign(h, 0.0);
        return sol;
    }

    const double q = 1.0 - params.p;
    std::vector<double> w(h);
    {
        double q_pow = 1.0;
        for (std::size_t i = 0; i < h; ++i) {
            w[i] = params.p * q_pow;
            q_pow *= q;
        }
    }

    const auto objective = [&](const std::vector<double>& e) {
        double f = 0.0;
        for (std::size_t i = 0; i < h; ++i)
            f += w[i] * 0.5 * std::log1p(e[i]) * kInvLn2;
        return f;
    };

    const double step = 2.0 * std::numbers::ln2 / params.p;  // 1/L
    std::vector<double> eps(h, params.b_bar / static_cast<double>(h));
    std::vector<double> scratch;
    double obj = objective(eps);

    bool converged = false;
    const long max_iterations = 1000000;
    for (long it = 0; it < max_iterations; ++it) {
        for (std::size_t i = 0; i < h; ++i)
            eps[i] += step * w[i] * 0.5 * kInvLn2 / (1.0 + eps[i]);
        detail::project_capped_simplex(eps, params.b_bar, scratch);
        const double next = objective(eps);
        const double improvement = next - obj;
        obj = next;
        if (improvement < tol) {
            converged = true;
            break;
        }
    }
    if (!converged)
        throw convergence_error(
            "numeric_oracle_allocation: improvement stagnated above tol");

    sol.eps = eps;
    long n_tilde = 0;
    for (std::size_t i = 0; i < h; ++i)
        if (eps[i] > 1e-12) n_tilde = static_cast<long>(i) + 1;
    sol.n_tilde = n_tilde;

    // Multiplier estimate from the active slots (natural-log units).
    double lambda = 0.0;
    long active = 0;
    for (std::size_t i = 0; i < h; ++i) {
        if (eps[i] > 1e-12) {
            lambda += w[i] / (2.0 * (1.0 + eps[i]));
            ++active;
        }
    }
    sol.lambda_tilde = active > 0 ? lambda / static_cast<double>(active) : 0.0;

    double value = 0.0;
    for (std::size_t i = 0; i < h; ++i)
        value += w[i] * 0.5 * std::log1p(eps[i]) * kInvLn2;
    sol.value_bits = RateValue{value};
    return sol;
}

}  // namespace rbrcap
