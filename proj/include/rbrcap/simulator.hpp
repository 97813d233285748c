#pragma once

#include "rbrcap/model.hpp"
#include "rbrcap/power_control.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

namespace rbrcap {

// splitmix64: fixed-width integer arithmetic only, so recharge draws are
// reproducible across platforms. Exactly one draw is consumed per simulated
// channel use.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

private:
    std::uint64_t state_;
};

enum class PolicyKind { optimal, greedy, constant_fraction, zero };

inline const char* policy_name(PolicyKind kind) {
    switch (kind) {
        case PolicyKind::optimal: return "optimal";
        case PolicyKind::greedy: return "greedy";
        case PolicyKind::constant_fraction: return "constant_fraction";
        case PolicyKind::zero: return "zero";
    }
    return "unknown";
}

// Online power policy: maps the current battery state to a spend that never
// exceeds the level. The optimal policy spends the precomputed per-age
// allocation, which depends only on the age; feasibility follows from the
// allocation summing to b_bar.
class PowerPolicy {
public:
    double spend(const BatteryState& state, const ChannelParams& params) const {
        switch (kind_) {
            case PolicyKind::zero:
                return 0.0;
            case PolicyKind::greedy:
                return state.level;
            case PolicyKind::constant_fraction:
                return fraction_ * state.level;
            case PolicyKind::optimal:
                if (state.age <= allocation_.n_tilde)
                    return allocation_.eps[static_cast<std::size_t>(state.age - 1)];
                return 0.0;
        }
        (void)params;
        return 0.0;
    }

    PolicyKind kind() const { return kind_; }
    const char* name() const { return policy_name(kind_); }
    const AllocationSolution& allocation() const { return allocation_; }

private:
    friend PowerPolicy make_policy(PolicyKind, const ChannelParams&, double);
    PolicyKind kind_ = PolicyKind::zero;
    double fraction_ = 0.0;
    AllocationSolution allocation_;
};

inline PowerPolicy make_policy(PolicyKind kind, const ChannelParams& params,
                               double fraction = 0.0) {
    PowerPolicy policy;
    policy.kind_ = kind;
    if (kind == PolicyKind::constant_fraction) {
        if (!(fraction >= 0.0 && fraction <= 1.0))
            throw std::domain_error("constant fraction must lie in [0, 1]");
        policy.fraction_ = fraction;
    }
    if (kind == PolicyKind::optimal) policy.allocation_ = optimal_allocation(params);
    return policy;
}

struct SimReport {
    long steps = 0;
    std::uint64_t seed = 0;
    RateValue empirical_throughput_bits{};
    double std_error_bits = 0.0;  // batch-means standard error of the mean
    long epoch_count = 0;
    double mean_epoch_length = 0.0;
    long battery_violations = 0;  // a feasible policy keeps this at 0
};

// Monte-Carlo run of the battery recursion under the given policy. The chain
// starts fully charged (B_0 = b_bar, age 1, the first recharge is forced) and
// draws one Bernoulli(p) recharge per step for the next state. Deterministic
// for a fixed seed. The standard error comes from 100 equal batches.
inline SimReport simulate(const ChannelParams& params, const PowerPolicy& policy,
                          long steps, std::uint64_t seed) {
    if (steps < 10000)
        throw std::invalid_argument("steps must be at least 10^4");

    constexpr long kBatches = 100;
    const long batch_size = steps / kBatches;

    SimReport report;
    report.steps = steps;
    report.seed = seed;

    SplitMix64 rng(seed);
    BatteryState state{params.b_bar, 1};
    const double slack = energy_slack(params);

    double total = 0.0;
    std::vector<double> batch_means;
    batch_means.reserve(kBatches);
    double batch_sum = 0.0;
    long in_batch = 0;
    long epochs = 0;
    double epoch_length_sum = 0.0;

    for (long t = 1; t <= steps; ++t) {
        double spend = policy.spend(state, params);
        if (!(spend >= 0.0) || spend > state.level + slack) {
            ++report.battery_violations;
            throw energy_violation(
                std::string("policy '") + policy.name() +
                "' requested infeasible spend at step " + std::to_string(t));
        }
        spend = std::min(spend, state.level);
        const double r = rate(spend).bits;
        total += r;
        batch_sum += r;
        if (++in_batch == batch_size && batch_means.size() < kBatches) {
            batch_means.push_back(batch_sum / static_cast<double>(batch_size));
            batch_sum = 0.0;
            in_batch = 0;
        }

        const bool recharge = rng.uniform() < params.p;
        if (recharge) {
            ++epochs;
            epoch_length_sum += static_cast<double>(state.age);
        }
        state = battery_step(state, spend, recharge, params);
    }

    report.empirical_throughput_bits =
        RateValue{total / static_cast<double>(steps)};
    report.epoch_count = epochs;
    report.mean_epoch_length =
        epochs > 0 ? epoch_length_sum / static_cast<double>(epochs) : 0.0;

    const double nb = static_cast<double>(batch_means.size());
    double mean = 0.0;
    for (double b : batch_means) mean += b;
    mean /= nb;
    double var = 0.0;
    for (double b : batch_means) var += (b - mean) * (b - mean);
    report.std_error_bits = std::sqrt(var / (nb * (nb - 1.0)));
    return report;
}

struct EpochStats {
    double mean = 0.0;
    double variance = 0.0;
    double chi_square_pvalue = 1.0;
    long epochs = 0;
};

// Epoch-length statistics of the bare recharge process, plus a chi-square
// goodness-of-fit test against geometric(p) with tail pooling (expected bin
// counts kept at 5 or more).
inline EpochStats epoch_statistics(const ChannelParams& params, long steps,
                                   std::uint64_t seed) {
    if (steps < 1) throw std::invalid_argument("steps must be positive");

    SplitMix64 rng(seed);
    std::vector<long> lengths;
    long age = 1;
    for (long t = 1; t <= steps; ++t) {
        if (rng.uniform() < params.p) {
            lengths.push_back(age);
            age = 1;
        } else {
            ++age;
        }
    }
    if (lengths.size() < 100)
        throw std::runtime_error(
            "epoch_statistics: fewer than 100 completed epochs observed");

    EpochStats stats;
    stats.epochs = static_cast<long>(lengths.size());
    const double n = static_cast<double>(lengths.size());
    double mean = 0.0;
    for (long l : lengths) mean += static_cast<double>(l);
    mean /= n;
    double var = 0.0;
    for (long l : lengths) {
        const double d = static_cast<double>(l) - mean;
        var += d * d;
    }
    stats.mean = mean;
    stats.variance = var / (n - 1.0);

    // Individual bins for k = 1..k_cap while expected counts stay >= 5; the
    // remaining geometric tail is pooled into one bin.
    const double q = 1.0 - params.p;
    long k_cap = 0;
    {
        double expected = n * params.p;
        while (expected >= 5.0 && k_cap < 1000000) {
            ++k_cap;
            expected *= q;
        }
        k_cap = std::max<long>(k_cap, 1);
    }
    std::vector<double> observed(static_cast<std::size_t>(k_cap) + 1, 0.0);
    for (long l : lengths) {
        const long bin = l <= k_cap ? l - 1 : k_cap;
        observed[static_cast<std::size_t>(bin)] += 1.0;
    }
    const double tail_expected = n * std::pow(q, static_cast<double>(k_cap));
    long bins = k_cap;
    double chi2 = 0.0;
    {
        double expected = n * params.p;
        for (long k = 1; k <= k_cap; ++k) {
            const double d = observed[static_cast<std::size_t>(k - 1)] - expected;
            chi2 += d * d / expected;
            expected *= q;
        }
    }
    if (tail_expected > 1e-9) {
        const double d = observed[static_cast<std::size_t>(k_cap)] - tail_expected;
        chi2 += d * d / tail_expected;
        ++bins;
    }

    const long dof = bins - 1;
    if (dof < 1) {
        stats.chi_square_pvalue = 1.0;
    } else {
        boost::math::chi_squared dist(static_cast<double>(dof));
        stats.chi_square_pvalue = boost::math::cdf(boost::math::complement(dist, chi2));
    }
    return stats;
}

}  // namespace rbrcap
