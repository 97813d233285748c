#pragma once

#include "rbrcap/model.hpp"
#include "rbrcap/power_control.hpp"
#include "rbrcap/smith.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <thread>
#include <vector>

namespace rbrcap {

// All explicit capacity bounds for one (p, b_bar) point, in bits per channel
// use. The two analytic lower bounds sit exactly 0.5*log2(pi e/2) below their
// upper counterparts and are reported unclamped (they go negative for small
// b_bar).
struct BoundsReport {
    ChannelParams params{};
    long n_tilde = 0;
    RateValue causal_upper{};
    RateValue causal_lower{};
    RateValue noncausal_upper{};
    RateValue noncausal_lower_analytic{};
    RateValue noncausal_lower_smith{};
    RateValue infinite_battery_upper{};
};

struct BoundsOptions {
    double series_tol = 1e-9;  // bits; certified truncation error of each series
    double smith_tol = 1e-6;   // bits; BA certificate gap per Smith term
    // When > 0, far-tail Smith terms whose total possible improvement over the
    // per-term analytic sandwich is below this budget (bits) use the sandwich
    // value instead of a BA solve. The result remains a certified lower bound
    // no more than this budget below the all-BA evaluation.
    double smith_series_budget = 0.0;
    SmithOptions smith{};
};

inline RateValue causal_upper(const ChannelParams& params) {
    return optimal_allocation(params).value_bits;
}

inline RateValue causal_lower(const ChannelParams& params) {
    return RateValue{causal_upper(params).bits - kHalfLog2PiEOver2};
}

inline RateValue infinite_battery_upper(const ChannelParams& params) {
    return RateValue{0.5 * std::log2(1.0 + params.p * params.b_bar)};
}

namespace detail {

// Number of series terms K such that the dropped tail is below tol:
// each term of either noncausal series is at most p^2 (1-p)^(k-1) b_bar /
// (2 ln 2), so the tail after K terms is below p (1-p)^K b_bar / (2 ln 2).
inline long series_length(const ChannelParams& params, double tol) {
    const double q = 1.0 - params.p;
    const double scale = params.p * params.b_bar / (2.0 * std::numbers::ln2);
    double q_pow = q;
    for (long k = 1; k <= 100000000L; ++k) {
        if (scale * q_pow < tol) return k;
        q_pow *= q;
    }
    throw convergence_error("series_length: truncation bound never met");
}

inline double sandwich_lower_clamped(double energy) {
    return std::max(0.0, analytic_sandwich(energy).first.bits);
}

}  // namespace detail

// Noncausal upper bound series: sum_k p^2 (1-p)^(k-1) (k/2) log2(1 + b_bar/k),
// truncated with certified tail below tol.
inline RateValue noncausal_upper(const ChannelParams& params, double tol) {
    if (!(tol > 0.0)) throw std::invalid_argument("tol must be positive");
    if (params.b_bar == 0.0) return RateValue{0.0};
    const double q = 1.0 - params.p;
    const long terms = detail::series_length(params, tol);
    double sum = 0.0;
    double weight = params.p * params.p;
    for (long k = 1; k <= terms; ++k) {
        const double kk = static_cast<double>(k);
        sum += weight * 0.5 * kk * std::log2(1.0 + params.b_bar / kk);
        weight *= q;
    }
    return RateValue{sum};
}

inline RateValue noncausal_lower_analytic(const ChannelParams& params, double tol) {
    return RateValue{noncausal_upper(params, tol).bits - kHalfLog2PiEOver2};
}

// Noncausal lower bound series: sum_k p^2 (1-p)^(k-1) k C_Smith(b_bar/k),
// with each term evaluated by the discretized BA solver at amplitude
// sqrt(b_bar/k). Every term is a certified lower bound on the true C_Smith,
// so the truncated sum is a certified lower bound on the noncausal capacity.
inline RateValue noncausal_lower_smith(const ChannelParams& params,
                                       const BoundsOptions& opts,
                                       SmithCache& cache) {
    if (!(opts.series_tol > 0.0) || !(opts.smith_tol > 0.0))
        throw std::invalid_argument("tolerances must be positive");
    if (params.b_bar == 0.0) return RateValue{0.0};

    const double q = 1.0 - params.p;
    const long terms = detail::series_length(params, opts.series_tol);

    // With a positive budget, terms beyond ba_terms fall back to the per-term
    // analytic sandwich; the switch index is chosen so the total foregone
    // improvement stays below the budget.
    long ba_terms = terms;
    if (opts.smith_series_budget > 0.0) {
        std::vector<double> headroom(static_cast<std::size_t>(terms));
        double weight = params.p * params.p;
        for (long k = 1; k <= terms; ++k) {
            const double kk = static_cast<double>(k);
            const double energy = params.b_bar / kk;
            const double upper = 0.5 * std::log2(1.0 + energy);
            headroom[static_cast<std::size_t>(k - 1)] =
                weight * kk * (upper - detail::sandwich_lower_clamped(energy));
            weight *= q;
        }
        double suffix = 0.0;
        ba_terms = terms;
        for (long k = terms; k >= 1; --k) {
            suffix += headroom[static_cast<std::size_t>(k - 1)];
            if (suffix >= opts.smith_series_budget) break;
            ba_terms = k - 1;
        }
    }

    double sum = 0.0;
    double weight = params.p * params.p;
    for (long k = 1; k <= terms; ++k) {
        const double kk = static_cast<double>(k);
        const double energy = params.b_bar / kk;
        double c_smith;
        if (k <= ba_terms) {
            c_smith = std::max(
                0.0, cache.solve(std::sqrt(energy), opts.smith_tol, opts.smith)
                         .capacity_bits.bits);
        } else {
            c_smith = detail::sandwich_lower_clamped(energy);
        }
        sum += weight * kk * c_smith;
        weight *= q;
    }
    return RateValue{sum};
}

inline RateValue noncausal_lower_smith(const ChannelParams& params, double tol,
                                       double smith_tol) {
    BoundsOptions opts;
    opts.series_tol = tol;
    opts.smith_tol = smith_tol;
    SmithCache cache;
    return noncausal_lower_smith(params, opts, cache);
}

inline BoundsReport bounds_report(const ChannelParams& params,
                                  const BoundsOptions& opts, SmithCache& cache) {
    BoundsReport report;
    report.params = params;
    report.n_tilde = find_n_tilde(params);
    report.causal_upper = causal_upper(params);
    report.causal_lower =
        RateValue{report.causal_upper.bits - kHalfLog2PiEOver2};
    report.noncausal_upper = noncausal_upper(params, opts.series_tol);
    report.noncausal_lower_analytic =
        RateValue{report.noncausal_upper.bits - kHalfLog2PiEOver2};
    report.noncausal_lower_smith = noncausal_lower_smith(params, opts, cache);
    report.infinite_battery_upper = infinite_battery_upper(params);
    return report;
}

inline BoundsReport bounds_report(const ChannelParams& params, double tol,
                                  double smith_tol) {
    BoundsOptions opts;
    opts.series_tol = tol;
    opts.smith_tol = smith_tol;
    SmithCache cache;
    return bounds_report(params, opts, cache);
}

// One report per grid point, in grid order. Points are independent and may be
// computed by up to `threads` workers; the shared cache keeps results
// identical to a serial run because solves are deterministic.
inline std::vector<BoundsReport> sweep(double p,
                                       const std::vector<double>& b_bar_grid,
                                       const BoundsOptions& opts,
                                       SmithCache& cache, unsigned threads = 1) {
    if (b_bar_grid.empty())
        throw std::invalid_argument("grid must be nonempty");
    for (std::size_t i = 1; i < b_bar_grid.size(); ++i)
        if (!(b_bar_grid[i] > b_bar_grid[i - 1]))
            throw std::invalid_argument("grid must be strictly increasing");

    std::vector<BoundsReport> reports(b_bar_grid.size());
    const auto compute = [&](std::size_t i) {
        const ChannelParams point = validate_params(p, b_bar_grid[i]);
        reports[i] = bounds_report(point, opts, cache);
    };

    threads = std::min<unsigned>(std::max(1u, threads),
                                 static_cast<unsigned>(b_bar_grid.size()));
    if (threads <= 1) {
        for (std::size_t i = 0; i < b_bar_grid.size(); ++i) compute(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (unsigned t = 0; t < threads; ++t) {
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < b_bar_grid.size();
                     i = next.fetch_add(1))
                    compute(i);
            });
        }
        for (auto& th : pool) th.join();
    }
    return reports;
}

inline std::vector<BoundsReport> sweep(double p,
                                       const std::vector<double>& b_bar_grid,
                                       double tol, double smith_tol) {
    BoundsOptions opts;
    opts.series_tol = tol;
    opts.smith_tol = smith_tol;
    SmithCache cache;
    return sweep(p, b_bar_grid, opts, cache);
}

}  // namespace rbrcap
