#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace rbrcap {

inline constexpr double kInvLn2 = 1.4426950408889634074;  // 1/ln(2)

// Gap between the causal upper and lower capacity bounds: 0.5*log2(pi*e/2).
inline const double kHalfLog2PiEOver2 =
    0.5 * std::log2(std::numbers::pi * std::numbers::e / 2.0);

// Shaping loss of a uniform input: 0.5*log2(pi*e/6).
inline const double kHalfLog2PiEOver6 =
    0.5 * std::log2(std::numbers::pi * std::numbers::e / 6.0);

// A rate or capacity value in bits per channel use (log base 2 throughout the
// public API; bound gaps below zero are reported unclamped).
struct RateValue {
    double bits = 0.0;
};

// Recharge probability p and battery capacity b_bar. Energies are expressed
// in units of the noise variance (the channel noise is N(0,1)).
struct ChannelParams {
    double p = 1.0;
    double b_bar = 0.0;
};

// Battery level together with the age of the current epoch: age is the number
// of channel uses since the most recent recharge, so age == 1 on a recharge
// slot.
struct BatteryState {
    double level = 0.0;
    long age = 1;
};

// Thrown when a spend request exceeds the available battery level beyond the
// floating-point slack.
struct energy_violation : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Thrown by iterative solvers that hit their iteration cap.
struct convergence_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline ChannelParams validate_params(double p, double b_bar) {
    if (!std::isfinite(p) || !std::isfinite(b_bar))
        throw std::domain_error("channel params must be finite");
    if (!(p > 0.0) || p > 1.0)
        throw std::domain_error("recharge probability must satisfy 0 < p <= 1");
    if (b_bar < 0.0)
        throw std::domain_error("battery capacity must be nonnegative");
    return ChannelParams{p, b_bar};
}

// Absolute tolerance on spend <= level, absorbing drift accumulated over long
// spend/recharge sequences.
inline double energy_slack(const ChannelParams& params) {
    return 1e-12 * std::max(1.0, params.b_bar);
}

// One step of the battery recursion. A recharge refills to b_bar and resets
// the age; otherwise the spent energy is drained and the age advances.
inline BatteryState battery_step(const BatteryState& state, double spent,
                                 bool recharge, const ChannelParams& params) {
    if (!(spent >= 0.0))
        throw std::domain_error("spent energy must be nonnegative");
    if (spent > state.level + energy_slack(params))
        throw energy_violation("spent energy exceeds battery level");
    if (recharge) return BatteryState{params.b_bar, 1};
    return BatteryState{std::max(state.level - spent, 0.0), state.age + 1};
}

// r(P) = 0.5*log2(1 + P) bits per channel use.
inline RateValue rate(double power) {
    if (!(power >= 0.0))
        throw std::domain_error("power must be nonnegative");
    return RateValue{0.5 * std::log1p(power) * kInvLn2};
}

}  // namespace rbrcap
