#pragma once

#include "rbrcap/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace rbrcap {

struct SmithOptions {
    int support_points = 801;     // odd, so 0 and both endpoints are on-grid
    double y_tail = 8.0;          // output grid extension beyond +-A, in noise sigmas
    double y_step_target = 0.005; // scaled by max(1, A); capped by y_step_cap
    double y_step_cap = 0.25;     // keeps the unit-variance kernel resolved at large A
    long max_iterations = 100000;
    long certificate_every = 8;   // cadence of full-alphabet optimality checks
};

struct SmithSolution {
    double amplitude = 0.0;
    RateValue capacity_bits{};
    // (location, weight) pairs with weight > 1e-9, sorted by location.
    std::vector<std::pair<double, double>> support;
    double optimality_gap_bits = 0.0;
    long iterations = 0;
    // Most negative per-iteration change of the mutual information objective
    // observed during the solve (expected to sit at floating-point noise).
    double ascent_slack_bits = 0.0;
    double y_step = 0.0;  // realized trapezoid step, recorded for metadata
};

// Analytic sandwich for the amplitude-constrained capacity at input energy
// eps = A^2:  0.5*log2(1 + eps/3) - 0.5*log2(pi e/6) <= C_Smith(eps) <=
// 0.5*log2(1 + eps).
inline std::pair<RateValue, RateValue> analytic_sandwich(double energy) {
    if (!(energy >= 0.0))
        throw std::domain_error("energy must be nonnegative");
    const double lower =
        0.5 * std::log2(1.0 + energy / 3.0) - kHalfLog2PiEOver6;
    const double upper = 0.5 * std::log2(1.0 + energy);
    return {RateValue{lower}, RateValue{upper}};
}

// Uniform trapezoid rule over [lo, hi] used by the reference
// information-density evaluation.
struct OutputQuadrature {
    double lo = -8.0;
    double hi = 8.0;
    double step = 0.005;
};

inline OutputQuadrature default_output_quadrature(double amplitude,
                                                  const SmithOptions& opts = {}) {
    const double step = std::min(opts.y_step_target * std::max(1.0, amplitude),
                                 opts.y_step_cap);
    return OutputQuadrature{-(amplitude + opts.y_tail), amplitude + opts.y_tail,
                            step};
}

// Relative entropy D(x) in bits between the Gaussian kernel centered at x and
// the output mixture of the given input distribution. Densities are combined
// in log space (log-sum-exp), so the mixture never underflows even for y far
// from the support.
inline double information_density_bits(std::span<const double> support,
                                       std::span<const double> weights,
                                       double x, const OutputQuadrature& quad) {
    if (support.size() != weights.size() || support.empty())
        throw std::invalid_argument("support and weights must match and be nonempty");
    double wsum = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) throw std::domain_error("weights must be nonnegative");
        wsum += w;
    }
    if (std::abs(wsum - 1.0) > 1e-9)
        throw std::domain_error("weights must sum to 1");
    if (!(quad.step > 0.0) || !(quad.hi > quad.lo))
        throw std::invalid_argument("invalid quadrature");

    constexpr double half_ln_2pi = 0.9189385332046727418;
    std::vector<double> log_w(weights.size(), -std::numeric_limits<double>::infinity());
    for (std::size_t j = 0; j < weights.size(); ++j)
        if (weights[j] > 0.0) log_w[j] = std::log(weights[j]);

    const long n = static_cast<long>(std::ceil((quad.hi - quad.lo) / quad.step)) + 1;
    double acc = 0.0;
    for (long i = 0; i < n; ++i) {
        const double y = quad.lo + static_cast<double>(i) * quad.step;
        const double log_kernel = -0.5 * (y - x) * (y - x) - half_ln_2pi;
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < support.size(); ++j) {
            const double c = log_w[j] - 0.5 * (y - support[j]) * (y - support[j]);
            if (c > best) best = c;
        }
        double mix = 0.0;
        for (std::size_t j = 0; j < support.size(); ++j) {
            const double c = log_w[j] - 0.5 * (y - support[j]) * (y - support[j]);
            mix += std::exp(c - best);
        }
        const double log_mixture = best + std::log(mix) - half_ln_2pi;
        const double weight = (i == 0 || i == n - 1) ? 0.5 * quad.step : quad.step;
        acc += weight * std::exp(log_kernel) * (log_kernel - log_mixture);
    }
    return acc * kInvLn2;
}

namespace detail {

// Support and output points share one distance lattice of pitch g: support
// points sit at multiples of b*g, output points at multiples of a*g, so every
// kernel value phi(y_i - x_j) is a lookup into a single table.
struct SmithLattice {
    double g = 0.0;   // lattice pitch
    long a = 1;       // output step in lattice units (h = a*g)
    long b = 1;       // support step in lattice units (delta = b*g)
    long half_points = 0;  // M: support indices 0..M-1 cover [0, A]
    long n_out = 0;        // output indices 0..n-1 cover [0, A + tail]
};

inline SmithLattice make_lattice(double amplitude, const SmithOptions& opts) {
    if (opts.support_points < 3 || opts.support_points % 2 == 0)
        throw std::invalid_argument("support_points must be odd and >= 3");
    SmithLattice lat;
    lat.half_points = (opts.support_points + 1) / 2;
    const double delta = amplitude / static_cast<double>(lat.half_points - 1);
    const double target_h =
        std::min(opts.y_step_target * std::max(1.0, amplitude), opts.y_step_cap);
    lat.b = std::max(1L, static_cast<long>(std::ceil(delta / target_h - 1e-12)));
    lat.g = delta / static_cast<double>(lat.b);
    lat.a = std::max(1L, static_cast<long>(std::floor(target_h / lat.g + 1e-12)));
    const double h = static_cast<double>(lat.a) * lat.g;
    lat.n_out =
        static_cast<long>(std::ceil((amplitude + opts.y_tail) / h)) + 1;
    return lat;
}

// Applies f(i, T[|i*a - jb|] + T[i*a + jb]) for output indices i = 0..n-1.
template <class F>
inline void kernel_row(const std::vector<double>& table, long n, long a,
                       long jb, F&& f) {
    long i = 0;
    long up = jb;
    long dn = jb;
    const long i_cross = std::min(jb / a, n - 1);
    for (; i <= i_cross; ++i, dn -= a, up += a) f(i, table[dn] + table[up]);
    dn = i * a - jb;
    for (; i < n; ++i, dn += a, up += a) f(i, table[dn] + table[up]);
}

// In-place Gaussian elimination with partial pivoting on a row-major dim*dim
// system; the solution replaces rhs. Returns false on (near-)singularity.
inline bool solve_dense(std::vector<double>& a, std::vector<double>& rhs,
                        std::size_t dim) {
    for (std::size_t col = 0; col < dim; ++col) {
        std::size_t pivot = col;
        double best = std::abs(a[col * dim + col]);
        for (std::size_t r = col + 1; r < dim; ++r) {
            const double cand = std::abs(a[r * dim + col]);
            if (cand > best) {
                best = cand;
                pivot = r;
            }
        }
        if (!(best > 1e-300)) return false;
        if (pivot != col) {
            for (std::size_t c = 0; c < dim; ++c)
                std::swap(a[pivot * dim + c], a[col * dim + c]);
            std::swap(rhs[pivot], rhs[col]);
        }
        const double inv = 1.0 / a[col * dim + col];
        for (std::size_t r = col + 1; r < dim; ++r) {
            const double factor = a[r * dim + col] * inv;
            if (factor == 0.0) continue;
            for (std::size_t c = col; c < dim; ++c)
                a[r * dim + c] -= factor * a[col * dim + c];
            rhs[r] -= factor * rhs[col];
        }
    }
    for (std::size_t r = dim; r-- > 0;) {
        double acc = rhs[r];
        for (std::size_t c = r + 1; c < dim; ++c) acc -= a[r * dim + c] * rhs[c];
        rhs[r] = acc / a[r * dim + r];
    }
    return true;
}

}  // namespace detail

// Discretized-input Blahut-Arimoto solve of the amplitude-constrained scalar
// AWGN capacity. The input support is the uniform grid of opts.support_points
// over [-A, A]; the output integral is a trapezoid rule on [-(A+tail), A+tail].
// Iterates until max_x D(x) - I < tol (bits) over the full grid, so the true
// discretized capacity lies in [capacity_bits, capacity_bits + gap]. Because
// the input set is restricted, capacity_bits is a valid lower bound on
// C_Smith(A^2) regardless of tol. Deterministic for fixed arguments.
inline SmithSolution capacity_amplitude_constrained(double amplitude, double tol,
                                                    const SmithOptions& opts = {}) {
    if (!(amplitude >= 0.0))
        throw std::domain_error("amplitude must be nonnegative");
    if (!(tol > 0.0)) throw std::invalid_argument("tol must be positive");

    SmithSolution sol;
    sol.amplitude = amplitude;
    if (amplitude <= 0.0) {
        sol.support = {{0.0, 1.0}};
        return sol;
    }

    const auto lat = detail::make_lattice(amplitude, opts);
    const long m_half = lat.half_points;
    const long n = lat.n_out;
    const double h = static_cast<double>(lat.a) * lat.g;
    sol.y_step = h;

    // Distance tables: T[d] = phi(d*g), TL[d] = T[d]*ln(T[d]). The log form is
    // analytic, so T*lnT stays finite even where T underflows.
    const long d_max = (n - 1) * lat.a + (m_half - 1) * lat.b;
    std::vector<double> table(static_cast<std::size_t>(d_max) + 1);
    std::vector<double> table_l(static_cast<std::size_t>(d_max) + 1);
    constexpr double half_ln_2pi = 0.9189385332046727418;
    for (long d = 0; d <= d_max; ++d) {
        const double dist = static_cast<double>(d) * lat.g;
        const double log_phi = -0.5 * dist * dist - half_ln_2pi;
        const double phi = std::exp(log_phi);
        table[static_cast<std::size_t>(d)] = phi;
        table_l[static_cast<std::size_t>(d)] = phi * log_phi;
    }

    // Folded trapezoid weights: the pair (y_i, -y_i) carries 2h, the center h,
    // the two range ends h.
    std::vector<double> yw(static_cast<std::size_t>(n), 2.0 * h);
    yw.front() = h;
    yw.back() = h;

    // Per-support-point kernel self-entropy term, folded over +-y.
    std::vector<double> self_term(static_cast<std::size_t>(m_half));
    for (long j = 0; j < m_half; ++j) {
        double acc = 0.0;
        long i = 0;
        long up = j * lat.b;
        long dn = j * lat.b;
        const long i_cross = std::min(up / lat.a, n - 1);
        for (; i <= i_cross; ++i, dn -= lat.a, up += lat.a)
            acc += yw[static_cast<std::size_t>(i)] *
                   (table_l[static_cast<std::size_t>(dn)] +
                    table_l[static_cast<std::size_t>(up)]);
        dn = i * lat.a - j * lat.b;
        for (; i < n; ++i, dn += lat.a, up += lat.a)
            acc += yw[static_cast<std::size_t>(i)] *
                   (table_l[static_cast<std::size_t>(dn)] +
                    table_l[static_cast<std::size_t>(up)]);
        self_term[static_cast<std::size_t>(j)] = 0.5 * acc;
    }

    // Deterministic start. Up to the two-mass-point regime the equal-weight
    // +-A input is the exact discrete optimizer, so it certifies immediately;
    // beyond it a uniform start converges faster. A small floor keeps every
    // grid point revivable.
    std::vector<double> weights(static_cast<std::size_t>(m_half), 0.0);
    {
        const double m_full = static_cast<double>(2 * m_half - 1);
        if (amplitude <= 1.6) {
            const double mu = 1e-6;
            weights[0] = mu / m_full;
            for (long j = 1; j < m_half; ++j)
                weights[static_cast<std::size_t>(j)] = 2.0 * mu / m_full;
            weights[static_cast<std::size_t>(m_half - 1)] += 1.0 - mu;
        } else {
            weights[0] = 1.0 / m_full;
            for (long j = 1; j < m_half; ++j)
                weights[static_cast<std::size_t>(j)] = 2.0 / m_full;
        }
    }

    std::vector<long> active(static_cast<std::size_t>(m_half));
    for (long j = 0; j < m_half; ++j) active[static_cast<std::size_t>(j)] = j;

    std::vector<double> mixture(static_cast<std::size_t>(n));
    std::vector<double> log_mix_w(static_cast<std::size_t>(n));
    std::vector<double> dens0(static_cast<std::size_t>(m_half), 0.0);
    std::vector<double> dens1(static_cast<std::size_t>(m_half), 0.0);
    std::vector<double> w1(static_cast<std::size_t>(m_half), 0.0);
    std::vector<double> w2(static_cast<std::size_t>(m_half), 0.0);
    std::vector<double> extrap(static_cast<std::size_t>(m_half), 0.0);
    std::vector<double> log_w0(static_cast<std::size_t>(m_half), 0.0);
    std::vector<double> step_r(static_cast<std::size_t>(m_half), 0.0);
    std::vector<double> step_v(static_cast<std::size_t>(m_half), 0.0);
    std::vector<long> heavy;
    heavy.reserve(static_cast<std::size_t>(m_half));
    std::vector<double> panel;
    std::vector<double> scratch_inv_q(static_cast<std::size_t>(n));
    std::vector<double> kkt;
    std::vector<double> rhs;
    std::vector<double> trial_wh;

    // Information densities D(x_j) of the active (or full) support against the
    // mixture of w; returns {I, max D over the evaluated set}.
    const auto densities = [&](const std::vector<double>& w, bool full,
                               std::vector<double>& d_out) {
        std::fill(mixture.begin(), mixture.end(), 0.0);
        for (long j : active) {
            const double wj = 0.5 * w[static_cast<std::size_t>(j)];
            if (wj == 0.0) continue;
            detail::kernel_row(table, n, lat.a, j * lat.b,
                               [&](long i, double pair) {
                                   mixture[static_cast<std::size_t>(i)] += wj * pair;
                               });
        }
        for (long i = 0; i < n; ++i) {
            const double q = std::max(mixture[static_cast<std::size_t>(i)], 1e-300);
            log_mix_w[static_cast<std::size_t>(i)] =
                yw[static_cast<std::size_t>(i)] * std::log(q);
        }
        const auto one_density = [&](long j) {
            double acc = 0.0;
            detail::kernel_row(table, n, lat.a, j * lat.b,
                               [&](long i, double pair) {
                                   acc += pair * log_mix_w[static_cast<std::size_t>(i)];
                               });
            return self_term[static_cast<std::size_t>(j)] - 0.5 * acc;
        };
        double max_d = -std::numeric_limits<double>::infinity();
        if (full) {
            for (long j = 0; j < m_half; ++j) {
                const double d = one_density(j);
                d_out[static_cast<std::size_t>(j)] = d;
                max_d = std::max(max_d, d);
            }
        } else {
            for (long j : active) {
                const double d = one_density(j);
                d_out[static_cast<std::size_t>(j)] = d;
                max_d = std::max(max_d, d);
            }
        }
        double info = 0.0;
        for (long j : active)
            info += w[static_cast<std::size_t>(j)] *
                    d_out[static_cast<std::size_t>(j)];
        return std::pair<double, double>{info, max_d};
    };

    // One Blahut-Arimoto reweighting step (guaranteed ascent).
    const auto ba_step = [&](const std::vector<double>& w,
                             const std::vector<double>& d, double max_d,
                             std::vector<double>& out) {
        double norm = 0.0;
        for (long j : active) {
            const std::size_t ji = static_cast<std::size_t>(j);
            out[ji] = std::max(
                w[ji] * std::exp(d[ji] - max_d), 1e-300);
            norm += out[ji];
        }
        for (long j : active) out[static_cast<std::size_t>(j)] /= norm;
    };

    const double tol_nats = tol * std::numbers::ln2;
    double info_nats = -std::numeric_limits<double>::infinity();
    double gap_nats = std::numeric_limits<double>::infinity();
    double worst_ascent = 0.0;
    double alpha_cap = 4.0;
    bool converged = false;
    long steps = 0;  // BA-step equivalents consumed

    // Plain BA crawls through a 1/t certificate tail, so each cycle takes two
    // BA steps and extrapolates the log-weights (SQUAREM S3 step length). The
    // extrapolated point is kept only when its objective beats the two-step
    // point; either way the objective is nondecreasing and the fixed points
    // are those of the plain iteration.
    while (steps < opts.max_iterations) {
        const bool max_d_over_all = true;
        const auto [info0, max_d_all] = densities(weights, max_d_over_all, dens0);
        if (info0 < info_nats)
            worst_ascent = std::min(worst_ascent, info0 - info_nats);
        info_nats = info0;
        gap_nats = max_d_all - info0;
        if (gap_nats < tol_nats) {
            converged = true;
            break;
        }

        // Any under-weighted point whose density clears the objective by a
        // tolerance fraction belongs in the support; multiplicative growth
        // from near-zero weight would take ~1/gap steps, so its weight is
        // floored directly. Adding mass where D > I is first-order improving.
        {
            bool boosted = false;
            for (long j = 0; j < m_half; ++j) {
                const std::size_t ji = static_cast<std::size_t>(j);
                if (dens0[ji] > info0 + 0.5 * tol_nats && weights[ji] < 1e-9) {
                    if (weights[ji] == 0.0) active.push_back(j);
                    weights[ji] = 1e-9;
                    boosted = true;
                }
            }
            if (boosted) {
                std::sort(active.begin(), active.end());
                double norm = 0.0;
                for (long j : active) norm += weights[static_cast<std::size_t>(j)];
                for (long j : active) weights[static_cast<std::size_t>(j)] /= norm;
            }
        }
        double max_d_active = -std::numeric_limits<double>::infinity();
        for (long j : active)
            max_d_active =
                std::max(max_d_active, dens0[static_cast<std::size_t>(j)]);

        steps += 1;  // certificate pass

        // Close to the optimum the multiplicative phase only perturbs the
        // equilibrated weights; from there the Newton refinement below owns
        // the convergence and the BA phase is skipped.
        long heavy_count = 0;
        for (long j : active)
            if (weights[static_cast<std::size_t>(j)] >= 1e-10) ++heavy_count;
        const bool newton_ready = heavy_count >= 2 && heavy_count <= 500;
        const bool ba_phase = gap_nats > 0.05 || !newton_ready;
        if (ba_phase) {
        ba_step(weights, dens0, max_d_active, w1);
        const auto [info1, max_d1] = densities(w1, false, dens1);
        ba_step(w1, dens1, max_d1, w2);
        steps += 2;

        // SQUAREM extrapolation in log space over the mass-carrying points
        // only: deeply suppressed weights decay along fast large-amplitude
        // modes that would swamp the step-length estimate for the slow mode.
        // Suppressed points keep their two-step values. The step length is
        // backtracked until the objective does not regress, so the cycle is
        // monotone whatever alpha the heuristic proposes.
        heavy.clear();
        double rr = 0.0, vv = 0.0;
        for (long j : active) {
            const std::size_t ji = static_cast<std::size_t>(j);
            if (weights[ji] < 1e-10) continue;
            heavy.push_back(j);
            const double lw0 = std::log(weights[ji]);
            const double r = std::log(w1[ji]) - lw0;
            const double v = std::log(w2[ji]) - std::log(w1[ji]) - r;
            rr += r * r;
            vv += v * v;
            log_w0[ji] = lw0;
            step_r[ji] = r;
            step_v[ji] = v;
        }
        if (!(vv > 0.0)) {
            weights = w2;
        } else {
            const double alpha_first =
                std::min(-1.0, std::max(-std::sqrt(rr / vv), -alpha_cap));
            double alpha = alpha_first;
            bool accepted = false;
            while (true) {
                extrap = w2;
                for (long j : heavy) {
                    const std::size_t ji = static_cast<std::size_t>(j);
                    const double lt = log_w0[ji] - 2.0 * alpha * step_r[ji] +
                                      alpha * alpha * step_v[ji];
                    extrap[ji] = std::exp(std::min(lt, 30.0));
                }
                double norm = 0.0;
                for (long j : active) norm += extrap[static_cast<std::size_t>(j)];
                for (long j : active) extrap[static_cast<std::size_t>(j)] /= norm;

                const auto [info_x, max_dx] = densities(extrap, false, dens1);
                (void)max_dx;
                steps += 1;
                if (info_x >= info0 - 1e-14) {
                    weights = extrap;
                    accepted = true;
                    break;
                }
                if (alpha >= -1.5) break;
                alpha = std::max(alpha * 0.5, -1.0 - 1e-12);
            }
            if (!accepted) weights = w2;
            if (accepted && alpha == alpha_first) {
                if (alpha == -alpha_cap) alpha_cap = std::min(alpha_cap * 4.0, 1e6);
            } else {
                alpha_cap = std::max(4.0, alpha_cap * 0.5);
            }
            if (std::getenv("RBRCAP_SMITH_DEBUG"))
                std::fprintf(stderr,
                             "cycle: steps=%ld gap=%.3e alpha=%.2f cap=%.0f %s "
                             "heavy=%zu active=%zu\n",
                             steps, gap_nats * kInvLn2, alpha, alpha_cap,
                             accepted ? "acc" : "rej", heavy.size(), active.size());
        }
        }  // ba_phase

        // Equality-constrained Newton refinement over the mass-carrying
        // points. Multiplicative updates equilibrate near-tied cluster
        // weights at a crawl; the restricted problem is a small smooth
        // concave program that Newton solves to machine precision, after
        // which the full-grid certificate closes. Steps are damped,
        // feasibility-capped and only kept when the objective improves.
        heavy.clear();
        for (long j : active)
            if (weights[static_cast<std::size_t>(j)] >= 1e-10) heavy.push_back(j);
        const std::size_t nh = heavy.size();
        if (nh >= 2 && nh <= 500) {
            // Kernel panel and the output contribution of the points held
            // fixed during the refinement.
            panel.assign(nh * static_cast<std::size_t>(n), 0.0);
            for (std::size_t h = 0; h < nh; ++h) {
                double* row = panel.data() + h * static_cast<std::size_t>(n);
                detail::kernel_row(table, n, lat.a, heavy[h] * lat.b,
                                   [&](long i, double pair) {
                                       row[i] = 0.5 * pair;
                                   });
            }
            std::fill(mixture.begin(), mixture.end(), 0.0);
            for (long j : active) {
                const std::size_t ji = static_cast<std::size_t>(j);
                if (weights[ji] >= 1e-10) continue;
                const double wj = 0.5 * weights[ji];
                if (wj == 0.0) continue;
                detail::kernel_row(table, n, lat.a, j * lat.b,
                                   [&](long i, double pair) {
                                       mixture[static_cast<std::size_t>(i)] += wj * pair;
                                   });
            }
            std::vector<double> q_rest = mixture;

            std::vector<double> wh(nh);
            for (std::size_t h = 0; h < nh; ++h)
                wh[h] = weights[static_cast<std::size_t>(heavy[h])];

            const auto heavy_objective = [&](const std::vector<double>& w) {
                for (long i = 0; i < n; ++i)
                    mixture[static_cast<std::size_t>(i)] =
                        q_rest[static_cast<std::size_t>(i)];
                for (std::size_t h = 0; h < nh; ++h) {
                    const double* row = panel.data() + h * static_cast<std::size_t>(n);
                    const double wv = w[h];
                    for (long i = 0; i < n; ++i)
                        mixture[static_cast<std::size_t>(i)] += wv * row[i];
                }
                double out_entropy = 0.0;
                for (long i = 0; i < n; ++i) {
                    const double q = mixture[static_cast<std::size_t>(i)];
                    if (q > 0.0)
                        out_entropy += yw[static_cast<std::size_t>(i)] * q * std::log(q);
                }
                double self = 0.0;
                for (std::size_t h = 0; h < nh; ++h)
                    self += w[h] * self_term[static_cast<std::size_t>(heavy[h])];
                for (long j : active) {
                    const std::size_t ji = static_cast<std::size_t>(j);
                    if (weights[ji] < 1e-10 && weights[ji] > 0.0)
                        self += weights[ji] * self_term[ji];
                }
                return self - out_entropy;
            };

            trial_wh.assign(nh, 0.0);
            double f_cur = heavy_objective(wh);  // also fills `mixture`
            const long newton_rounds = nh > 200 ? 2 : 6;
            for (long round = 0; round < newton_rounds; ++round) {
                // Gradient D_h and Hessian -P diag(yw/q) P^T at the current q.
                for (long i = 0; i < n; ++i) {
                    const double q = std::max(mixture[static_cast<std::size_t>(i)], 1e-300);
                    log_mix_w[static_cast<std::size_t>(i)] =
                        yw[static_cast<std::size_t>(i)] * std::log(q);
                    scratch_inv_q[static_cast<std::size_t>(i)] =
                        yw[static_cast<std::size_t>(i)] / q;
                }
                const std::size_t dim = nh + 1;
                kkt.assign(dim * dim, 0.0);
                rhs.assign(dim, 0.0);
                for (std::size_t h = 0; h < nh; ++h) {
                    const double* row = panel.data() + h * static_cast<std::size_t>(n);
                    double cross = 0.0;
                    for (long i = 0; i < n; ++i)
                        cross += row[i] * log_mix_w[static_cast<std::size_t>(i)];
                    rhs[h] = -(self_term[static_cast<std::size_t>(heavy[h])] - cross);
                    for (std::size_t k = h; k < nh; ++k) {
                        const double* rk = panel.data() + k * static_cast<std::size_t>(n);
                        double acc = 0.0;
                        for (long i = 0; i < n; ++i)
                            acc += row[i] * rk[i] * scratch_inv_q[static_cast<std::size_t>(i)];
                        kkt[h * dim + k] = -acc;
                        kkt[k * dim + h] = -acc;
                    }
                    kkt[h * dim + h] -= 1e-12;
                    kkt[h * dim + nh] = 1.0;
                    kkt[nh * dim + h] = 1.0;
                }
                // rhs currently holds -(D_h); center so the multiplier absorbs
                // the mean and the step solves H dw + 1 dnu = -(D - mean).
                double mean_d = 0.0;
                for (std::size_t h = 0; h < nh; ++h) mean_d += rhs[h];
                mean_d /= static_cast<double>(nh);
                double grad_inf = 0.0;
                for (std::size_t h = 0; h < nh; ++h) {
                    rhs[h] -= mean_d;
                    grad_inf = std::max(grad_inf, std::abs(rhs[h]));
                }
                rhs[nh] = 0.0;
                if (grad_inf < 1e-15) break;
                if (!detail::solve_dense(kkt, rhs, dim)) break;

                bool improved = false;
                for (double t = 1.0; t > 1e-4; t *= 0.25) {
                    for (std::size_t h = 0; h < nh; ++h)
                        trial_wh[h] = std::max(wh[h] + t * rhs[h], 0.0);
                    const double f_trial = heavy_objective(trial_wh);
                    steps += 1;
                    if (f_trial >= f_cur) {
                        wh = trial_wh;
                        f_cur = f_trial;
                        improved = true;
                        break;
                    }
                }
                if (!improved) break;
            }
            if (f_cur >= info_nats) {
                for (std::size_t h = 0; h < nh; ++h)
                    weights[static_cast<std::size_t>(heavy[h])] = wh[h];
                double norm = 0.0;
                for (long j : active) norm += weights[static_cast<std::size_t>(j)];
                for (long j : active) weights[static_cast<std::size_t>(j)] /= norm;
            }
        }

        std::vector<long> next_active;
        next_active.reserve(active.size());
        for (long j : active) {
            double& w = weights[static_cast<std::size_t>(j)];
            if (w > 1e-120) {
                next_active.push_back(j);
            } else {
                w = 0.0;
            }
        }
        active.swap(next_active);
    }

    if (!converged)
        throw convergence_error(
            "capacity_amplitude_constrained: certificate gap did not reach tol "
            "(tol may be too tight for the grid resolution)");

    sol.capacity_bits = RateValue{info_nats * kInvLn2};
    sol.optimality_gap_bits = std::max(gap_nats, 0.0) * kInvLn2;
    sol.iterations = steps;
    sol.ascent_slack_bits = worst_ascent * kInvLn2;

    const double delta = static_cast<double>(lat.b) * lat.g;
    for (long j = m_half - 1; j >= 1; --j) {
        const double w = 0.5 * weights[static_cast<std::size_t>(j)];
        if (w > 1e-9)
            sol.support.emplace_back(-static_cast<double>(j) * delta, w);
    }
    if (weights[0] > 1e-9) sol.support.emplace_back(0.0, weights[0]);
    for (long j = 1; j < m_half; ++j) {
        const double w = 0.5 * weights[static_cast<std::size_t>(j)];
        if (w > 1e-9)
            sol.support.emplace_back(static_cast<double>(j) * delta, w);
    }
    return sol;
}

// Memoized front end for repeated Smith solves. Safe for concurrent use;
// concurrent misses may recompute the same key, which is harmless because
// solves are deterministic functions of (amplitude, tol, support_points).
class SmithCache {
public:
    SmithSolution solve(double amplitude, double tol, const SmithOptions& opts = {}) {
        const Key key = make_key(amplitude, tol, opts.support_points);
        {
            std::lock_guard lock(mutex_);
            auto it = memo_.find(key);
            if (it != memo_.end()) {
                ++hits_;
                return it->second;
            }
            ++misses_;
        }
        SmithSolution sol = capacity_amplitude_constrained(amplitude, tol, opts);
        {
            std::lock_guard lock(mutex_);
            memo_.emplace(key, sol);
        }
        return sol;
    }

    long hits() const {
        std::lock_guard lock(mutex_);
        return hits_;
    }
    long misses() const {
        std::lock_guard lock(mutex_);
        return misses_;
    }

private:
    struct Key {
        std::int64_t amplitude_femto;
        double tol;
        int support_points;
        friend bool operator<(const Key& x, const Key& y) {
            if (x.amplitude_femto != y.amplitude_femto)
                return x.amplitude_femto < y.amplitude_femto;
            if (x.tol != y.tol) return x.tol < y.tol;
            return x.support_points < y.support_points;
        }
    };

    static Key make_key(double amplitude, double tol, int support_points) {
        // Amplitudes are keyed at 1e-12 resolution per the memoization contract.
        const double scaled = amplitude * 1e12;
        const std::int64_t amp =
            scaled < 9e18 ? static_cast<std::int64_t>(std::llround(scaled))
                          : std::numeric_limits<std::int64_t>::max();
        return Key{amp, tol, support_points};
    }

    mutable std::mutex mutex_;
    std::map<Key, SmithSolution> memo_;
    long hits_ = 0;
    long misses_ = 0;
};

}  // namespace rbrcap
