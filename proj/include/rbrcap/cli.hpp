#pragma once

#include "rbrcap/bounds.hpp"
#include "rbrcap/io.hpp"
#include "rbrcap/simulator.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace rbrcap::cli {

inline constexpr const char* kVersion = "rbrcap 0.1.0";

// Exit codes of the command-line front end.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitSolver = 3;
inline constexpr int kExitIo = 4;

// Grid specification "start:stop:count:spacing" with spacing in {linear, log}
// (default log). A bare number is a single-point grid.
struct GridSpec {
    double start = 1.0;
    double stop = 1.0;
    int count = 1;
    bool log_spacing = true;

    std::vector<double> points() const {
        if (count < 1) throw std::invalid_argument("grid count must be >= 1");
        if (count == 1) return {start};
        if (!(start < stop))
            throw std::invalid_argument("grid requires start < stop for count > 1");
        if (log_spacing && !(start > 0.0))
            throw std::invalid_argument("log grid requires start > 0");
        std::vector<double> pts(static_cast<std::size_t>(count));
        for (int i = 0; i < count; ++i) {
            const double t = static_cast<double>(i) / (count - 1);
            pts[static_cast<std::size_t>(i)] =
                log_spacing ? start * std::pow(stop / start, t)
                            : start + (stop - start) * t;
        }
        pts.front() = start;
        pts.back() = stop;
        return pts;
    }

    static GridSpec parse(const std::string& text) {
        GridSpec spec;
        std::vector<std::string> parts;
        std::string item;
        std::istringstream in(text);
        while (std::getline(in, item, ':')) parts.push_back(item);
        try {
            if (parts.size() == 1) {
                spec.start = spec.stop = std::stod(parts[0]);
                spec.count = 1;
                return spec;
            }
            if (parts.size() < 3 || parts.size() > 4)
                throw std::invalid_argument("expected start:stop:count[:spacing]");
            spec.start = std::stod(parts[0]);
            spec.stop = std::stod(parts[1]);
            spec.count = std::stoi(parts[2]);
            if (parts.size() == 4) {
                if (parts[3] == "log") spec.log_spacing = true;
                else if (parts[3] == "linear") spec.log_spacing = false;
                else throw std::invalid_argument("spacing must be linear or log");
            }
        } catch (const std::exception&) {
            throw std::invalid_argument("bad grid spec '" + text +
                                        "' (expected start:stop:count[:spacing])");
        }
        (void)spec.points();  // validate eagerly
        return spec;
    }
};

struct RunConfig {
    std::string command;
    double p = 0.1;
    GridSpec b_bar_grid{};
    double tol = 1e-9;
    double smith_tol = 1e-6;
    double smith_budget = 0.0;
    int smith_m = 801;
    long steps = 1000000;
    std::uint64_t seed = 1;
    std::string policy = "optimal";
    double fraction = 0.5;
    double amplitude = 1.0;
    std::string out_csv;
    std::string out_svg;
    std::string in_csv;
    std::string series = "all";
    unsigned threads = 0;  // 0: RBRCAP_THREADS, else hardware concurrency
};

namespace detail {

inline unsigned resolve_threads(unsigned requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("RBRCAP_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) return static_cast<unsigned>(v);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? hw : 1;
}

inline io::SeriesPreset parse_preset(const std::string& name) {
    if (name == "all") return io::SeriesPreset::all;
    if (name == "fig2") return io::SeriesPreset::fig2;
    if (name == "fig3") return io::SeriesPreset::fig3;
    throw std::invalid_argument("unknown series preset '" + name +
                                "' (expected all, fig2 or fig3)");
}

inline PolicyKind parse_policy(const std::string& name) {
    if (name == "optimal") return PolicyKind::optimal;
    if (name == "greedy") return PolicyKind::greedy;
    if (name == "zero") return PolicyKind::zero;
    if (name == "constant_fraction") return PolicyKind::constant_fraction;
    throw std::invalid_argument(
        "unknown policy '" + name +
        "' (expected optimal, greedy, zero or constant_fraction)");
}

inline std::string config_echo(const RunConfig& cfg) {
    std::string meta = std::string(kVersion) + " " + cfg.command;
    meta += " --p " + io::format_double(cfg.p);
    meta += " --bbar " + io::format_double(cfg.b_bar_grid.start) + ":" +
            io::format_double(cfg.b_bar_grid.stop) + ":" +
            std::to_string(cfg.b_bar_grid.count) + ":" +
            (cfg.b_bar_grid.log_spacing ? "log" : "linear");
    meta += " --tol " + io::format_double(cfg.tol);
    meta += " --smith-tol " + io::format_double(cfg.smith_tol);
    if (cfg.smith_budget > 0.0)
        meta += " --smith-budget " + io::format_double(cfg.smith_budget);
    meta += " --smith-m " + std::to_string(cfg.smith_m);
    if (cfg.command == "simulate") {
        meta += " --policy " + cfg.policy;
        if (cfg.policy == "constant_fraction")
            meta += " --fraction " + io::format_double(cfg.fraction);
        meta += " --steps " + std::to_string(cfg.steps);
        meta += " --seed " + std::to_string(cfg.seed);
    }
    meta += " --series " + cfg.series;
    return meta;
}

inline int run_bounds(const RunConfig& cfg) {
    BoundsOptions opts;
    opts.series_tol = cfg.tol;
    opts.smith_tol = cfg.smith_tol;
    opts.smith_series_budget = cfg.smith_budget;
    opts.smith.support_points = cfg.smith_m;
    SmithCache cache;

    const auto grid = cfg.b_bar_grid.points();
    const unsigned threads = resolve_threads(cfg.threads);
    std::cerr << config_echo(cfg) << " threads=" << threads
              << " points=" << grid.size() << "\n";
    const auto reports = sweep(cfg.p, grid, opts, cache, threads);
    std::cerr << "sweep done: smith solves=" << cache.misses()
              << " memo hits=" << cache.hits() << "\n";

    if (!cfg.out_csv.empty()) io::write_csv(reports, cfg.out_csv);
    if (!cfg.out_svg.empty()) {
        io::PlotOptions plot;
        plot.preset = parse_preset(cfg.series);
        plot.metadata = config_echo(cfg);
        plot.title = "capacity bounds, p = " + io::format_double(cfg.p);
        io::write_svg_plot(reports, cfg.out_svg, plot);
    }
    if (cfg.out_csv.empty() && cfg.out_svg.empty()) {
        std::cout << io::kCsvHeader << "\n";
        for (const auto& r : reports)
            std::cout << io::format_double(r.params.p) << ","
                      << io::format_double(r.params.b_bar) << "," << r.n_tilde << ","
                      << io::format_double(r.causal_upper.bits) << ","
                      << io::format_double(r.causal_lower.bits) << ","
                      << io::format_double(r.noncausal_upper.bits) << ","
                      << io::format_double(r.noncausal_lower_analytic.bits) << ","
                      << io::format_double(r.noncausal_lower_smith.bits) << ","
                      << io::format_double(r.infinite_battery_upper.bits) << "\n";
    }
    return kExitOk;
}

inline int run_policy(const RunConfig& cfg) {
    const auto params = validate_params(cfg.p, cfg.b_bar_grid.start);
    const auto sol = optimal_allocation(params);
    std::cout << "p=" << io::format_double(params.p) << "\n";
    std::cout << "b_bar=" << io::format_double(params.b_bar) << "\n";
    std::cout << "n_tilde=" << sol.n_tilde << "\n";
    std::cout << "lambda_tilde=" << io::format_double(sol.lambda_tilde) << "\n";
    std::cout << "c_bar_bits=" << io::format_double(sol.value_bits.bits) << "\n";
    for (std::size_t i = 0; i < sol.eps.size(); ++i)
        std::cout << "eps_" << (i + 1) << "=" << io::format_double(sol.eps[i])
                  << "\n";
    return kExitOk;
}

inline int run_simulate(const RunConfig& cfg) {
    const auto params = validate_params(cfg.p, cfg.b_bar_grid.start);
    const auto policy = make_policy(parse_policy(cfg.policy), params, cfg.fraction);
    std::cerr << config_echo(cfg) << "\n";
    const auto report = simulate(params, policy, cfg.steps, cfg.seed);
    std::cout << "policy=" << policy.name() << "\n";
    std::cout << "steps=" << report.steps << "\n";
    std::cout << "seed=" << report.seed << "\n";
    std::cout << "throughput_bits="
              << io::format_double(report.empirical_throughput_bits.bits) << "\n";
    std::cout << "std_error_bits=" << io::format_double(report.std_error_bits)
              << "\n";
    std::cout << "epochs=" << report.epoch_count << "\n";
    std::cout << "mean_epoch_length="
              << io::format_double(report.mean_epoch_length) << "\n";
    std::cout << "battery_violations=" << report.battery_violations << "\n";
    return kExitOk;
}

inline int run_smith(const RunConfig& cfg) {
    SmithOptions opts;
    opts.support_points = cfg.smith_m;
    const auto sol = capacity_amplitude_constrained(cfg.amplitude, cfg.smith_tol, opts);
    const auto sandwich = analytic_sandwich(cfg.amplitude * cfg.amplitude);
    std::cout << "amplitude=" << io::format_double(sol.amplitude) << "\n";
    std::cout << "capacity_bits=" << io::format_double(sol.capacity_bits.bits)
              << "\n";
    std::cout << "gap_bits=" << io::format_double(sol.optimality_gap_bits) << "\n";
    std::cout << "iterations=" << sol.iterations << "\n";
    std::cout << "y_step=" << io::format_double(sol.y_step) << "\n";
    std::cout << "sandwich_lower_bits=" << io::format_double(sandwich.first.bits)
              << "\n";
    std::cout << "sandwich_upper_bits=" << io::format_double(sandwich.second.bits)
              << "\n";
    std::cout << "support_points=" << sol.support.size() << "\n";
    return kExitOk;
}

inline int run_plot(const RunConfig& cfg) {
    const auto reports = io::read_csv(cfg.in_csv);
    io::PlotOptions plot;
    plot.preset = parse_preset(cfg.series);
    plot.metadata = std::string(kVersion) + " plot --in " + cfg.in_csv +
                    " --series " + cfg.series;
    plot.title =
        "capacity bounds, p = " + io::format_double(reports.front().params.p);
    io::write_svg_plot(reports, cfg.out_svg, plot);
    return kExitOk;
}

}  // namespace detail

inline int run(const std::vector<std::string>& args) {
    RunConfig cfg;
    std::string bbar_text = "1";

    CLI::App app{"Capacity bounds and online power control for the AWGN channel "
                 "with random battery recharges"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kVersion));

    auto add_common = [&](CLI::App* sub, bool with_grid) {
        sub->add_option("--p", cfg.p, "recharge probability in (0, 1]");
        if (with_grid)
            sub->add_option("--bbar", bbar_text,
                            "battery capacity, scalar or start:stop:count[:spacing]");
        else
            sub->add_option("--bbar", bbar_text, "battery capacity");
    };

    auto* bounds_cmd = app.add_subcommand("bounds", "evaluate capacity bounds");
    add_common(bounds_cmd, true);
    bounds_cmd->add_option("--tol", cfg.tol, "series truncation tolerance (bits)");
    bounds_cmd->add_option("--smith-tol", cfg.smith_tol,
                           "Smith solver certificate tolerance (bits)");
    bounds_cmd->add_option("--smith-budget", cfg.smith_budget,
                           "analytic fallback budget for far-tail Smith terms (bits)");
    bounds_cmd->add_option("--smith-m", cfg.smith_m, "Smith input grid size (odd)");
    bounds_cmd->add_option("--threads", cfg.threads,
                           "sweep worker count (default: RBRCAP_THREADS or cores)");
    bounds_cmd->add_option("--out", cfg.out_csv, "CSV output path");
    bounds_cmd->add_option("--svg", cfg.out_svg, "SVG output path");
    bounds_cmd->add_option("--series", cfg.series, "plot series: all, fig2 or fig3");

    auto* policy_cmd = app.add_subcommand("policy", "print the optimal allocation");
    add_common(policy_cmd, false);

    auto* sim_cmd = app.add_subcommand("simulate", "Monte-Carlo policy simulation");
    add_common(sim_cmd, false);
    sim_cmd->add_option("--policy", cfg.policy,
                        "optimal, greedy, zero or constant_fraction");
    sim_cmd->add_option("--fraction", cfg.fraction,
                        "fraction for constant_fraction");
    sim_cmd->add_option("--steps", cfg.steps, "channel uses to simulate");
    sim_cmd->add_option("--seed", cfg.seed, "RNG seed");

    auto* smith_cmd =
        app.add_subcommand("smith", "amplitude-constrained AWGN capacity");
    smith_cmd->add_option("--amplitude", cfg.amplitude, "peak amplitude A >= 0");
    smith_cmd->add_option("--tol", cfg.smith_tol, "certificate tolerance (bits)");
    smith_cmd->add_option("--m", cfg.smith_m, "input grid size (odd)");

    auto* plot_cmd = app.add_subcommand("plot", "render a bounds CSV as SVG");
    plot_cmd->add_option("--in", cfg.in_csv, "input CSV path")->required();
    plot_cmd->add_option("--out", cfg.out_svg, "output SVG path")->required();
    plot_cmd->add_option("--series", cfg.series, "plot series: all, fig2 or fig3");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        std::cout << app.help();
        return kExitOk;
    } catch (const CLI::CallForVersion&) {
        std::cout << kVersion << "\n";
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: config: " << e.what() << "\n";
        return kExitConfig;
    }

    try {
        cfg.b_bar_grid = GridSpec::parse(bbar_text);
        if (bounds_cmd->parsed()) {
            cfg.command = "bounds";
            validate_params(cfg.p, cfg.b_bar_grid.start);
            return detail::run_bounds(cfg);
        }
        if (policy_cmd->parsed()) {
            cfg.command = "policy";
            return detail::run_policy(cfg);
        }
        if (sim_cmd->parsed()) {
            cfg.command = "simulate";
            return detail::run_simulate(cfg);
        }
        if (smith_cmd->parsed()) {
            cfg.command = "smith";
            return detail::run_smith(cfg);
        }
        if (plot_cmd->parsed()) {
            cfg.command = "plot";
            return detail::run_plot(cfg);
        }
        std::cerr << "error: config: no command\n";
        return kExitConfig;
    } catch (const io::io_error& e) {
        std::cerr << "error: io: " << e.what() << "\n";
        return kExitIo;
    } catch (const convergence_error& e) {
        std::cerr << "error: solver: " << e.what() << "\n";
        return kExitSolver;
    } catch (const energy_violation& e) {
        std::cerr << "error: solver: " << e.what() << "\n";
        return kExitSolver;
    } catch (const std::domain_error& e) {
        std::cerr << "error: config: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: config: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: solver: " << e.what() << "\n";
        return kExitSolver;
    }
}

inline int run(int argc, const char* const* argv) {
    std::vector<std::string> args;
    args.reserve(static_cast<std::size_t>(argc > 0 ? argc - 1 : 0));
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args);
}

}  // namespace rbrcap::cli
