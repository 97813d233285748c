#pragma once

#include "rbrcap/bounds.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace rbrcap::io {

struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shortest decimal representation that parses back to the identical double.
inline std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline constexpr std::string_view kCsvHeader =
    "p,b_bar,n_tilde,causal_upper_bits,causal_lower_bits,noncausal_upper_bits,"
    "noncausal_lower_analytic_bits,noncausal_lower_smith_bits,"
    "infinite_battery_bits";

inline void write_csv(const std::vector<BoundsReport>& reports,
                      const std::string& path) {
    if (reports.empty()) throw std::invalid_argument("no reports to write");
    std::string out;
    out.append(kCsvHeader);
    out.push_back('\n');
    for (const auto& r : reports) {
        out += format_double(r.params.p);
        out.push_back(',');
        out += format_double(r.params.b_bar);
        out.push_back(',');
        out += std::to_string(r.n_tilde);
        out.push_back(',');
        out += format_double(r.causal_upper.bits);
        out.push_back(',');
        out += format_double(r.causal_lower.bits);
        out.push_back(',');
        out += format_double(r.noncausal_upper.bits);
        out.push_back(',');
        out += format_double(r.noncausal_lower_analytic.bits);
        out.push_back(',');
        out += format_double(r.noncausal_lower_smith.bits);
        out.push_back(',');
        out += format_double(r.infinite_battery_upper.bits);
        out.push_back('\n');
    }
    std::ofstream file(path, std::ios::binary);
    if (!file) throw io_error("cannot open for writing: " + path);
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!file) throw io_error("write failed: " + path);
}

namespace detail {

inline double parse_double(std::string_view field, const std::string& path) {
    double value = 0.0;
    const auto res = std::from_chars(field.data(), field.data() + field.size(), value);
    if (res.ec != std::errc{} || res.ptr != field.data() + field.size())
        throw io_error("malformed numeric field '" + std::string(field) + "' in " + path);
    return value;
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return fields;
}

}  // namespace detail

inline std::vector<BoundsReport> read_csv(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw io_error("cannot open for reading: " + path);
    std::string line;
    if (!std::getline(file, line)) throw io_error("empty CSV: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kCsvHeader) throw io_error("unexpected CSV header in " + path);

    std::vector<BoundsReport> reports;
    while (std::getline(file, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = detail::split(line, ',');
        if (fields.size() != 9) throw io_error("malformed CSV row in " + path);
        BoundsReport r;
        r.params.p = detail::parse_double(fields[0], path);
        r.params.b_bar = detail::parse_double(fields[1], path);
        r.n_tilde = static_cast<long>(detail::parse_double(fields[2], path));
        r.causal_upper.bits = detail::parse_double(fields[3], path);
        r.causal_lower.bits = detail::parse_double(fields[4], path);
        r.noncausal_upper.bits = detail::parse_double(fields[5], path);
        r.noncausal_lower_analytic.bits = detail::parse_double(fields[6], path);
        r.noncausal_lower_smith.bits = detail::parse_double(fields[7], path);
        r.infinite_battery_upper.bits = detail::parse_double(fields[8], path);
        reports.push_back(r);
    }
    if (reports.empty()) throw io_error("CSV has no data rows: " + path);
    return reports;
}

// Which bound curves a plot carries. "fig2" is the causal band view, "fig3"
// overlays the Smith-backed noncausal lower bound on the causal upper bound.
enum class SeriesPreset { all, fig2, fig3 };

struct PlotOptions {
    SeriesPreset preset = SeriesPreset::all;
    std::string title;
    // Echoed verbatim into an SVG comment so every plot records how to
    // reproduce it.
    std::string metadata;
};

namespace detail {

inline std::string format_fixed(double v, int precision = 2) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
    return std::string(buf);
}

}  // namespace detail

// Self-contained SVG plot of bound curves versus b_bar. The x axis is
// logarithmic when the grid is geometric. Lower bounds are clamped at 0 for
// display only; CSV output keeps them unclamped. The band between the causal
// bounds is shaded as in the reference figures.
inline void write_svg_plot(const std::vector<BoundsReport>& reports,
                           const std::string& path, const PlotOptions& options) {
    if (reports.size() < 2)
        throw std::invalid_argument("plot needs at least 2 grid points");

    // Detect geometric spacing from the data.
    bool log_x = true;
    {
        for (const auto& r : reports)
            if (!(r.params.b_bar > 0.0)) log_x = false;
        if (log_x && reports.size() >= 3) {
            const double r0 = std::log(reports[1].params.b_bar /
                                       reports[0].params.b_bar);
            for (std::size_t i = 2; i < reports.size() && log_x; ++i) {
                const double ri = std::log(reports[i].params.b_bar /
                                           reports[i - 1].params.b_bar);
                if (std::abs(ri - r0) > 1e-9 * std::max(1.0, std::abs(r0)))
                    log_x = false;
            }
        }
    }

    struct Curve {
        const char* label;
        const char* color;
        const char* dash;
        std::vector<double> values;
    };
    std::vector<Curve> curves;
    const auto add_curve = [&](const char* label, const char* color,
                               const char* dash, RateValue BoundsReport::*fld,
                               bool clamp) {
        Curve c{label, color, dash, {}};
        c.values.reserve(reports.size());
        for (const auto& r : reports) {
            const double v = (r.*fld).bits;
            c.values.push_back(clamp ? std::max(v, 0.0) : v);
        }
        curves.push_back(std::move(c));
    };

    const bool with_noncausal = options.preset != SeriesPreset::fig2;
    const bool with_causal_band = options.preset != SeriesPreset::fig3;
    if (with_causal_band) {
        add_curve("causal upper", "#1f77b4", "", &BoundsReport::causal_upper, false);
        add_curve("causal lower", "#1f77b4", "6 3", &BoundsReport::causal_lower, true);
        add_curve("infinite battery", "#7f7f7f", "2 3",
                  &BoundsReport::infinite_battery_upper, false);
    }
    if (options.preset == SeriesPreset::all) {
        add_curve("noncausal upper", "#d62728", "", &BoundsReport::noncausal_upper,
                  false);
        add_curve("noncausal lower (analytic)", "#d62728", "6 3",
                  &BoundsReport::noncausal_lower_analytic, true);
    }
    if (options.preset == SeriesPreset::fig3) {
        add_curve("causal upper", "#1f77b4", "", &BoundsReport::causal_upper, false);
    }
    if (with_noncausal) {
        add_curve("noncausal lower (Smith)", "#2ca02c", "",
                  &BoundsReport::noncausal_lower_smith, with_causal_band);
    }

    const double width = 900.0, height = 560.0;
    const double left = 80.0, right = 870.0, top = 40.0, bottom = 500.0;

    const double x_lo = log_x ? std::log10(reports.front().params.b_bar)
                              : reports.front().params.b_bar;
    const double x_hi = log_x ? std::log10(reports.back().params.b_bar)
                              : reports.back().params.b_bar;
    double y_hi = 0.0;
    for (const auto& c : curves)
        for (double v : c.values) y_hi = std::max(y_hi, v);
    if (y_hi <= 0.0) y_hi = 1.0;
    y_hi *= 1.05;

    const auto x_pix = [&](double b_bar) {
        const double x = log_x ? std::log10(b_bar) : b_bar;
        return left + (x - x_lo) / (x_hi - x_lo) * (right - left);
    };
    const auto y_pix = [&](double v) {
        const double clamped = std::max(v, 0.0);
        return bottom - clamped / y_hi * (bottom - top);
    };

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
           detail::format_fixed(width, 0) + "\" height=\"" +
           detail::format_fixed(height, 0) + "\" viewBox=\"0 0 " +
           detail::format_fixed(width, 0) + " " + detail::format_fixed(height, 0) +
           "\">\n";
    if (!options.metadata.empty())
        svg += "<!-- " + options.metadata + " -->\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

    // Shaded region between the causal bounds.
    if (with_causal_band) {
        std::string d = "M";
        for (const auto& r : reports)
            d += " " + detail::format_fixed(x_pix(r.params.b_bar)) + " " +
                 detail::format_fixed(y_pix(r.causal_upper.bits));
        for (auto it = reports.rbegin(); it != reports.rend(); ++it)
            d += " L " + detail::format_fixed(x_pix(it->params.b_bar)) + " " +
                 detail::format_fixed(y_pix(it->causal_lower.bits));
        d += " Z";
        svg += "<path d=\"" + d +
               "\" fill=\"#9ecae1\" fill-opacity=\"0.45\" stroke=\"none\"/>\n";
    }

    // Axes.
    svg += "<line x1=\"" + detail::format_fixed(left) + "\" y1=\"" +
           detail::format_fixed(bottom) + "\" x2=\"" + detail::format_fixed(right) +
           "\" y2=\"" + detail::format_fixed(bottom) +
           "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    svg += "<line x1=\"" + detail::format_fixed(left) + "\" y1=\"" +
           detail::format_fixed(top) + "\" x2=\"" + detail::format_fixed(left) +
           "\" y2=\"" + detail::format_fixed(bottom) +
           "\" stroke=\"black\" stroke-width=\"1\"/>\n";

    // X ticks: decades when logarithmic, six even steps otherwise.
    if (log_x) {
        const long k_lo = static_cast<long>(std::ceil(x_lo - 1e-9));
        const long k_hi = static_cast<long>(std::floor(x_hi + 1e-9));
        for (long k = k_lo; k <= k_hi; ++k) {
            const double bx = std::pow(10.0, static_cast<double>(k));
            const double px = x_pix(bx);
            svg += "<line x1=\"" + detail::format_fixed(px) + "\" y1=\"" +
                   detail::format_fixed(bottom) + "\" x2=\"" +
                   detail::format_fixed(px) + "\" y2=\"" +
                   detail::format_fixed(bottom + 6.0) + "\" stroke=\"black\"/>\n";
            svg += "<text x=\"" + detail::format_fixed(px) + "\" y=\"" +
                   detail::format_fixed(bottom + 22.0) +
                   "\" font-size=\"13\" text-anchor=\"middle\">1e" +
                   std::to_string(k) + "</text>\n";
        }
    } else {
        for (int t = 0; t <= 6; ++t) {
            const double bx = x_lo + (x_hi - x_lo) * t / 6.0;
            const double px = x_pix(bx);
            svg += "<line x1=\"" + detail::format_fixed(px) + "\" y1=\"" +
                   detail::format_fixed(bottom) + "\" x2=\"" +
                   detail::format_fixed(px) + "\" y2=\"" +
                   detail::format_fixed(bottom + 6.0) + "\" stroke=\"black\"/>\n";
            svg += "<text x=\"" + detail::format_fixed(px) + "\" y=\"" +
                   detail::format_fixed(bottom + 22.0) +
                   "\" font-size=\"13\" text-anchor=\"middle\">" +
                   detail::format_fixed(bx, 3) + "</text>\n";
        }
    }

    // Y ticks on a 1-2-5 grid.
    {
        const double raw = y_hi / 6.0;
        const double mag = std::pow(10.0, std::floor(std::log10(raw)));
        double step = mag;
        if (raw / mag > 5.0) step = 10.0 * mag;
        else if (raw / mag > 2.0) step = 5.0 * mag;
        else if (raw / mag > 1.0) step = 2.0 * mag;
        for (double v = 0.0; v <= y_hi + 1e-12; v += step) {
            const double py = y_pix(v);
            svg += "<line x1=\"" + detail::format_fixed(left - 6.0) + "\" y1=\"" +
                   detail::format_fixed(py) + "\" x2=\"" + detail::format_fixed(left) +
                   "\" y2=\"" + detail::format_fixed(py) + "\" stroke=\"black\"/>\n";
            svg += "<text x=\"" + detail::format_fixed(left - 10.0) + "\" y=\"" +
                   detail::format_fixed(py + 4.0) +
                   "\" font-size=\"13\" text-anchor=\"end\">" +
                   detail::format_fixed(v, 2) + "</text>\n";
        }
    }

    // Axis labels and title.
    svg += "<text x=\"" + detail::format_fixed((left + right) / 2.0) + "\" y=\"" +
           detail::format_fixed(height - 12.0) +
           "\" font-size=\"15\" text-anchor=\"middle\">battery capacity "
           "(noise-variance units)</text>\n";
    svg += "<text x=\"22\" y=\"" + detail::format_fixed((top + bottom) / 2.0) +
           "\" font-size=\"15\" text-anchor=\"middle\" transform=\"rotate(-90 22 " +
           detail::format_fixed((top + bottom) / 2.0) +
           ")\">bits / channel use</text>\n";
    if (!options.title.empty())
        svg += "<text x=\"" + detail::format_fixed((left + right) / 2.0) +
               "\" y=\"24\" font-size=\"16\" text-anchor=\"middle\">" +
               options.title + "</text>\n";

    // Curves.
    for (const auto& c : curves) {
        std::string pts;
        for (std::size_t i = 0; i < reports.size(); ++i) {
            if (i) pts += " ";
            pts += detail::format_fixed(x_pix(reports[i].params.b_bar)) + "," +
                   detail::format_fixed(y_pix(c.values[i]));
        }
        svg += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" +
               std::string(c.color) + "\" stroke-width=\"1.8\"";
        if (c.dash[0] != '\0')
            svg += " stroke-dasharray=\"" + std::string(c.dash) + "\"";
        svg += "/>\n";
    }

    // Legend.
    {
        double ly = top + 14.0;
        for (const auto& c : curves) {
            svg += "<line x1=\"" + detail::format_fixed(left + 14.0) + "\" y1=\"" +
                   detail::format_fixed(ly - 4.0) + "\" x2=\"" +
                   detail::format_fixed(left + 46.0) + "\" y2=\"" +
                   detail::format_fixed(ly - 4.0) + "\" stroke=\"" +
                   std::string(c.color) + "\" stroke-width=\"1.8\"";
            if (c.dash[0] != '\0')
                svg += " stroke-dasharray=\"" + std::string(c.dash) + "\"";
            svg += "/>\n";
            svg += "<text x=\"" + detail::format_fixed(left + 52.0) + "\" y=\"" +
                   detail::format_fixed(ly) + "\" font-size=\"13\">" +
                   std::string(c.label) + "</text>\n";
            ly += 18.0;
        }
    }

    svg += "</svg>\n";

    std::ofstream file(path, std::ios::binary);
    if (!file) throw io_error("cannot open for writing: " + path);
    file.write(svg.data(), static_cast<std::streamsize>(svg.size()));
    if (!file) throw io_error("write failed: " + path);
}

}  // namespace rbrcap::io
