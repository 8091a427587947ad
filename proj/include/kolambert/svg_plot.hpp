#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "kolambert/errors.hpp"
#include "kolambert/scenario.hpp"

namespace kolambert {

// Minimal self-contained SVG 1.1 line plot: one polyline per series, optional
// marker on a highlighted point, no external assets.

struct PlotSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

struct PlotSpec {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::vector<PlotSeries> series;
    std::optional<std::pair<double, double>> marker;
};

inline void write_svg_plot(const std::string& path, const PlotSpec& spec) {
    const double width = 800, height = 500;
    const double ml = 90, mr = 30, mt = 50, mb = 60;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& s : spec.series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            xmin = std::min(xmin, s.x[i]);
            xmax = std::max(xmax, s.x[i]);
            ymin = std::min(ymin, s.y[i]);
            ymax = std::max(ymax, s.y[i]);
        }
    if (!(xmax > xmin)) {
        xmin -= 1.0;
        xmax += 1.0;
    }
    if (!(ymax > ymin)) {
        ymin -= 1.0;
        ymax += 1.0;
    }
    const double ypad = 0.05 * (ymax - ymin);
    ymin -= ypad;
    ymax += ypad;
    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (width - ml - mr); };
    auto py = [&](double y) { return height - mb - (y - ymin) / (ymax - ymin) * (height - mt - mb); };

    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write " + path);
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << width
        << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    out << "  <rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height
        << "\" fill=\"white\"/>\n";
    out << "  <text x=\"" << width / 2 << "\" y=\"28\" text-anchor=\"middle\" font-size=\"18\">"
        << spec.title << "</text>\n";
    // axes
    out << "  <line x1=\"" << ml << "\" y1=\"" << height - mb << "\" x2=\"" << width - mr
        << "\" y2=\"" << height - mb << "\" stroke=\"black\"/>\n";
    out << "  <line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\""
        << height - mb << "\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 5; ++t) {
        const double fx = xmin + t * (xmax - xmin) / 5.0;
        const double fy = ymin + t * (ymax - ymin) / 5.0;
        out << "  <line x1=\"" << px(fx) << "\" y1=\"" << height - mb << "\" x2=\"" << px(fx)
            << "\" y2=\"" << height - mb + 6 << "\" stroke=\"black\"/>\n";
        out << "  <text x=\"" << px(fx) << "\" y=\"" << height - mb + 22
            << "\" text-anchor=\"middle\" font-size=\"12\">" << format_double(fx) << "</text>\n";
        out << "  <line x1=\"" << ml - 6 << "\" y1=\"" << py(fy) << "\" x2=\"" << ml << "\" y2=\""
            << py(fy) << "\" stroke=\"black\"/>\n";
        out << "  <text x=\"" << ml - 10 << "\" y=\"" << py(fy) + 4
            << "\" text-anchor=\"end\" font-size=\"12\">" << format_double(fy) << "</text>\n";
    }
    out << "  <text x=\"" << (ml + width - mr) / 2 << "\" y=\"" << height - 14
        << "\" text-anchor=\"middle\" font-size=\"14\">" << spec.x_label << "</text>\n";
    out << "  <text x=\"22\" y=\"" << (mt + height - mb) / 2
        << "\" text-anchor=\"middle\" font-size=\"14\" transform=\"rotate(-90 22 "
        << (mt + height - mb) / 2 << ")\">" << spec.y_label << "</text>\n";
    int color_index = 0;
    for (const auto& s : spec.series) {
        out << "  <polyline fill=\"none\" stroke=\"" << colors[color_index % 4]
            << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (i) out << " ";
            out << px(s.x[i]) << "," << py(s.y[i]);
        }
        out << "\"/>\n";
        if (!s.label.empty())
            out << "  <text x=\"" << width - mr - 8 << "\" y=\"" << mt + 16 + 18 * color_index
                << "\" text-anchor=\"end\" font-size=\"12\" fill=\"" << colors[color_index % 4]
                << "\">" << s.label << "</text>\n";
        ++color_index;
    }
    if (spec.marker) {
        out << "  <circle cx=\"" << px(spec.marker->first) << "\" cy=\"" << py(spec.marker->second)
            << "\" r=\"5\" fill=\"none\" stroke=\"#d62728\" stroke-width=\"2\"/>\n";
    }
    out << "</svg>\n";
    if (!out) throw Error("write failed for " + path);
}

}  // namespace kolambert
