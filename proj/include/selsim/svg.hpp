#pragma once

// Tiny static SVG chart writer: enough for accuracy curves, latency bars and
// byte scaling plots. No interactivity, no dependencies.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "selsim/csv.hpp"

namespace selsim::svg {

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

inline const char* color(size_t i) {
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                    "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};
    return palette[i % 8];
}

namespace detail {

struct Frame {
    double w = 720, h = 440;
    double ml = 70, mr = 160, mt = 40, mb = 50;
    double xmin = 0, xmax = 1, ymin = 0, ymax = 1;

    double px(double x) const { return ml + (x - xmin) / (xmax - xmin) * (w - ml - mr); }
    double py(double y) const { return h - mb - (y - ymin) / (ymax - ymin) * (h - mt - mb); }
};

inline void fit(Frame& f, const std::vector<Series>& series) {
    bool any = false;
    for (const auto& s : series)
        for (size_t i = 0; i < s.x.size(); ++i) {
            if (!any) {
                f.xmin = f.xmax = s.x[i];
                f.ymin = f.ymax = s.y[i];
                any = true;
            }
            f.xmin = std::min(f.xmin, s.x[i]);
            f.xmax = std::max(f.xmax, s.x[i]);
            f.ymin = std::min(f.ymin, s.y[i]);
            f.ymax = std::max(f.ymax, s.y[i]);
        }
    if (!any) throw std::invalid_argument("svg: nothing to plot");
    if (f.xmax == f.xmin) f.xmax = f.xmin + 1;
    if (f.ymax == f.ymin) f.ymax = f.ymin + std::max(1.0, std::fabs(f.ymin) * 0.1);
    double pad = 0.05 * (f.ymax - f.ymin);
    f.ymin -= pad;
    f.ymax += pad;
}

inline void axes(std::ofstream& o, const Frame& f, const std::string& title,
                 const std::string& xlabel, const std::string& ylabel) {
    o << "<rect width='" << f.w << "' height='" << f.h << "' fill='white'/>\n";
    o << "<text x='" << f.w / 2 << "' y='22' text-anchor='middle' font-size='16' "
      << "font-family='sans-serif'>" << title << "</text>\n";
    o << "<line x1='" << f.ml << "' y1='" << f.h - f.mb << "' x2='" << f.w - f.mr << "' y2='"
      << f.h - f.mb << "' stroke='black'/>\n";
    o << "<line x1='" << f.ml << "' y1='" << f.mt << "' x2='" << f.ml << "' y2='" << f.h - f.mb
      << "' stroke='black'/>\n";
    for (int i = 0; i <= 5; ++i) {
        double x = f.xmin + (f.xmax - f.xmin) * i / 5.0;
        double y = f.ymin + (f.ymax - f.ymin) * i / 5.0;
        o << "<text x='" << f.px(x) << "' y='" << f.h - f.mb + 18
          << "' text-anchor='middle' font-size='11' font-family='sans-serif'>" << fmt_double(x)
          << "</text>\n";
        o << "<text x='" << f.ml - 8 << "' y='" << f.py(y) + 4
          << "' text-anchor='end' font-size='11' font-family='sans-serif'>" << fmt_double(y)
          << "</text>\n";
    }
    o << "<text x='" << (f.ml + f.w - f.mr) / 2 << "' y='" << f.h - 12
      << "' text-anchor='middle' font-size='13' font-family='sans-serif'>" << xlabel
      << "</text>\n";
    o << "<text x='18' y='" << (f.mt + f.h - f.mb) / 2
      << "' text-anchor='middle' font-size='13' font-family='sans-serif' transform='rotate(-90 18 "
      << (f.mt + f.h - f.mb) / 2 << ")'>" << ylabel << "</text>\n";
}

inline void legend(std::ofstream& o, const Frame& f, const std::vector<Series>& series) {
    for (size_t i = 0; i < series.size(); ++i) {
        double y = f.mt + 16 * static_cast<double>(i);
        o << "<line x1='" << f.w - f.mr + 10 << "' y1='" << y << "' x2='" << f.w - f.mr + 34
          << "' y2='" << y << "' stroke='" << color(i) << "' stroke-width='2'/>\n";
        o << "<text x='" << f.w - f.mr + 40 << "' y='" << y + 4
          << "' font-size='12' font-family='sans-serif'>" << series[i].label << "</text>\n";
    }
}

}  // namespace detail

inline void line_chart(const std::string& path, const std::string& title,
                       const std::string& xlabel, const std::string& ylabel,
                       const std::vector<Series>& series) {
    if (series.empty()) throw std::invalid_argument("svg: no series");
    detail::Frame f;
    detail::fit(f, series);
    std::ofstream o(path);
    if (!o) throw std::runtime_error("cannot open for writing: " + path);
    o << "<svg xmlns='http://www.w3.org/2000/svg' width='" << f.w << "' height='" << f.h
      << "'>\n";
    detail::axes(o, f, title, xlabel, ylabel);
    for (size_t si = 0; si < series.size(); ++si) {
        const Series& s = series[si];
        o << "<polyline fill='none' stroke='" << color(si) << "' stroke-width='2' points='";
        for (size_t i = 0; i < s.x.size(); ++i)
            o << f.px(s.x[i]) << ',' << f.py(s.y[i]) << ' ';
        o << "'/>\n";
        for (size_t i = 0; i < s.x.size(); ++i)
            o << "<circle cx='" << f.px(s.x[i]) << "' cy='" << f.py(s.y[i]) << "' r='2.5' fill='"
              << color(si) << "'/>\n";
    }
    detail::legend(o, f, series);
    o << "</svg>\n";
}

struct BarGroup {
    std::string label;                   // group under the x axis
    std::vector<double> values;          // one per stack segment
};

/// Stacked bars, one group per label; segment_names drive the legend.
inline void stacked_bars(const std::string& path, const std::string& title,
                         const std::string& ylabel, const std::vector<std::string>& segment_names,
                         const std::vector<BarGroup>& groups) {
    if (groups.empty()) throw std::invalid_argument("svg: no bars");
    detail::Frame f;
    f.xmin = 0;
    f.xmax = static_cast<double>(groups.size());
    f.ymin = 0;
    f.ymax = 0;
    for (const auto& g : groups) {
        double total = 0;
        for (double v : g.values) total += v;
        f.ymax = std::max(f.ymax, total);
    }
    if (f.ymax == 0) f.ymax = 1;
    f.ymax *= 1.08;
    std::ofstream o(path);
    if (!o) throw std::runtime_error("cannot open for writing: " + path);
    o << "<svg xmlns='http://www.w3.org/2000/svg' width='" << f.w << "' height='" << f.h
      << "'>\n";
    detail::axes(o, f, title, "", ylabel);
    double slot = (f.w - f.ml - f.mr) / static_cast<double>(groups.size());
    for (size_t gi = 0; gi < groups.size(); ++gi) {
        double x = f.ml + slot * (static_cast<double>(gi) + 0.25);
        double width = slot * 0.5;
        double base = 0;
        for (size_t si = 0; si < groups[gi].values.size(); ++si) {
            double v = groups[gi].values[si];
            double y0 = f.py(base), y1 = f.py(base + v);
            o << "<rect x='" << x << "' y='" << y1 << "' width='" << width << "' height='"
              << (y0 - y1) << "' fill='" << color(si) << "'/>\n";
            base += v;
        }
        o << "<text x='" << x + width / 2 << "' y='" << f.h - f.mb + 18
          << "' text-anchor='middle' font-size='11' font-family='sans-serif'>"
          << groups[gi].label << "</text>\n";
    }
    std::vector<Series> legend_stub;
    for (const auto& n : segment_names) legend_stub.push_back({n, {}, {}});
    detail::legend(o, f, legend_stub);
    o << "</svg>\n";
}

}  // namespace selsim::svg
