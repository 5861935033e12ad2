#pragma once

// Minimal static SVG line charts for batch output.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

namespace fcrbess::svg {

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

namespace detail {
inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}
inline std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '<') out += "&lt;";
        else if (c == '>') out += "&gt;";
        else if (c == '&') out += "&amp;";
        else out += c;
    }
    return out;
}
}  // namespace detail

inline void line_chart(std::ostream& os, const std::string& title, const std::string& x_label,
                       const std::vector<Series>& series, int width = 800, int height = 400) {
    constexpr double ml = 60, mr = 20, mt = 30, mb = 40;
    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    for (const auto& s : series)
        for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            x0 = std::min(x0, s.x[i]);
            x1 = std::max(x1, s.x[i]);
            y0 = std::min(y0, s.y[i]);
            y1 = std::max(y1, s.y[i]);
        }
    if (!(x1 > x0)) { x0 -= 0.5; x1 += 0.5; }
    if (!(y1 > y0)) { y0 -= 0.5; y1 += 0.5; }
    const double pw = width - ml - mr, ph = height - mt - mb;
    auto px = [&](double x) { return ml + (x - x0) / (x1 - x0) * pw; };
    auto py = [&](double y) { return mt + (1.0 - (y - y0) / (y1 - y0)) * ph; };
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
       << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << width / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">" << detail::escape(title)
       << "</text>\n";
    os << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
       << "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (int t = 0; t <= 4; ++t) {
        const double fx = x0 + (x1 - x0) * t / 4.0, fy = y0 + (y1 - y0) * t / 4.0;
        os << "<text x=\"" << detail::num(px(fx)) << "\" y=\"" << detail::num(mt + ph + 15)
           << "\" text-anchor=\"middle\">" << detail::num(fx) << "</text>\n";
        os << "<text x=\"" << detail::num(ml - 5) << "\" y=\"" << detail::num(py(fy) + 4) << "\" text-anchor=\"end\">"
           << detail::num(fy) << "</text>\n";
    }
    os << "<text x=\"" << detail::num(ml + pw / 2) << "\" y=\"" << height - 5 << "\" text-anchor=\"middle\">"
       << detail::escape(x_label) << "</text>\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        const char* color = colors[k % 6];
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1\" points=\"";
        // Thin long series to about two points per pixel column.
        const std::size_t n = std::min(s.x.size(), s.y.size());
        const std::size_t stride = std::max<std::size_t>(1, n / static_cast<std::size_t>(2 * pw));
        for (std::size_t i = 0; i < n; i += stride)
            if (std::isfinite(s.x[i]) && std::isfinite(s.y[i]))
                os << detail::num(px(s.x[i])) << ',' << detail::num(py(s.y[i])) << ' ';
        os << "\"/>\n";
        os << "<text x=\"" << detail::num(ml + 10) << "\" y=\"" << detail::num(mt + 15 + 14.0 * k) << "\" fill=\""
           << color << "\">" << detail::escape(s.label) << "</text>\n";
    }
    os << "</svg>\n";
}

}  // namespace fcrbess::svg
