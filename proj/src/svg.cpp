#include "lwp/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace lwp::svg {

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

// White -> steel blue ramp for v in [0, 1].
std::string ramp(double v) {
    v = std::clamp(v, 0.0, 1.0);
    const auto mix = [v](int lo, int hi) { return static_cast<int>(std::lround(lo + (hi - lo) * v)); };
    char buf[16];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", mix(255, 31), mix(255, 91), mix(255, 160));
    return buf;
}

void header(std::ostringstream& out, double w, double h) {
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(w) << "\" height=\"" << fmt(h)
        << "\" viewBox=\"0 0 " << fmt(w) << ' ' << fmt(h) << "\">\n"
        << "<rect x=\"0\" y=\"0\" width=\"" << fmt(w) << "\" height=\"" << fmt(h) << "\" fill=\"#ffffff\"/>\n";
}

void text(std::ostringstream& out, double x, double y, const std::string& s, const char* anchor = "middle",
          int size = 12) {
    out << "<text x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" font-family=\"sans-serif\" font-size=\"" << size
        << "\" text-anchor=\"" << anchor << "\">" << xml_escape(s) << "</text>\n";
}

}  // namespace

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string accuracy_heatmap(const std::string& title, const std::vector<std::vector<double>>& rows) {
    constexpr double cell = 72.0, left = 90.0, top = 50.0, bottom = 40.0;
    const auto n = static_cast<double>(rows.size());
    const double w = left + cell * n + 20.0;
    const double h = top + cell * n + bottom;
    std::ostringstream out;
    header(out, w, h);
    text(out, w / 2.0, 24.0, title, "middle", 14);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const double y = top + cell * static_cast<double>(r);
        text(out, left - 8.0, y + cell / 2.0 + 4.0, "after " + std::to_string(r + 1), "end");
        for (std::size_t c = 0; c < rows[r].size(); ++c) {
            const double x = left + cell * static_cast<double>(c);
            const double v = rows[r][c];
            out << "<rect class=\"cell\" x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" width=\"" << fmt(cell) << "\" height=\""
                << fmt(cell) << "\" fill=\"" << ramp(v) << "\" stroke=\"#333333\"/>\n";
            text(out, x + cell / 2.0, y + cell / 2.0 + 4.0, fmt(v), "middle", 10);
        }
    }
    for (std::size_t c = 0; c < rows.size(); ++c) {
        text(out, left + cell * (static_cast<double>(c) + 0.5), top + cell * n + 20.0, "task " + std::to_string(c + 1));
    }
    out << "</svg>\n";
    return out.str();
}

std::string bar_chart(const std::string& title, const std::vector<std::pair<std::string, std::optional<double>>>& bars) {
    constexpr double bar = 60.0, gap = 30.0, left = 60.0, top = 50.0, plot_h = 240.0, bottom = 50.0;
    const double w = left + (bar + gap) * static_cast<double>(bars.size()) + gap;
    const double h = top + plot_h + bottom;
    double extent = 0.0;
    for (const auto& [_, v] : bars) {
        if (v) extent = std::max(extent, std::abs(*v));
    }
    if (extent == 0.0) extent = 1.0;
    const double zero_y = top + plot_h / 2.0;
    const double unit = (plot_h / 2.0) / extent;

    std::ostringstream out;
    header(out, w, h);
    text(out, w / 2.0, 24.0, title, "middle", 14);
    out << "<rect x=\"" << fmt(left - 4.0) << "\" y=\"" << fmt(zero_y) << "\" width=\"" << fmt(w - left)
        << "\" height=\"" << fmt(1.0) << "\" fill=\"#333333\"/>\n";
    text(out, left - 8.0, zero_y + 4.0, "0", "end", 10);
    for (std::size_t i = 0; i < bars.size(); ++i) {
        const auto& [label, v] = bars[i];
        const double x = left + gap + (bar + gap) * static_cast<double>(i);
        if (v) {
            const double len = std::abs(*v) * unit;
            const double y = *v >= 0.0 ? zero_y - len : zero_y;
            out << "<rect class=\"bar\" x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" width=\"" << fmt(bar) << "\" height=\""
                << fmt(len) << "\" fill=\"" << (*v >= 0.0 ? "#1f5ba0" : "#c0392b") << "\"/>\n";
            text(out, x + bar / 2.0, *v >= 0.0 ? y - 6.0 : y + len + 14.0, fmt(*v), "middle", 10);
        } else {
            text(out, x + bar / 2.0, zero_y - 6.0, "n/a", "middle", 10);
        }
        text(out, x + bar / 2.0, top + plot_h + 30.0, label);
    }
    out << "</svg>\n";
    return out.str();
}

}  // namespace lwp::svg
