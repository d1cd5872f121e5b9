#ifndef PEXP_SVG_HPP
#define PEXP_SVG_HPP

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "error.hpp"

// Minimal polyline plots: enough for truth / mean / envelope figures.

namespace pexp::svg {

struct Series {
    std::vector<double> x;
    std::vector<double> y;
    std::string color = "black";
    double width = 1.5;
    bool dashed = false;
    std::string label;
};

struct Band {
    std::vector<double> x;
    std::vector<double> lower;
    std::vector<double> upper;
    std::string color = "#9ecae1";
    double opacity = 0.6;
    std::string label;
};

class Plot {
public:
    explicit Plot(std::string title, double width = 480, double height = 320)
        : title_(std::move(title)), w_(width), h_(height) {}

    void add(Series s) { series_.push_back(std::move(s)); }
    void add(Band b) { bands_.push_back(std::move(b)); }

    std::string render() const {
        double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
        auto extend = [&](const std::vector<double>& xs, const std::vector<double>& ys) {
            for (double v : xs) { x0 = std::min(x0, v); x1 = std::max(x1, v); }
            for (double v : ys) {
                if (!std::isfinite(v)) continue;
                y0 = std::min(y0, v);
                y1 = std::max(y1, v);
            }
        };
        for (const auto& b : bands_) { extend(b.x, b.lower); extend(b.x, b.upper); }
        for (const auto& s : series_) extend(s.x, s.y);
        if (!(x1 > x0)) { x0 -= 0.5; x1 += 0.5; }
        if (!(y1 > y0)) { y0 -= 0.5; y1 += 0.5; }
        const double pad = 0.05 * (y1 - y0);
        y0 -= pad;
        y1 += pad;

        const double ml = 56, mr = 12, mt = 28, mb = 36;
        const double pw = w_ - ml - mr, ph = h_ - mt - mb;
        auto px = [&](double x) { return ml + (x - x0) / (x1 - x0) * pw; };
        auto py = [&](double y) { return mt + (y1 - y) / (y1 - y0) * ph; };

        std::ostringstream os;
        os.precision(6);
        os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w_ << "\" height=\"" << h_ << "\" viewBox=\"0 0 "
           << w_ << ' ' << h_ << "\">\n";
        os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
        os << "<text x=\"" << w_ / 2 << "\" y=\"18\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
           << escape(title_) << "</text>\n";
        os << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
           << "\" fill=\"none\" stroke=\"#444\"/>\n";
        for (int i = 0; i <= 4; ++i) {
            const double xv = x0 + (x1 - x0) * i / 4.0;
            const double yv = y0 + (y1 - y0) * i / 4.0;
            os << "<text x=\"" << px(xv) << "\" y=\"" << mt + ph + 14
               << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" << tick(xv) << "</text>\n";
            os << "<text x=\"" << ml - 4 << "\" y=\"" << py(yv) + 3
               << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << tick(yv) << "</text>\n";
        }
        for (const auto& b : bands_) {
            os << "<polygon fill=\"" << b.color << "\" fill-opacity=\"" << b.opacity << "\" stroke=\"none\" points=\"";
            for (std::size_t i = 0; i < b.x.size(); ++i) os << px(b.x[i]) << ',' << py(b.upper[i]) << ' ';
            for (std::size_t i = b.x.size(); i-- > 0;) os << px(b.x[i]) << ',' << py(b.lower[i]) << ' ';
            os << "\"/>\n";
        }
        for (const auto& s : series_) {
            os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"" << s.width << '"';
            if (s.dashed) os << " stroke-dasharray=\"5,3\"";
            os << " points=\"";
            for (std::size_t i = 0; i < s.x.size(); ++i) os << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
            os << "\"/>\n";
        }
        double ly = mt + 12;
        auto legend = [&](const std::string& label, const std::string& color) {
            if (label.empty()) return;
            os << "<rect x=\"" << ml + pw - 110 << "\" y=\"" << ly - 8 << "\" width=\"10\" height=\"10\" fill=\"" << color
               << "\"/>\n";
            os << "<text x=\"" << ml + pw - 95 << "\" y=\"" << ly + 1
               << "\" font-family=\"sans-serif\" font-size=\"10\">" << escape(label) << "</text>\n";
            ly += 14;
        };
        for (const auto& s : series_) legend(s.label, s.color);
        for (const auto& b : bands_) legend(b.label, b.color);
        os << "</svg>\n";
        return os.str();
    }

    void write(const std::string& path) const {
        std::ofstream f(path);
        if (!f) throw ConfigError("output", "cannot write " + path);
        f << render();
    }

private:
    static std::string tick(double v) {
        std::ostringstream s;
        s.precision(3);
        s << (std::abs(v) < 1e-12 ? 0.0 : v);
        return s.str();
    }

    static std::string escape(const std::string& s) {
        std::string out;
        for (char c : s) {
            if (c == '<') out += "&lt;";
            else if (c == '>') out += "&gt;";
            else if (c == '&') out += "&amp;";
            else out += c;
        }
        return out;
    }

    std::string title_;
    double w_, h_;
    std::vector<Series> series_;
    std::vector<Band> bands_;
};

} // namespace pexp::svg

#endif
