#include "sampsd/svg.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace sampsd::svg {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 460.0;
constexpr double kLeft = 64.0;
constexpr double kRight = 24.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 52.0;

struct Range {
    double lo = 0.0;
    double hi = 1.0;
};

Range padded(double lo, double hi) {
    if (!(hi > lo)) {
        const double pad = std::abs(lo) > 1e-12 ? std::abs(lo) * 0.1 : 0.5;
        return {lo - pad, hi + pad};
    }
    const double pad = (hi - lo) * 0.06;
    return {lo - pad, hi + pad};
}

std::string fmt(double v) {
    std::ostringstream s;
    s.precision(6);
    s << v;
    return s.str();
}

std::string escape(const std::string& text) {
    std::string out;
    for (char c : text) {
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

class Canvas {
public:
    Canvas(const std::string& title, const std::string& x_label, const std::string& y_label,
           Range x, Range y)
        : x_(x), y_(y) {
        out_ << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
             << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << kWidth
             << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight
             << "\">\n"
             << "<rect x=\"0\" y=\"0\" width=\"" << kWidth << "\" height=\"" << kHeight
             << "\" fill=\"white\"/>\n";
        out_ << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" "
             << "font-family=\"sans-serif\" font-size=\"15\">" << escape(title) << "</text>\n";
        axes(x_label, y_label);
    }

    double px(double x) const {
        return kLeft + (x - x_.lo) / (x_.hi - x_.lo) * (kWidth - kLeft - kRight);
    }
    double py(double y) const {
        return kHeight - kBottom - (y - y_.lo) / (y_.hi - y_.lo) * (kHeight - kTop - kBottom);
    }

    void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& color,
                  bool dashed) {
        if (pts.empty()) return;
        out_ << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.8\"";
        if (dashed) out_ << " stroke-dasharray=\"6 4\"";
        out_ << " points=\"";
        for (const auto& [x, y] : pts) out_ << fmt(px(x)) << "," << fmt(py(y)) << " ";
        out_ << "\"/>\n";
    }

    void marker(double x, double y, const std::string& shape, const std::string& color) {
        raw_marker(px(x), py(y), shape, color);
    }

    void raw_marker(double cx, double cy, const std::string& shape, const std::string& color) {
        const double r = 4.0;
        if (shape == "square") {
            out_ << "<rect x=\"" << fmt(cx - r) << "\" y=\"" << fmt(cy - r) << "\" width=\""
                 << 2 * r << "\" height=\"" << 2 * r << "\" fill=\"" << color << "\"/>\n";
        } else if (shape == "triangle") {
            out_ << "<polygon fill=\"" << color << "\" points=\"" << fmt(cx) << "," << fmt(cy - r)
                 << " " << fmt(cx - r) << "," << fmt(cy + r) << " " << fmt(cx + r) << ","
                 << fmt(cy + r) << "\"/>\n";
        } else if (shape == "diamond") {
            out_ << "<polygon fill=\"" << color << "\" points=\"" << fmt(cx) << "," << fmt(cy - r)
                 << " " << fmt(cx + r) << "," << fmt(cy) << " " << fmt(cx) << "," << fmt(cy + r)
                 << " " << fmt(cx - r) << "," << fmt(cy) << "\"/>\n";
        } else {
            out_ << "<circle cx=\"" << fmt(cx) << "\" cy=\"" << fmt(cy) << "\" r=\"" << r
                 << "\" fill=\"" << color << "\"/>\n";
        }
    }

    void legend_entry(std::size_t index, const std::string& name, const std::string& color,
                      const std::string& shape, bool dashed) {
        const double x = kWidth - kRight - 170.0;
        const double y = kTop + 8.0 + 16.0 * static_cast<double>(index);
        if (shape.empty()) {
            out_ << "<line x1=\"" << x << "\" y1=\"" << y - 4 << "\" x2=\"" << x + 22 << "\" y2=\""
                 << y - 4 << "\" stroke=\"" << color << "\" stroke-width=\"1.8\"";
            if (dashed) out_ << " stroke-dasharray=\"6 4\"";
            out_ << "/>\n";
        } else {
            raw_marker(x + 11, y - 4, shape, color);
        }
        out_ << "<text x=\"" << x + 28 << "\" y=\"" << y << "\" font-family=\"sans-serif\" "
             << "font-size=\"11\">" << escape(name) << "</text>\n";
    }

    std::string finish() {
        out_ << "</svg>\n";
        return out_.str();
    }

private:
    void axes(const std::string& x_label, const std::string& y_label) {
        out_ << "<line x1=\"" << kLeft << "\" y1=\"" << kHeight - kBottom << "\" x2=\""
             << kWidth - kRight << "\" y2=\"" << kHeight - kBottom
             << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
        out_ << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
             << kHeight - kBottom << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
        for (int i = 0; i <= 5; ++i) {
            const double tx = x_.lo + (x_.hi - x_.lo) * i / 5.0;
            const double ty = y_.lo + (y_.hi - y_.lo) * i / 5.0;
            out_ << "<line x1=\"" << fmt(px(tx)) << "\" y1=\"" << kHeight - kBottom << "\" x2=\""
                 << fmt(px(tx)) << "\" y2=\"" << kHeight - kBottom + 5
                 << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
            out_ << "<text x=\"" << fmt(px(tx)) << "\" y=\"" << kHeight - kBottom + 18
                 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">"
                 << fmt(tx) << "</text>\n";
            out_ << "<line x1=\"" << kLeft - 5 << "\" y1=\"" << fmt(py(ty)) << "\" x2=\"" << kLeft
                 << "\" y2=\"" << fmt(py(ty)) << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
            out_ << "<text x=\"" << kLeft - 8 << "\" y=\"" << fmt(py(ty) + 3)
                 << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">"
                 << fmt(ty) << "</text>\n";
        }
        out_ << "<text x=\"" << (kLeft + kWidth - kRight) / 2 << "\" y=\"" << kHeight - 14
             << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
             << escape(x_label) << "</text>\n";
        out_ << "<text x=\"16\" y=\"" << (kTop + kHeight - kBottom) / 2
             << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
             << "transform=\"rotate(-90 16 " << (kTop + kHeight - kBottom) / 2 << ")\">"
             << escape(y_label) << "</text>\n";
    }

    Range x_, y_;
    std::ostringstream out_;
};

template <typename T>
std::pair<Range, Range> data_ranges(const std::vector<T>& groups) {
    double xlo = 0.0, xhi = 1.0, ylo = 0.0, yhi = 1.0;
    bool first = true;
    for (const auto& g : groups) {
        for (const auto& [x, y] : g.points) {
            if (first) {
                xlo = xhi = x;
                ylo = yhi = y;
                first = false;
            } else {
                xlo = std::min(xlo, x);
                xhi = std::max(xhi, x);
                ylo = std::min(ylo, y);
                yhi = std::max(yhi, y);
            }
        }
    }
    return {padded(xlo, xhi), padded(ylo, yhi)};
}

}  // namespace

std::string line_plot(const std::string& title, const std::string& x_label,
                      const std::string& y_label, const std::vector<Series>& series) {
    const auto [xr, yr] = data_ranges(series);
    Canvas canvas(title, x_label, y_label, xr, yr);
    for (const auto& s : series) canvas.polyline(s.points, s.color, s.dashed);
    for (std::size_t i = 0; i < series.size(); ++i)
        canvas.legend_entry(i, series[i].name, series[i].color, "", series[i].dashed);
    return canvas.finish();
}

std::string scatter_plot(const std::string& title, const std::string& x_label,
                         const std::string& y_label, const std::vector<ScatterGroup>& groups) {
    const auto [xr, yr] = data_ranges(groups);
    Canvas canvas(title, x_label, y_label, xr, yr);
    for (const auto& g : groups)
        for (const auto& [x, y] : g.points) canvas.marker(x, y, g.shape, g.color);
    for (std::size_t i = 0; i < groups.size(); ++i)
        canvas.legend_entry(i, groups[i].name, groups[i].color, groups[i].shape, false);
    return canvas.finish();
}

}  // namespace sampsd::svg
