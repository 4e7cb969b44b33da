#pragma once

// Minimal plot writers: heatmaps as PNG (libpng) and SVG, line/scatter
// charts as SVG. No timestamps or other run-dependent metadata are written.

#include <png.h>

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "opg/error.hpp"
#include "opg/spectrum.hpp"

namespace opg::plot {

using Rgb = std::array<unsigned char, 3>;

/// Viridis sampled at nine stops, linearly interpolated.
inline Rgb colormap(double t) {
    static constexpr double stops[9][3] = {
        {68, 1, 84},    {71, 44, 122},  {59, 81, 139},  {44, 113, 142}, {33, 144, 141},
        {39, 173, 129}, {92, 200, 99},  {170, 220, 50}, {253, 231, 37}};
    t = std::clamp(std::isfinite(t) ? t : 0.0, 0.0, 1.0) * 8.0;
    const int i = std::min(static_cast<int>(t), 7);
    const double f = t - i;
    Rgb out;
    for (int c = 0; c < 3; ++c)
        out[static_cast<std::size_t>(c)] =
            static_cast<unsigned char>(std::lround(stops[i][c] + f * (stops[i + 1][c] - stops[i][c])));
    return out;
}

/// RGB raster of a map: wavelength increases upward, angle to the right.
/// Values are scaled to the map maximum; log_decades > 0 uses a log scale
/// spanning that many decades.
inline std::vector<Rgb> raster(const SpectrumMap& map, double log_decades = 0.0) {
    const Eigen::Index R = map.rows(), C = map.cols();
    const double peak = map.intensity.maxCoeff();
    std::vector<Rgb> px(static_cast<std::size_t>(R * C));
    for (Eigen::Index r = 0; r < R; ++r)
        for (Eigen::Index c = 0; c < C; ++c) {
            double v = peak > 0.0 ? map.intensity(r, c) / peak : 0.0;
            if (log_decades > 0.0) v = v > 0.0 ? 1.0 + std::log10(v) / log_decades : 0.0;
            px[static_cast<std::size_t>((R - 1 - r) * C + c)] = colormap(v);
        }
    return px;
}

namespace detail {

inline void png_append(png_structp png, png_bytep data, png_size_t len) {
    auto* out = static_cast<std::string*>(png_get_io_ptr(png));
    out->append(reinterpret_cast<const char*>(data), len);
}

inline void png_flush(png_structp) {}

}  // namespace detail

/// Encodes an 8-bit RGB image.
inline std::string encode_png(const std::vector<Rgb>& pixels, int width, int height) {
    if (width <= 0 || height <= 0 || pixels.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
        throw ValidationError("image size does not match pixel count");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw NumericalError("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    std::string out;
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, info ? &info : nullptr);
        throw NumericalError("PNG encoding failed");
    }
    png_set_write_fn(png, &out, detail::png_append, detail::png_flush);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < height; ++y) {
        auto* row = const_cast<png_bytep>(pixels[static_cast<std::size_t>(y) * static_cast<std::size_t>(width)].data());
        png_write_row(png, row);
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

inline std::string heatmap_png(const SpectrumMap& map, double log_decades = 0.0) {
    return encode_png(raster(map, log_decades), static_cast<int>(map.cols()), static_cast<int>(map.rows()));
}

inline std::string base64(const std::string& bytes) {
    static constexpr char table[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 2 < bytes.size(); i += 3) {
        const unsigned v = (static_cast<unsigned char>(bytes[i]) << 16) | (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                           static_cast<unsigned char>(bytes[i + 2]);
        out += table[(v >> 18) & 63];
        out += table[(v >> 12) & 63];
        out += table[(v >> 6) & 63];
        out += table[v & 63];
    }
    if (const std::size_t rest = bytes.size() - i; rest > 0) {
        unsigned v = static_cast<unsigned char>(bytes[i]) << 16;
        if (rest == 2) v |= static_cast<unsigned char>(bytes[i + 1]) << 8;
        out += table[(v >> 18) & 63];
        out += table[(v >> 12) & 63];
        out += rest == 2 ? table[(v >> 6) & 63] : '=';
        out += '=';
    }
    return out;
}

// --- SVG ----------------------------------------------------------------------

namespace detail {

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

inline std::string escape(const std::string& s) {
    std::string out;
    for (char ch : s) {
        switch (ch) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += ch;
        }
    }
    return out;
}

/// Round tick positions covering [lo, hi].
inline std::vector<double> ticks(double lo, double hi, int target = 6) {
    std::vector<double> out;
    if (!(hi > lo)) return {lo};
    const double raw = (hi - lo) / target;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0})
        if (m * mag >= raw) {
            step = m * mag;
            break;
        }
    for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * step; t += step) out.push_back(std::abs(t) < 1e-12 * step ? 0.0 : t);
    return out;
}

}  // namespace detail

struct Frame {
    double x0, x1, y0, y1;  ///< data range
    double left = 70, top = 30, width = 480, height = 320;

    double px(double x) const { return left + (x - x0) / (x1 - x0) * width; }
    double py(double y) const { return top + height - (y - y0) / (y1 - y0) * height; }
};

inline std::string svg_axes(const Frame& f, const std::string& xlabel, const std::string& ylabel, const std::string& title) {
    using detail::num;
    std::string s;
    s += "<rect x=\"" + num(f.left) + "\" y=\"" + num(f.top) + "\" width=\"" + num(f.width) + "\" height=\"" +
         num(f.height) + "\" fill=\"none\" stroke=\"black\"/>\n";
    for (double t : detail::ticks(f.x0, f.x1)) {
        const double x = f.px(t);
        s += "<line x1=\"" + num(x) + "\" y1=\"" + num(f.top + f.height) + "\" x2=\"" + num(x) + "\" y2=\"" +
             num(f.top + f.height + 5) + "\" stroke=\"black\"/>";
        s += "<text x=\"" + num(x) + "\" y=\"" + num(f.top + f.height + 18) + "\" text-anchor=\"middle\">" + num(t) +
             "</text>\n";
    }
    for (double t : detail::ticks(f.y0, f.y1)) {
        const double y = f.py(t);
        s += "<line x1=\"" + num(f.left - 5) + "\" y1=\"" + num(y) + "\" x2=\"" + num(f.left) + "\" y2=\"" + num(y) +
             "\" stroke=\"black\"/>";
        s += "<text x=\"" + num(f.left - 8) + "\" y=\"" + num(y + 4) + "\" text-anchor=\"end\">" + num(t) + "</text>\n";
    }
    s += "<text x=\"" + num(f.left + f.width / 2) + "\" y=\"" + num(f.top + f.height + 38) +
         "\" text-anchor=\"middle\">" + detail::escape(xlabel) + "</text>\n";
    s += "<text transform=\"translate(" + num(f.left - 50) + "," + num(f.top + f.height / 2) +
         ") rotate(-90)\" text-anchor=\"middle\">" + detail::escape(ylabel) + "</text>\n";
    s += "<text x=\"" + num(f.left + f.width / 2) + "\" y=\"" + num(f.top - 10) + "\" text-anchor=\"middle\">" +
         detail::escape(title) + "</text>\n";
    return s;
}

inline std::string svg_document(double width, double height, const std::string& body) {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::num(width) + "\" height=\"" +
           detail::num(height) + "\" font-family=\"sans-serif\" font-size=\"12\">\n" + body + "</svg>\n";
}

/// Heatmap with axes; the raster is embedded as a PNG data URI.
inline std::string heatmap_svg(const SpectrumMap& map, const std::string& title, double log_decades = 0.0) {
    Frame f{map.theta_ext_deg.front(), map.theta_ext_deg.back(), map.lambda_um.front(), map.lambda_um.back()};
    if (!(f.x1 > f.x0)) f.x1 = f.x0 + 1.0;
    if (!(f.y1 > f.y0)) f.y1 = f.y0 + 1.0;
    std::string body = "<image x=\"" + detail::num(f.left) + "\" y=\"" + detail::num(f.top) + "\" width=\"" +
                       detail::num(f.width) + "\" height=\"" + detail::num(f.height) +
                       "\" preserveAspectRatio=\"none\" style=\"image-rendering:pixelated\" href=\"data:image/png;base64," +
                       base64(heatmap_png(map, log_decades)) + "\"/>\n";
    body += svg_axes(f, "external signal angle (deg)", "signal wavelength (um)", title);
    return svg_document(f.left + f.width + 20, f.top + f.height + 50, body);
}

struct Series {
    std::vector<double> x, y;
    std::string color = "black";
    bool markers = false;  ///< points instead of a polyline
    std::string label;
};

inline std::string line_chart_body(const Frame& f, const std::vector<Series>& series) {
    using detail::num;
    std::string s;
    double legend_y = f.top + 16;
    for (const auto& sr : series) {
        if (sr.markers) {
            for (std::size_t i = 0; i < sr.x.size(); ++i)
                s += "<circle cx=\"" + num(f.px(sr.x[i])) + "\" cy=\"" + num(f.py(sr.y[i])) + "\" r=\"3\" fill=\"" +
                     sr.color + "\"/>";
            s += "\n";
        } else {
            s += "<polyline fill=\"none\" stroke=\"" + sr.color + "\" stroke-width=\"1.5\" points=\"";
            for (std::size_t i = 0; i < sr.x.size(); ++i) s += num(f.px(sr.x[i])) + "," + num(f.py(sr.y[i])) + " ";
            s += "\"/>\n";
        }
        if (!sr.label.empty()) {
            s += "<text x=\"" + num(f.left + f.width - 8) + "\" y=\"" + num(legend_y) + "\" text-anchor=\"end\" fill=\"" +
                 sr.color + "\">" + detail::escape(sr.label) + "</text>\n";
            legend_y += 16;
        }
    }
    return s;
}

/// Data range of all series, padded by 5 %.
inline Frame fit_frame(const std::vector<Series>& series, bool y_from_zero = false) {
    double x0 = HUGE_VAL, x1 = -HUGE_VAL, y0 = HUGE_VAL, y1 = -HUGE_VAL;
    for (const auto& sr : series)
        for (std::size_t i = 0; i < sr.x.size(); ++i) {
            if (!std::isfinite(sr.x[i]) || !std::isfinite(sr.y[i])) continue;
            x0 = std::min(x0, sr.x[i]);
            x1 = std::max(x1, sr.x[i]);
            y0 = std::min(y0, sr.y[i]);
            y1 = std::max(y1, sr.y[i]);
        }
    if (!(x1 > x0)) x1 = x0 + 1.0;
    if (y_from_zero) y0 = std::min(0.0, y0);
    if (!(y1 > y0)) y1 = y0 + 1.0;
    const double px = 0.05 * (x1 - x0), py = 0.05 * (y1 - y0);
    return {x0 - px, x1 + px, y_from_zero && y0 == 0.0 ? 0.0 : y0 - py, y1 + py};
}

inline std::string line_chart_svg(const std::vector<Series>& series, const std::string& xlabel,
                                  const std::string& ylabel, const std::string& title) {
    const Frame f = fit_frame(series, true);
    return svg_document(f.left + f.width + 20, f.top + f.height + 50,
                        svg_axes(f, xlabel, ylabel, title) + line_chart_body(f, series));
}

}  // namespace opg::plot
