#pragma once

// Minimal self-contained SVG line plots for loss curves and PR curves.
// Deterministic output: fixed palette, fixed "%.6g" number formatting.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "toothdet/volume.hpp"  // io_error

namespace toothdet {

struct PlotSeries {
  std::string label;
  std::vector<std::array<double, 2>> pts;  // (x, y)
};

namespace detail {

inline std::string fmt_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline const char* plot_color(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                  "#9467bd", "#8c564b"};
  return palette[i % 6];
}

}  // namespace detail

// Writes an XY polyline plot. Ranges come from the data; degenerate ranges
// are padded so single points and flat lines still render.
inline void svg_xy_plot(const std::string& path, const std::string& title,
                        const std::string& x_label, const std::string& y_label,
                        const std::vector<PlotSeries>& series) {
  const int W = 640, H = 400;
  const int L = 64, R = 20, T = 36, B = 44;  // margins
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  bool any = false;
  for (const auto& s : series)
    for (const auto& p : s.pts) {
      if (!std::isfinite(p[0]) || !std::isfinite(p[1])) continue;
      if (!any) {
        x0 = x1 = p[0];
        y0 = y1 = p[1];
        any = true;
      }
      x0 = std::min(x0, p[0]);
      x1 = std::max(x1, p[0]);
      y0 = std::min(y0, p[1]);
      y1 = std::max(y1, p[1]);
    }
  if (x1 - x0 <= 0) x1 = x0 + 1;
  if (y1 - y0 <= 0) y1 = y0 + 1;

  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("svg_xy_plot: cannot open " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W
      << "\" height=\"" << H << "\" viewBox=\"0 0 " << W << " " << H
      << "\">\n";
  out << "<rect width=\"" << W << "\" height=\"" << H
      << "\" fill=\"white\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"14\">"
      << title << "</text>\n";
  // axes
  out << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R
      << "\" height=\"" << H - T - B
      << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = x0 + (x1 - x0) * i / 4.0;
    const double fy = y0 + (y1 - y0) * i / 4.0;
    out << "<text x=\"" << detail::fmt_g(px(fx)) << "\" y=\"" << H - B + 16
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"10\">"
        << detail::fmt_g(fx) << "</text>\n";
    out << "<text x=\"" << L - 6 << "\" y=\"" << detail::fmt_g(py(fy) + 3)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
           "font-size=\"10\">"
        << detail::fmt_g(fy) << "</text>\n";
  }
  out << "<text x=\"" << W / 2 << "\" y=\"" << H - 8
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"12\">"
      << x_label << "</text>\n";
  out << "<text x=\"14\" y=\"" << H / 2
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"12\" transform=\"rotate(-90 14 "
      << H / 2 << ")\">" << y_label << "</text>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    out << "<polyline fill=\"none\" stroke=\"" << detail::plot_color(si)
        << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& p : s.pts)
      if (std::isfinite(p[0]) && std::isfinite(p[1]))
        out << detail::fmt_g(px(p[0])) << "," << detail::fmt_g(py(p[1])) << " ";
    out << "\"/>\n";
    const int ly = T + 16 + int(si) * 16;
    out << "<line x1=\"" << L + 10 << "\" y1=\"" << ly << "\" x2=\"" << L + 34
        << "\" y2=\"" << ly << "\" stroke=\"" << detail::plot_color(si)
        << "\" stroke-width=\"1.5\"/>\n";
    out << "<text x=\"" << L + 40 << "\" y=\"" << ly + 4
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << s.label
        << "</text>\n";
  }
  out << "</svg>\n";
  if (!out) throw io_error("svg_xy_plot: write failed for " + path);
}

}  // namespace toothdet
