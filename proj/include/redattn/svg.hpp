#pragma once

// Minimal deterministic SVG line charts: fixed layout, fixed palette, all
// numbers through format_sig6, so identical input gives identical bytes.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "redattn/csv.hpp"
#include "redattn/errors.hpp"

namespace redattn {

struct ChartSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  // Optional band around the line (same length as x); both empty when unused.
  std::vector<double> lo;
  std::vector<double> hi;
};

struct ChartSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  double width = 720;
  double height = 460;
};

namespace detail {

inline const char* chart_color(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
                                  "#bcbd22", "#e377c2"};
  return palette[i % (sizeof(palette) / sizeof(palette[0]))];
}

inline std::string svg_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&') out += "&amp;";
    else if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else out += c;
  }
  return out;
}

}  // namespace detail

inline void write_line_chart(const std::string& path, const ChartSpec& spec,
                             const std::vector<ChartSeries>& series) {
  if (series.empty()) throw UsageError("chart: no series to draw");
  double xmin = 0, xmax = 0, ymin = 0, ymax = 0;
  bool first = true;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw UsageError("chart: series '" + s.label + "' is ragged");
    if (s.x.empty()) throw UsageError("chart: series '" + s.label + "' is empty");
    if (!s.lo.empty() && (s.lo.size() != s.x.size() || s.hi.size() != s.x.size()))
      throw UsageError("chart: band of series '" + s.label + "' is ragged");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      const double ylo = s.lo.empty() ? s.y[i] : std::min(s.y[i], s.lo[i]);
      const double yhi = s.hi.empty() ? s.y[i] : std::max(s.y[i], s.hi[i]);
      if (first) {
        xmin = xmax = s.x[i];
        ymin = ylo;
        ymax = yhi;
        first = false;
      } else {
        xmin = std::min(xmin, s.x[i]);
        xmax = std::max(xmax, s.x[i]);
        ymin = std::min(ymin, ylo);
        ymax = std::max(ymax, yhi);
      }
    }
  }
  if (xmax == xmin) {
    xmin -= 0.5;
    xmax += 0.5;
  }
  if (ymax == ymin) {
    ymin -= 0.5;
    ymax += 0.5;
  }
  const double ml = 64, mr = 150, mt = 40, mb = 48;
  const double pw = spec.width - ml - mr, ph = spec.height - mt - mb;
  auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return mt + ph - (y - ymin) / (ymax - ymin) * ph; };

  std::ofstream out(path);
  if (!out) throw UsageError("chart: cannot open " + path + " for writing");
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << format_sig6(spec.width)
      << "\" height=\"" << format_sig6(spec.height) << "\" font-family=\"sans-serif\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << format_sig6(ml + pw / 2) << "\" y=\"22\" text-anchor=\"middle\" "
      << "font-size=\"15\">" << detail::svg_escape(spec.title) << "</text>\n";

  // axes and ticks
  out << "<line x1=\"" << format_sig6(ml) << "\" y1=\"" << format_sig6(mt + ph) << "\" x2=\""
      << format_sig6(ml + pw) << "\" y2=\"" << format_sig6(mt + ph)
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << format_sig6(ml) << "\" y1=\"" << format_sig6(mt) << "\" x2=\""
      << format_sig6(ml) << "\" y2=\"" << format_sig6(mt + ph) << "\" stroke=\"black\"/>\n";
  const int ticks = 5;
  for (int t = 0; t <= ticks; ++t) {
    const double fx = xmin + (xmax - xmin) * t / ticks;
    const double fy = ymin + (ymax - ymin) * t / ticks;
    out << "<line x1=\"" << format_sig6(px(fx)) << "\" y1=\"" << format_sig6(mt + ph)
        << "\" x2=\"" << format_sig6(px(fx)) << "\" y2=\"" << format_sig6(mt + ph + 5)
        << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << format_sig6(px(fx)) << "\" y=\"" << format_sig6(mt + ph + 18)
        << "\" text-anchor=\"middle\" font-size=\"11\">" << format_sig6(fx) << "</text>\n";
    out << "<line x1=\"" << format_sig6(ml - 5) << "\" y1=\"" << format_sig6(py(fy))
        << "\" x2=\"" << format_sig6(ml) << "\" y2=\"" << format_sig6(py(fy))
        << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << format_sig6(ml - 8) << "\" y=\"" << format_sig6(py(fy) + 4)
        << "\" text-anchor=\"end\" font-size=\"11\">" << format_sig6(fy) << "</text>\n";
  }
  out << "<text x=\"" << format_sig6(ml + pw / 2) << "\" y=\""
      << format_sig6(spec.height - 10) << "\" text-anchor=\"middle\" font-size=\"12\">"
      << detail::svg_escape(spec.x_label) << "</text>\n";
  out << "<text x=\"16\" y=\"" << format_sig6(mt + ph / 2)
      << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
      << format_sig6(mt + ph / 2) << ")\">" << detail::svg_escape(spec.y_label)
      << "</text>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* color = detail::chart_color(si);
    if (!s.lo.empty()) {
      out << "<polygon fill=\"" << color << "\" fill-opacity=\"0.18\" stroke=\"none\" points=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i)
        out << format_sig6(px(s.x[i])) << ',' << format_sig6(py(s.hi[i])) << ' ';
      for (std::size_t i = s.x.size(); i-- > 0;)
        out << format_sig6(px(s.x[i])) << ',' << format_sig6(py(s.lo[i])) << ' ';
      out << "\"/>\n";
    }
    if (s.x.size() == 1) {
      out << "<circle cx=\"" << format_sig6(px(s.x[0])) << "\" cy=\"" << format_sig6(py(s.y[0]))
          << "\" r=\"4\" fill=\"" << color << "\"/>\n";
    } else {
      out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i)
        out << format_sig6(px(s.x[i])) << ',' << format_sig6(py(s.y[i])) << ' ';
      out << "\"/>\n";
    }
    const double ly = mt + 16 + 18 * static_cast<double>(si);
    out << "<line x1=\"" << format_sig6(ml + pw + 10) << "\" y1=\"" << format_sig6(ly - 4)
        << "\" x2=\"" << format_sig6(ml + pw + 30) << "\" y2=\"" << format_sig6(ly - 4)
        << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << format_sig6(ml + pw + 34) << "\" y=\"" << format_sig6(ly)
        << "\" font-size=\"11\">" << detail::svg_escape(s.label) << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace redattn
