#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "vdlab/errors.hpp"
#include "vdlab/metrics.hpp"

namespace vdlab {

/// Aggregated curve for one trainer: median line plus a percentile band.
struct CurveSeries {
  std::string label;
  std::vector<BandPoint> points;
};

/// Renders win-rate curves with shaded percentile bands into a small
/// standalone SVG. Series are drawn in the order given.
inline std::string render_curves_svg(const std::vector<CurveSeries>& series,
                                     const std::string& x_label = "env_steps",
                                     const std::string& y_label = "win rate") {
  if (series.empty()) throw InputError("render_curves_svg: no series");
  for (const auto& s : series)
    if (s.points.empty()) throw InputError("render_curves_svg: empty series " + s.label);

  const double width = 720, height = 480;
  const double ml = 70, mr = 20, mt = 30, mb = 55;
  std::int64_t x_min = series[0].points.front().env_steps;
  std::int64_t x_max = x_min;
  double y_min = 0.0, y_max = 0.0;
  for (const auto& s : series) {
    for (const auto& p : s.points) {
      x_min = std::min(x_min, p.env_steps);
      x_max = std::max(x_max, p.env_steps);
      y_min = std::min({y_min, p.lo, p.median});
      y_max = std::max({y_max, p.hi, p.median});
    }
  }
  if (x_max == x_min) x_max = x_min + 1;
  if (y_max <= y_min) y_max = y_min + 1.0;

  auto sx = [&](std::int64_t x) {
    return ml + (width - ml - mr) * static_cast<double>(x - x_min) /
                    static_cast<double>(x_max - x_min);
  };
  auto sy = [&](double y) {
    return height - mb - (height - mt - mb) * (y - y_min) / (y_max - y_min);
  };

  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b"};
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " " << height
      << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  // axes
  svg << "<line x1=\"" << ml << "\" y1=\"" << height - mb << "\" x2=\"" << width - mr
      << "\" y2=\"" << height - mb << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\""
      << height - mb << "\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << (ml + (width - ml - mr) / 2) << "\" y=\"" << height - 12
      << "\" text-anchor=\"middle\" font-size=\"14\">" << x_label << "</text>\n";
  svg << "<text x=\"18\" y=\"" << (mt + (height - mt - mb) / 2)
      << "\" text-anchor=\"middle\" font-size=\"14\" transform=\"rotate(-90 18 "
      << (mt + (height - mt - mb) / 2) << ")\">" << y_label << "</text>\n";
  // tick labels at the extremes
  svg << "<text x=\"" << ml << "\" y=\"" << height - mb + 18
      << "\" font-size=\"11\" text-anchor=\"middle\">" << x_min << "</text>\n";
  svg << "<text x=\"" << width - mr << "\" y=\"" << height - mb + 18
      << "\" font-size=\"11\" text-anchor=\"middle\">" << x_max << "</text>\n";
  svg << "<text x=\"" << ml - 8 << "\" y=\"" << sy(y_min) + 4
      << "\" font-size=\"11\" text-anchor=\"end\">" << format_metric(y_min)
      << "</text>\n";
  svg << "<text x=\"" << ml - 8 << "\" y=\"" << sy(y_max) + 4
      << "\" font-size=\"11\" text-anchor=\"end\">" << format_metric(y_max)
      << "</text>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kColors[k % 6];
    if (s.points.size() == 1) {
      const auto& p = s.points.front();
      svg << "<circle cx=\"" << sx(p.env_steps) << "\" cy=\"" << sy(p.median)
          << "\" r=\"4\" fill=\"" << color << "\"/>\n";
    } else {
      // band polygon: upper edge forward, lower edge back
      svg << "<polygon fill=\"" << color << "\" fill-opacity=\"0.18\" stroke=\"none\" points=\"";
      for (const auto& p : s.points) svg << sx(p.env_steps) << "," << sy(p.hi) << " ";
      for (auto it = s.points.rbegin(); it != s.points.rend(); ++it)
        svg << sx(it->env_steps) << "," << sy(it->lo) << " ";
      svg << "\"/>\n";
      svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
      for (const auto& p : s.points) svg << sx(p.env_steps) << "," << sy(p.median) << " ";
      svg << "\"/>\n";
    }
    // legend
    const double ly = mt + 18.0 * static_cast<double>(k);
    svg << "<rect x=\"" << width - mr - 150 << "\" y=\"" << ly - 10
        << "\" width=\"12\" height=\"12\" fill=\"" << color << "\"/>\n";
    svg << "<text x=\"" << width - mr - 132 << "\" y=\"" << ly
        << "\" font-size=\"12\">" << s.label << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace vdlab
