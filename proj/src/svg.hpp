#pragma once

#include <string>
#include <vector>

namespace tmld {

struct SvgSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  bool scatter = false;
};

struct SvgPlotOptions {
  std::string title;
  std::string xlabel;
  std::string ylabel;
  bool log_x = false;
  bool log_y = false;
};

// Minimal standalone line/scatter plot. All plotted data also ships as CSV;
// this is a convenience rendering only.
void write_svg_plot(const std::string& path, const SvgPlotOptions& opts,
                    const std::vector<SvgSeries>& series);

}  // namespace tmld
