#include "svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "errors.hpp"
#include "io.hpp"

namespace tmld {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace

void write_svg_plot(const std::string& path, const SvgPlotOptions& opts,
                    const std::vector<SvgSeries>& series) {
  const double W = 720, H = 520, ml = 80, mr = 24, mt = 48, mb = 60;
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  auto tx = [&](double v) { return opts.log_x ? std::log10(v) : v; };
  auto ty = [&](double v) { return opts.log_y ? std::log10(v) : v; };
  for (const auto& s : series)
    for (size_t i = 0; i < s.x.size(); ++i) {
      if (opts.log_x && !(s.x[i] > 0)) continue;
      if (opts.log_y && !(s.y[i] > 0)) continue;
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      xmin = std::min(xmin, tx(s.x[i]));
      xmax = std::max(xmax, tx(s.x[i]));
      ymin = std::min(ymin, ty(s.y[i]));
      ymax = std::max(ymax, ty(s.y[i]));
    }
  if (!(xmin < xmax)) {
    xmin -= 0.5;
    xmax += 0.5;
  }
  if (!(ymin < ymax)) {
    ymin -= 0.5;
    ymax += 0.5;
  }
  double xpad = 0.04 * (xmax - xmin), ypad = 0.06 * (ymax - ymin);
  xmin -= xpad;
  xmax += xpad;
  ymin -= ypad;
  ymax += ypad;
  auto px = [&](double v) { return ml + (tx(v) - xmin) / (xmax - xmin) * (W - ml - mr); };
  auto py = [&](double v) { return H - mb - (ty(v) - ymin) / (ymax - ymin) * (H - mt - mb); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"13\">\n";
  svg << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
  svg << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << opts.title
      << "</text>\n";
  // axes
  svg << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr << "\" y2=\"" << H - mb
      << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << H - mb
      << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 5; ++t) {
    double fx = xmin + (xmax - xmin) * t / 5.0;
    double fy = ymin + (ymax - ymin) * t / 5.0;
    double sx = ml + (W - ml - mr) * t / 5.0;
    double sy = H - mb - (H - mt - mb) * t / 5.0;
    double labx = opts.log_x ? std::pow(10.0, fx) : fx;
    double laby = opts.log_y ? std::pow(10.0, fy) : fy;
    svg << "<line x1=\"" << sx << "\" y1=\"" << H - mb << "\" x2=\"" << sx << "\" y2=\"" << H - mb + 5
        << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << sx << "\" y=\"" << H - mb + 20 << "\" text-anchor=\"middle\">" << num(labx)
        << "</text>\n";
    svg << "<line x1=\"" << ml - 5 << "\" y1=\"" << sy << "\" x2=\"" << ml << "\" y2=\"" << sy
        << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << ml - 8 << "\" y=\"" << sy + 4 << "\" text-anchor=\"end\">" << num(laby)
        << "</text>\n";
  }
  svg << "<text x=\"" << (ml + W - mr) / 2 << "\" y=\"" << H - 16 << "\" text-anchor=\"middle\">"
      << opts.xlabel << "</text>\n";
  svg << "<text x=\"20\" y=\"" << (mt + H - mb) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 20 "
      << (mt + H - mb) / 2 << ")\">" << opts.ylabel << "</text>\n";

  int ci = 0;
  double ly = mt + 6;
  for (const auto& s : series) {
    const char* color = kPalette[ci % 7];
    if (s.scatter) {
      for (size_t i = 0; i < s.x.size(); ++i) {
        if (opts.log_x && !(s.x[i] > 0)) continue;
        if (opts.log_y && !(s.y[i] > 0)) continue;
        svg << "<circle cx=\"" << num(px(s.x[i])) << "\" cy=\"" << num(py(s.y[i]))
            << "\" r=\"2\" fill=\"" << color << "\" fill-opacity=\"0.6\"/>\n";
      }
    } else {
      svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
      for (size_t i = 0; i < s.x.size(); ++i) {
        if (opts.log_x && !(s.x[i] > 0)) continue;
        if (opts.log_y && !(s.y[i] > 0)) continue;
        svg << num(px(s.x[i])) << "," << num(py(s.y[i])) << " ";
      }
      svg << "\"/>\n";
    }
    if (!s.label.empty()) {
      svg << "<rect x=\"" << W - mr - 150 << "\" y=\"" << ly - 9 << "\" width=\"12\" height=\"12\" fill=\""
          << color << "\"/>\n";
      svg << "<text x=\"" << W - mr - 132 << "\" y=\"" << ly + 2 << "\">" << s.label << "</text>\n";
      ly += 18;
    }
    ++ci;
  }
  svg << "</svg>\n";
  io::write_file(path, svg.str());
}

}  // namespace tmld
