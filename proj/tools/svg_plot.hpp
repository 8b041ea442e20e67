#pragma once

#include <string>
#include <vector>

namespace cgeo_cli {

struct PlotSeries {
  std::string label;
  std::vector<double> y;  // non-finite values break the line
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  std::vector<double> x;
  std::vector<PlotSeries> series;
};

// Static multi-line chart; returns the SVG document.
std::string render_svg(const PlotSpec& spec);

}  // namespace cgeo_cli
