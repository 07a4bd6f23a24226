#pragma once

#include <string>
#include <utility>
#include <vector>

namespace resbridge {

struct PlotSeries {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

// Minimal self-contained SVG line chart: axes with ticks, one polyline per
// series, legend. No external renderer.
void write_line_chart(const std::string& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<PlotSeries>& series);

}  // namespace resbridge
