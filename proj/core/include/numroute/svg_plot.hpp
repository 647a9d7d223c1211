#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace numroute {

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

// Self-contained SVG line plot; the numeric CSVs remain the ground truth,
// plots are a convenience.
void write_line_plot_svg(const std::filesystem::path& path,
                         const std::string& title, const std::string& x_label,
                         const std::string& y_label,
                         const std::vector<PlotSeries>& series);

}  // namespace numroute
