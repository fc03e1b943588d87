#pragma once

#include <wdist/simnet.hpp>

#include <string>
#include <utility>
#include <vector>

namespace wdist {

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;  // (x, y), drawn in x order
};

struct Panel {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = true;
  std::vector<Series> series;
};

/// Side-by-side panels with axes, ticks, one polyline and marker set per
/// series and a shared legend.
std::string svg_panels(const std::vector<Panel>& panels);

/// |bias| and RMSE against K, one line per estimator, from a K sweep.
std::string sweep_figure(const std::vector<ExperimentReport>& sweep, double scale = 100.0);

}  // namespace wdist
