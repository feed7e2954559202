#pragma once

#include <string>
#include <vector>

namespace qsp::svg {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::string color;  // empty picks from the palette
  bool line = true;
  bool markers = false;
  bool dashed = false;
};

struct Axes {
  std::string title;
  std::string xlabel;
  std::string ylabel;
  bool log_x = false;
  bool log_y = false;
};

/// Deterministic SVG line/scatter chart; non-finite points are skipped.
std::string line_plot(const Axes& axes, const std::vector<Series>& series, int width = 640, int height = 420);

/// z[iy][ix] on the cell-centred grid (xs, ys), with optional line overlays.
std::string heatmap(const Axes& axes, const std::vector<double>& xs, const std::vector<double>& ys,
                    const std::vector<std::vector<double>>& z, const std::vector<Series>& overlays = {},
                    int width = 640, int height = 420);

void write_file(const std::string& path, const std::string& content);

}  // namespace qsp::svg
