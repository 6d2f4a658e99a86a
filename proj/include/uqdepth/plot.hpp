#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

namespace uqd::io {

struct CurveSeries {
  std::string label;
  std::array<float, 3> color{0, 0, 0};
  std::vector<double> x, y;
};

// Rasterizes line plots into a PPM image. Presentation-only output; excluded
// from any reproducibility hashing.
void write_curve_plot(const std::filesystem::path& path,
                      const std::vector<CurveSeries>& series,
                      const std::string& title);

}  // namespace uqd::io
