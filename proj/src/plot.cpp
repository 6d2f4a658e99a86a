#include "uqdepth/plot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "uqdepth/ppm.hpp"
#include "uqdepth/tensor.hpp"

namespace uqd::io {

namespace {

constexpr int kW = 640, kH = 420;
constexpr int kMarginL = 60, kMarginR = 20, kMarginT = 30, kMarginB = 40;

void set_px(Tensor& img, int x, int y, const std::array<float, 3>& c) {
  if (x < 0 || x >= kW || y < 0 || y >= kH) return;
  for (int ch = 0; ch < 3; ++ch) img.at(ch, y, x) = c[ch];
}

void draw_line(Tensor& img, double x0, double y0, double x1, double y1,
               const std::array<float, 3>& c) {
  const double steps = std::max(std::fabs(x1 - x0), std::fabs(y1 - y0)) + 1.0;
  for (int i = 0; i <= static_cast<int>(steps); ++i) {
    const double t = i / steps;
    set_px(img, static_cast<int>(std::lround(x0 + t * (x1 - x0))),
           static_cast<int>(std::lround(y0 + t * (y1 - y0))), c);
  }
}

// 5x7 bitmap digits/letters would be overkill; label curves with color keys.
void draw_legend_key(Tensor& img, int slot, const std::array<float, 3>& c) {
  const int x0 = kMarginL + 10 + slot * 60;
  for (int y = kMarginT - 18; y < kMarginT - 8; ++y)
    for (int x = x0; x < x0 + 40; ++x) set_px(img, x, y, c);
}

}  // namespace

void write_curve_plot(const std::filesystem::path& path,
                      const std::vector<CurveSeries>& series,
                      const std::string& title) {
  (void)title;
  if (series.empty()) throw std::invalid_argument("plot: no series");
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw std::invalid_argument("plot: x/y size mismatch");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  }
  if (!(xmax > xmin)) xmax = xmin + 1.0;
  if (!(ymax > ymin)) ymax = ymin + 1.0;
  const double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;

  Tensor img({3, kH, kW}, 1.0f);
  const std::array<float, 3> axis{0.2f, 0.2f, 0.2f};
  const std::array<float, 3> grid{0.85f, 0.85f, 0.85f};

  auto px = [&](double x) {
    return kMarginL + (x - xmin) / (xmax - xmin) * (kW - kMarginL - kMarginR);
  };
  auto py = [&](double y) {
    return kH - kMarginB - (y - ymin) / (ymax - ymin) * (kH - kMarginT - kMarginB);
  };

  for (int i = 0; i <= 10; ++i) {
    const double gx = xmin + i * (xmax - xmin) / 10.0;
    draw_line(img, px(gx), py(ymin), px(gx), py(ymax), grid);
    const double gy = ymin + i * (ymax - ymin) / 10.0;
    draw_line(img, px(xmin), py(gy), px(xmax), py(gy), grid);
  }
  draw_line(img, px(xmin), py(ymin), px(xmax), py(ymin), axis);
  draw_line(img, px(xmin), py(ymin), px(xmin), py(ymax), axis);

  int slot = 0;
  for (const auto& s : series) {
    for (std::size_t i = 0; i + 1 < s.x.size(); ++i)
      draw_line(img, px(s.x[i]), py(s.y[i]), px(s.x[i + 1]), py(s.y[i + 1]), s.color);
    draw_legend_key(img, slot++, s.color);
  }
  write_ppm(path, img);
}

}  // namespace uqd::io
