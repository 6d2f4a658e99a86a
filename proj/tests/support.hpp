#pragma once

// Shared helpers for the test suites: random tensors, finite-difference
// gradient checking, tiny synthetic frames.

#include <algorithm>
#include <cmath>
#include <functional>

#include "uqdepth/autodiff.hpp"
#include "uqdepth/geometry.hpp"
#include "uqdepth/ops.hpp"
#include "uqdepth/rng.hpp"
#include "uqdepth/tensor.hpp"

namespace uqd::test {

inline Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = 0.0,
                            double hi = 1.0) {
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i)
    t[i] = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

inline double rel_err(double a, double b, double floor = 1e-6) {
  return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), floor});
}

// Max relative disagreement between the analytic gradient of f at x0 and a
// central finite difference. f must map a leaf Var to a scalar Var.
inline double max_grad_rel_err(const std::function<Var(const Var&)>& f,
                               const Tensor& x0, double h,
                               double floor = 1e-6) {
  Var leaf = Var::leaf(x0, true);
  Var y = f(leaf);
  backward(y);
  const Tensor analytic = leaf.grad();

  double worst = 0.0;
  Tensor x = x0;
  for (std::int64_t i = 0; i < x.size(); ++i) {
    const float saved = x[i];
    x[i] = static_cast<float>(saved + h);
    const double fp = f(Var::constant(x)).scalar_value();
    x[i] = static_cast<float>(saved - h);
    const double fm = f(Var::constant(x)).scalar_value();
    x[i] = saved;
    const double fd = (fp - fm) / (2.0 * h);
    worst = std::max(worst, rel_err(analytic[i], fd, floor));
  }
  return worst;
}

// Gradient check against the mean of an unreduced tensor output. The finite
// differences reduce the float32 output in double precision (a float32 scalar
// loss would quantize away the signal), and deviations are normalized by the
// gradient's largest magnitude so near-zero components cannot blow up the
// ratio while dominant components are held to the requested accuracy.
inline double max_grad_scaled_err(const std::function<Var(const Var&)>& f_out,
                                  const Tensor& x0, double h) {
  Var leaf = Var::leaf(x0, true);
  Var out = f_out(leaf);
  backward(ops::mean(out));
  const Tensor analytic = leaf.grad();

  const auto value_mean = [&](const Tensor& x) {
    const Tensor o = f_out(Var::constant(x)).value();
    return o.sum() / static_cast<double>(o.size());
  };

  double scale = 0.0;
  double worst_abs = 0.0;
  Tensor x = x0;
  for (std::int64_t i = 0; i < x.size(); ++i) {
    const float saved = x[i];
    x[i] = static_cast<float>(saved + h);
    const double fp = value_mean(x);
    x[i] = static_cast<float>(saved - h);
    const double fm = value_mean(x);
    x[i] = saved;
    const double fd = (fp - fm) / (2.0 * h);
    scale = std::max({scale, static_cast<double>(std::fabs(analytic[i])),
                      std::fabs(fd)});
    worst_abs = std::max(worst_abs, std::fabs(analytic[i] - fd));
  }
  return worst_abs / std::max(scale, 1e-12);
}

inline geometry::Intrinsics tiny_intrinsics(int w = 8, int h = 8, float f = 8.0f) {
  geometry::Intrinsics k;
  k.fx = k.fy = f;
  k.cx = static_cast<float>((w - 1) / 2.0);
  k.cy = static_cast<float>((h - 1) / 2.0);
  k.width = w;
  k.height = h;
  return k;
}

inline geometry::ImageFrame random_frame(const geometry::Intrinsics& k, Rng& rng) {
  geometry::ImageFrame f;
  f.intrinsics = k;
  f.pixels = random_tensor({3, k.height, k.width}, rng, 0.02, 0.98);
  return f;
}

// Smoothly varying image, useful where interpolation needs structure.
inline geometry::ImageFrame gradient_frame(const geometry::Intrinsics& k,
                                           double fx = 0.13, double fy = 0.07) {
  geometry::ImageFrame f;
  f.intrinsics = k;
  f.pixels = Tensor({3, k.height, k.width});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < k.height; ++y)
      for (int x = 0; x < k.width; ++x)
        f.pixels.at(c, y, x) = static_cast<float>(
            0.5 + 0.4 * std::sin(fx * (x + 3 * c) + fy * y) * std::cos(fy * x));
  return f;
}

}  // namespace uqd::test
