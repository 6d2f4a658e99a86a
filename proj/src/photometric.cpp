#include "uqdepth/photometric.hpp"

#include <stdexcept>

#include "uqdepth/ops.hpp"

namespace uqd::photometric {

using namespace uqd::ops;

void LossConfig::validate() const {
  if (!(alpha >= 0.0f && alpha <= 1.0f))
    throw std::invalid_argument("loss config: alpha outside [0,1]");
  if (smoothness_weight < 0.0f)
    throw std::invalid_argument("loss config: negative smoothness weight");
  if (ssim_window < 3 || ssim_window % 2 == 0)
    throw std::invalid_argument("loss config: ssim window must be odd and >= 3");
}

namespace {

constexpr float kSsimC1 = 0.01f * 0.01f;
constexpr float kSsimC2 = 0.03f * 0.03f;

Var as_chw(const Var& x) {
  if (x.value().ndim() == 2)
    return reshape(x, {1, x.value().dim(0), x.value().dim(1)});
  if (x.value().ndim() == 3) return x;
  throw std::invalid_argument("expected {h,w} or {c,h,w} image");
}

// Box mean with replicate borders. Window 3 hits the kernel backend; other
// odd windows take a plain elementwise path.
Var box_mean(const Var& x, int window) {
  if (window == 3) return avg_pool3x3(x);
  const int r = window / 2;
  const Tensor& in = x.value();
  const bool chw = in.ndim() == 3;
  const int c = chw ? in.dim(0) : 1;
  const int h = in.dim(chw ? 1 : 0), w = in.dim(chw ? 2 : 1);
  const double inv_n = 1.0 / (static_cast<double>(window) * window);
  Tensor out(in.shape());
  for (int ch = 0; ch < c; ++ch) {
    const float* ip = in.data() + static_cast<std::size_t>(ch) * h * w;
    float* op = out.data() + static_cast<std::size_t>(ch) * h * w;
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx) {
        double acc = 0.0;
        for (int dy = -r; dy <= r; ++dy) {
          const int sy = std::min(std::max(y + dy, 0), h - 1);
          for (int dx = -r; dx <= r; ++dx) {
            const int sx = std::min(std::max(xx + dx, 0), w - 1);
            acc += ip[sy * w + sx];
          }
        }
        op[y * w + xx] = static_cast<float>(acc * inv_n);
      }
  }
  auto xn = x.node();
  return make_op(std::move(out), {x}, [xn, c, h, w, r, inv_n](Node& self) {
    Tensor g(xn->value.shape());
    for (int ch = 0; ch < c; ++ch) {
      const float* gp = self.grad.data() + static_cast<std::size_t>(ch) * h * w;
      float* ip = g.data() + static_cast<std::size_t>(ch) * h * w;
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) {
          double acc = 0.0;
          for (int oy = std::max(0, y - r); oy <= std::min(h - 1, y + r); ++oy) {
            int cy = 0;
            for (int d = -r; d <= r; ++d)
              if (std::min(std::max(oy + d, 0), h - 1) == y) ++cy;
            if (cy == 0) continue;
            for (int ox = std::max(0, xx - r); ox <= std::min(w - 1, xx + r); ++ox) {
              int cx = 0;
              for (int d = -r; d <= r; ++d)
                if (std::min(std::max(ox + d, 0), w - 1) == xx) ++cx;
              if (cx) acc += static_cast<double>(cy * cx) * gp[oy * w + ox];
            }
          }
          ip[y * w + xx] = static_cast<float>(acc * inv_n);
        }
    }
    xn->accumulate(g);
  });
}

}  // namespace

Var ssim(const Var& a_in, const Var& b_in, int window) {
  if (window < 3 || window % 2 == 0)
    throw std::invalid_argument("ssim: window must be odd and >= 3");
  check_same_shape(a_in.value(), b_in.value(), "ssim");
  const Var a = as_chw(a_in);
  const Var b = as_chw(b_in);

  const Var mu_a = box_mean(a, window);
  const Var mu_b = box_mean(b, window);
  const Var sigma_a = sub(box_mean(mul(a, a), window), mul(mu_a, mu_a));
  const Var sigma_b = sub(box_mean(mul(b, b), window), mul(mu_b, mu_b));
  const Var sigma_ab = sub(box_mean(mul(a, b), window), mul(mu_a, mu_b));

  const Var num = mul(affine(mul(mu_a, mu_b), 2.0f, kSsimC1),
                      affine(sigma_ab, 2.0f, kSsimC2));
  const Var den = mul(affine(add(mul(mu_a, mu_a), mul(mu_b, mu_b)), 1.0f, kSsimC1),
                      affine(add(sigma_a, sigma_b), 1.0f, kSsimC2));
  return mean_channels(div(num, den));
}

Tensor ssim(const Tensor& a, const Tensor& b, int window) {
  return ssim(Var::constant(a), Var::constant(b), window).value();
}

Var photometric_error(const Var& warped, const Var& target, const LossConfig& cfg) {
  cfg.validate();
  check_same_shape(warped.value(), target.value(), "photometric_error");
  const Var l1 = mean_channels(abs(sub(as_chw(warped), as_chw(target))));
  if (cfg.alpha == 0.0f) return l1;
  const Var s = ssim(warped, target, cfg.ssim_window);
  // (1-SSIM)/2 clamped into [0,1]: float noise can push SSIM past 1 by a ulp
  const Var dssim = clamp(affine(s, -0.5f, 0.5f), 0.0f, 1.0f);
  return add(affine(dssim, cfg.alpha, 0.0f), affine(l1, 1.0f - cfg.alpha, 0.0f));
}

Tensor photometric_error(const Tensor& warped, const Tensor& target,
                         const LossConfig& cfg) {
  return photometric_error(Var::constant(warped), Var::constant(target), cfg).value();
}

MinReprojection min_reprojection(const std::vector<Var>& errors) {
  if (errors.empty()) throw std::invalid_argument("min_reprojection: no error maps");
  MinStack ms = min_stack(errors);
  return MinReprojection{ms.values, ms.argmin};
}

Var smoothness(const Var& map, const Var& image, float weight) {
  if (weight < 0.0f) throw std::invalid_argument("smoothness: negative weight");
  const Var img = as_chw(image);
  if (map.value().ndim() != 2)
    throw std::invalid_argument("smoothness: map must be {h,w}");
  if (map.value().dim(0) != img.value().dim(1) ||
      map.value().dim(1) != img.value().dim(2))
    throw std::invalid_argument("smoothness: map and image dims differ");
  if (weight == 0.0f) return Var::scalar(0.0f);

  const Var normalized = broadcast_mul(map, reciprocal(mean(map)));
  Var total = Var::scalar(0.0f);
  if (map.value().dim(1) >= 2) {
    const Var gx = abs(diff_x(normalized));
    const Var wx = exp(neg(mean_channels(abs(diff_x(img)))));
    total = add(total, mean(mul(gx, wx)));
  }
  if (map.value().dim(0) >= 2) {
    const Var gy = abs(diff_y(normalized));
    const Var wy = exp(neg(mean_channels(abs(diff_y(img)))));
    total = add(total, mean(mul(gy, wy)));
  }
  return affine(total, weight, 0.0f);
}

}  // namespace uqd::photometric
