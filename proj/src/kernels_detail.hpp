#pragma once

// Per-output-element bodies shared by the serial and omp kernel drivers.
// Keeping the arithmetic in one place guarantees both backends compute each
// output element with the same operation order, which makes them bit-equal.

#include <algorithm>
#include <cmath>

#include "uqdepth/kernels.hpp"

namespace uqd::kernels::detail {

inline int iclamp(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

inline float conv_out_at(const float* in, const float* w, const float* bias,
                         const ConvShape& s, int oc, int oy, int ox) {
  float acc = bias ? bias[oc] : 0.0f;
  const int y0 = oy * s.stride - s.pad;
  const int x0 = ox * s.stride - s.pad;
  for (int ic = 0; ic < s.in_c; ++ic) {
    const float* in_ch = in + static_cast<std::size_t>(ic) * s.in_h * s.in_w;
    const float* w_ch = w + ((static_cast<std::size_t>(oc) * s.in_c + ic) * s.ksize) * s.ksize;
    for (int ky = 0; ky < s.ksize; ++ky) {
      const int iy = y0 + ky;
      if (iy < 0 || iy >= s.in_h) continue;
      for (int kx = 0; kx < s.ksize; ++kx) {
        const int ix = x0 + kx;
        if (ix < 0 || ix >= s.in_w) continue;
        acc += in_ch[iy * s.in_w + ix] * w_ch[ky * s.ksize + kx];
      }
    }
  }
  return acc;
}

inline float conv_gin_at(const float* gout, const float* w, const ConvShape& s,
                         int ic, int iy, int ix) {
  float acc = 0.0f;
  for (int oc = 0; oc < s.out_c; ++oc) {
    const float* g_ch = gout + static_cast<std::size_t>(oc) * s.out_h * s.out_w;
    const float* w_ch = w + ((static_cast<std::size_t>(oc) * s.in_c + ic) * s.ksize) * s.ksize;
    for (int ky = 0; ky < s.ksize; ++ky) {
      const int ny = iy + s.pad - ky;
      if (ny < 0 || ny % s.stride != 0) continue;
      const int oy = ny / s.stride;
      if (oy >= s.out_h) continue;
      for (int kx = 0; kx < s.ksize; ++kx) {
        const int nx = ix + s.pad - kx;
        if (nx < 0 || nx % s.stride != 0) continue;
        const int ox = nx / s.stride;
        if (ox >= s.out_w) continue;
        acc += g_ch[oy * s.out_w + ox] * w_ch[ky * s.ksize + kx];
      }
    }
  }
  return acc;
}

// Gradient of all weights feeding output channel oc, plus its bias gradient.
inline void conv_gparams_for_oc(const float* gout, const float* in,
                                const ConvShape& s, int oc, float* gw,
                                float* gbias) {
  const float* g_ch = gout + static_cast<std::size_t>(oc) * s.out_h * s.out_w;
  double gb = 0.0;
  for (int i = 0; i < s.out_h * s.out_w; ++i) gb += g_ch[i];
  if (gbias) gbias[oc] = static_cast<float>(gb);
  for (int ic = 0; ic < s.in_c; ++ic) {
    const float* in_ch = in + static_cast<std::size_t>(ic) * s.in_h * s.in_w;
    for (int ky = 0; ky < s.ksize; ++ky) {
      for (int kx = 0; kx < s.ksize; ++kx) {
        double acc = 0.0;
        for (int oy = 0; oy < s.out_h; ++oy) {
          const int iy = oy * s.stride - s.pad + ky;
          if (iy < 0 || iy >= s.in_h) continue;
          for (int ox = 0; ox < s.out_w; ++ox) {
            const int ix = ox * s.stride - s.pad + kx;
            if (ix < 0 || ix >= s.in_w) continue;
            acc += static_cast<double>(g_ch[oy * s.out_w + ox]) * in_ch[iy * s.in_w + ix];
          }
        }
        gw[((static_cast<std::size_t>(oc) * s.in_c + ic) * s.ksize + ky) * s.ksize + kx] =
            static_cast<float>(acc);
      }
    }
  }
}

struct BilinearStencil {
  int x0, x1, y0, y1;
  double fx, fy;
};

// Border-clamped stencil around continuous coordinates (u, v).
inline BilinearStencil bilinear_stencil(double u, double v, int h, int w) {
  double cu = std::min(std::max(u, 0.0), static_cast<double>(w - 1));
  double cv = std::min(std::max(v, 0.0), static_cast<double>(h - 1));
  BilinearStencil st;
  st.x0 = static_cast<int>(std::floor(cu));
  st.y0 = static_cast<int>(std::floor(cv));
  if (st.x0 > w - 2) st.x0 = w - 2 < 0 ? 0 : w - 2;
  if (st.y0 > h - 2) st.y0 = h - 2 < 0 ? 0 : h - 2;
  st.x1 = std::min(st.x0 + 1, w - 1);
  st.y1 = std::min(st.y0 + 1, h - 1);
  st.fx = cu - st.x0;
  st.fy = cv - st.y0;
  return st;
}

inline void bilinear_sample_at(const float* src, int c, int h, int w, double u,
                               double v, int n, int p, float* out) {
  const BilinearStencil st = bilinear_stencil(u, v, h, w);
  const double w00 = (1.0 - st.fy) * (1.0 - st.fx);
  const double w01 = (1.0 - st.fy) * st.fx;
  const double w10 = st.fy * (1.0 - st.fx);
  const double w11 = st.fy * st.fx;
  for (int ch = 0; ch < c; ++ch) {
    const float* plane = src + static_cast<std::size_t>(ch) * h * w;
    const double val = w00 * plane[st.y0 * w + st.x0] + w01 * plane[st.y0 * w + st.x1] +
                       w10 * plane[st.y1 * w + st.x0] + w11 * plane[st.y1 * w + st.x1];
    out[static_cast<std::size_t>(ch) * n + p] = static_cast<float>(val);
  }
}

// d(sample)/du and d(sample)/dv summed over channels, weighted by gout.
// A coordinate clamped at the border stops moving, so its axis contributes
// zero gradient; the other axis may still be free.
inline void bilinear_grid_grad_at(const float* src, int c, int h, int w,
                                  double u, double v, int n, int p,
                                  const float* gout, double* gu, double* gv) {
  double du = 0.0, dv = 0.0;
  const bool u_free = u > 0.0 && u < w - 1;
  const bool v_free = v > 0.0 && v < h - 1;
  if (u_free || v_free) {
    const BilinearStencil st = bilinear_stencil(u, v, h, w);
    for (int ch = 0; ch < c; ++ch) {
      const float* plane = src + static_cast<std::size_t>(ch) * h * w;
      const double p00 = plane[st.y0 * w + st.x0];
      const double p01 = plane[st.y0 * w + st.x1];
      const double p10 = plane[st.y1 * w + st.x0];
      const double p11 = plane[st.y1 * w + st.x1];
      const double g = gout[static_cast<std::size_t>(ch) * n + p];
      if (u_free) du += g * ((1.0 - st.fy) * (p01 - p00) + st.fy * (p11 - p10));
      if (v_free) dv += g * ((1.0 - st.fx) * (p10 - p00) + st.fx * (p11 - p01));
    }
  }
  gu[p] = du;
  gv[p] = dv;
}

inline float avg_pool3x3_at(const float* in, int h, int w, int y, int x) {
  double acc = 0.0;
  for (int dy = -1; dy <= 1; ++dy) {
    const int sy = iclamp(y + dy, 0, h - 1);
    for (int dx = -1; dx <= 1; ++dx) {
      const int sx = iclamp(x + dx, 0, w - 1);
      acc += in[sy * w + sx];
    }
  }
  return static_cast<float>(acc / 9.0);
}

// How many taps of a 3x3 replicate-padded window centred at dst read src.
inline int clamp_tap_count(int src, int dst, int nlimit) {
  int cnt = 0;
  for (int d = -1; d <= 1; ++d)
    if (iclamp(dst + d, 0, nlimit - 1) == src) ++cnt;
  return cnt;
}

inline float avg_pool3x3_grad_at(const float* gout, int h, int w, int y, int x) {
  double acc = 0.0;
  for (int oy = std::max(0, y - 1); oy <= std::min(h - 1, y + 1); ++oy) {
    const int cy = clamp_tap_count(y, oy, h);
    if (cy == 0) continue;
    for (int ox = std::max(0, x - 1); ox <= std::min(w - 1, x + 1); ++ox) {
      const int cx = clamp_tap_count(x, ox, w);
      if (cx == 0) continue;
      acc += static_cast<double>(cy * cx) * gout[oy * w + ox];
    }
  }
  return static_cast<float>(acc / 9.0);
}

// align_corners=false source coordinate for bilinear resizing.
inline double resize_src_coord(int o, double scale) {
  return (o + 0.5) * scale - 0.5;
}

inline float resize_out_at(const float* in, int h, int w, int oh, int ow,
                           int oy, int ox) {
  const double sy = resize_src_coord(oy, static_cast<double>(h) / oh);
  const double sx = resize_src_coord(ox, static_cast<double>(w) / ow);
  const BilinearStencil st = bilinear_stencil(sx, sy, h, w);
  const double v0 = (1.0 - st.fx) * in[st.y0 * w + st.x0] + st.fx * in[st.y0 * w + st.x1];
  const double v1 = (1.0 - st.fx) * in[st.y1 * w + st.x0] + st.fx * in[st.y1 * w + st.x1];
  return static_cast<float>((1.0 - st.fy) * v0 + st.fy * v1);
}

// Weight with which output row/column o reads input row/column i.
inline double resize_axis_weight(int o, int i, int in_n, int out_n) {
  const double s = resize_src_coord(o, static_cast<double>(in_n) / out_n);
  const BilinearStencil st =
      bilinear_stencil(s, 0.0, 1, in_n);  // reuse the 1-d clamped stencil in x
  double wgt = 0.0;
  if (st.x0 == i) wgt += 1.0 - st.fx;
  if (st.x1 == i) wgt += st.fx;
  return wgt;
}

inline float resize_grad_at(const float* gout, int h, int w, int oh, int ow,
                            int y, int x) {
  const double sy_scale = static_cast<double>(oh) / h;
  const double sx_scale = static_cast<double>(ow) / w;
  int oy_lo = static_cast<int>(std::floor((y - 0.5) * sy_scale - 0.5));
  int oy_hi = static_cast<int>(std::ceil((y + 1.5) * sy_scale + 0.5));
  int ox_lo = static_cast<int>(std::floor((x - 0.5) * sx_scale - 0.5));
  int ox_hi = static_cast<int>(std::ceil((x + 1.5) * sx_scale + 0.5));
  if (y == 0) oy_lo = 0;
  if (y == h - 1) oy_hi = oh - 1;
  if (x == 0) ox_lo = 0;
  if (x == w - 1) ox_hi = ow - 1;
  oy_lo = iclamp(oy_lo, 0, oh - 1);
  oy_hi = iclamp(oy_hi, 0, oh - 1);
  ox_lo = iclamp(ox_lo, 0, ow - 1);
  ox_hi = iclamp(ox_hi, 0, ow - 1);
  double acc = 0.0;
  for (int oy = oy_lo; oy <= oy_hi; ++oy) {
    const double wy = resize_axis_weight(oy, y, h, oh);
    if (wy == 0.0) continue;
    for (int ox = ox_lo; ox <= ox_hi; ++ox) {
      const double wx = resize_axis_weight(ox, x, w, ow);
      if (wx == 0.0) continue;
      acc += wy * wx * gout[oy * ow + ox];
    }
  }
  return static_cast<float>(acc);
}

}  // namespace uqd::kernels::detail
