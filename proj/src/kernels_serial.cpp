// Reference implementations: single-threaded loops over the same per-element
// bodies the omp backend uses. Tests compare the two bit-for-bit.

#include "kernels_detail.hpp"
#include "uqdepth/kernels.hpp"

namespace uqd::kernels::serial {

using namespace uqd::kernels::detail;

void conv2d_forward(const float* in, const float* w, const float* bias,
                    float* out, const ConvShape& s) {
  for (int oc = 0; oc < s.out_c; ++oc)
    for (int oy = 0; oy < s.out_h; ++oy)
      for (int ox = 0; ox < s.out_w; ++ox)
        out[(static_cast<std::size_t>(oc) * s.out_h + oy) * s.out_w + ox] =
            conv_out_at(in, w, bias, s, oc, oy, ox);
}

void conv2d_backward_input(const float* gout, const float* w, float* gin,
                           const ConvShape& s) {
  for (int ic = 0; ic < s.in_c; ++ic)
    for (int iy = 0; iy < s.in_h; ++iy)
      for (int ix = 0; ix < s.in_w; ++ix)
        gin[(static_cast<std::size_t>(ic) * s.in_h + iy) * s.in_w + ix] =
            conv_gin_at(gout, w, s, ic, iy, ix);
}

void conv2d_backward_params(const float* gout, const float* in, float* gw,
                            float* gbias, const ConvShape& s) {
  for (int oc = 0; oc < s.out_c; ++oc)
    conv_gparams_for_oc(gout, in, s, oc, gw, gbias);
}

void bilinear_sample_forward(const float* src, int c, int h, int w,
                             const double* u, const double* v, int n,
                             float* out) {
  for (int p = 0; p < n; ++p) bilinear_sample_at(src, c, h, w, u[p], v[p], n, p, out);
}

void bilinear_sample_backward_grid(const float* src, int c, int h, int w,
                                   const double* u, const double* v, int n,
                                   const float* gout, double* gu, double* gv) {
  for (int p = 0; p < n; ++p)
    bilinear_grid_grad_at(src, c, h, w, u[p], v[p], n, p, gout, gu, gv);
}

void avg_pool3x3_forward(const float* in, int c, int h, int w, float* out) {
  for (int ch = 0; ch < c; ++ch) {
    const float* ip = in + static_cast<std::size_t>(ch) * h * w;
    float* op = out + static_cast<std::size_t>(ch) * h * w;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) op[y * w + x] = avg_pool3x3_at(ip, h, w, y, x);
  }
}

void avg_pool3x3_backward(const float* gout, int c, int h, int w, float* gin) {
  for (int ch = 0; ch < c; ++ch) {
    const float* gp = gout + static_cast<std::size_t>(ch) * h * w;
    float* ip = gin + static_cast<std::size_t>(ch) * h * w;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) ip[y * w + x] = avg_pool3x3_grad_at(gp, h, w, y, x);
  }
}

void upsample_nearest2x_forward(const float* in, int c, int h, int w,
                                float* out) {
  const int oh = 2 * h, ow = 2 * w;
  for (int ch = 0; ch < c; ++ch) {
    const float* ip = in + static_cast<std::size_t>(ch) * h * w;
    float* op = out + static_cast<std::size_t>(ch) * oh * ow;
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) op[y * ow + x] = ip[(y / 2) * w + (x / 2)];
  }
}

void upsample_nearest2x_backward(const float* gout, int c, int h, int w,
                                 float* gin) {
  const int ow = 2 * w;
  for (int ch = 0; ch < c; ++ch) {
    const float* gp = gout + static_cast<std::size_t>(ch) * (2 * h) * ow;
    float* ip = gin + static_cast<std::size_t>(ch) * h * w;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        ip[y * w + x] = gp[(2 * y) * ow + 2 * x] + gp[(2 * y) * ow + 2 * x + 1] +
                        gp[(2 * y + 1) * ow + 2 * x] + gp[(2 * y + 1) * ow + 2 * x + 1];
  }
}

void resize_bilinear_forward(const float* in, int c, int h, int w, int oh,
                             int ow, float* out) {
  for (int ch = 0; ch < c; ++ch) {
    const float* ip = in + static_cast<std::size_t>(ch) * h * w;
    float* op = out + static_cast<std::size_t>(ch) * oh * ow;
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox)
        op[oy * ow + ox] = resize_out_at(ip, h, w, oh, ow, oy, ox);
  }
}

void resize_bilinear_backward(const float* gout, int c, int h, int w, int oh,
                              int ow, float* gin) {
  for (int ch = 0; ch < c; ++ch) {
    const float* gp = gout + static_cast<std::size_t>(ch) * oh * ow;
    float* ip = gin + static_cast<std::size_t>(ch) * h * w;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        ip[y * w + x] = resize_grad_at(gp, h, w, oh, ow, y, x);
  }
}

}  // namespace uqd::kernels::serial
