#include "uqdepth/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>

namespace uqd::kernels {

namespace {

Backend initial_backend() {
#ifdef _OPENMP
  const char* env = std::getenv("UQDEPTH_BACKEND");
  if (env && std::strcmp(env, "serial") == 0) return Backend::serial;
  return Backend::omp;
#else
  return Backend::serial;
#endif
}

std::atomic<Backend> g_backend{initial_backend()};

}  // namespace

Backend active_backend() { return g_backend.load(); }
void set_backend(Backend b) { g_backend.store(b); }

ConvShape conv_shape(int in_c, int in_h, int in_w, int out_c, int ksize,
                     int stride, int pad) {
  ConvShape s;
  s.in_c = in_c;
  s.in_h = in_h;
  s.in_w = in_w;
  s.out_c = out_c;
  s.ksize = ksize;
  s.stride = stride;
  s.pad = pad;
  s.out_h = (in_h + 2 * pad - ksize) / stride + 1;
  s.out_w = (in_w + 2 * pad - ksize) / stride + 1;
  return s;
}

#define UQD_DISPATCH(fn, ...)                    \
  if (active_backend() == Backend::serial)       \
    serial::fn(__VA_ARGS__);                     \
  else                                           \
    omp::fn(__VA_ARGS__)

void conv2d_forward(const float* in, const float* w, const float* bias,
                    float* out, const ConvShape& s) {
  UQD_DISPATCH(conv2d_forward, in, w, bias, out, s);
}

void conv2d_backward_input(const float* gout, const float* w, float* gin,
                           const ConvShape& s) {
  UQD_DISPATCH(conv2d_backward_input, gout, w, gin, s);
}

void conv2d_backward_params(const float* gout, const float* in, float* gw,
                            float* gbias, const ConvShape& s) {
  UQD_DISPATCH(conv2d_backward_params, gout, in, gw, gbias, s);
}

void bilinear_sample_forward(const float* src, int c, int h, int w,
                             const double* u, const double* v, int n,
                             float* out) {
  UQD_DISPATCH(bilinear_sample_forward, src, c, h, w, u, v, n, out);
}

void bilinear_sample_backward_grid(const float* src, int c, int h, int w,
                                   const double* u, const double* v, int n,
                                   const float* gout, double* gu, double* gv) {
  UQD_DISPATCH(bilinear_sample_backward_grid, src, c, h, w, u, v, n, gout, gu, gv);
}

void avg_pool3x3_forward(const float* in, int c, int h, int w, float* out) {
  UQD_DISPATCH(avg_pool3x3_forward, in, c, h, w, out);
}

void avg_pool3x3_backward(const float* gout, int c, int h, int w, float* gin) {
  UQD_DISPATCH(avg_pool3x3_backward, gout, c, h, w, gin);
}

void upsample_nearest2x_forward(const float* in, int c, int h, int w,
                                float* out) {
  UQD_DISPATCH(upsample_nearest2x_forward, in, c, h, w, out);
}

void upsample_nearest2x_backward(const float* gout, int c, int h, int w,
                                 float* gin) {
  UQD_DISPATCH(upsample_nearest2x_backward, gout, c, h, w, gin);
}

void resize_bilinear_forward(const float* in, int c, int h, int w, int oh,
                             int ow, float* out) {
  UQD_DISPATCH(resize_bilinear_forward, in, c, h, w, oh, ow, out);
}

void resize_bilinear_backward(const float* gout, int c, int h, int w, int oh,
                              int ow, float* gin) {
  UQD_DISPATCH(resize_bilinear_backward, gout, c, h, w, oh, ow, gin);
}

#undef UQD_DISPATCH

}  // namespace uqd::kernels
