#pragma once

// Hot inner loops of the framework: convolution, bilinear sampling, pooling
// and resizing. Each kernel has two implementations with identical semantics:
//
//   kernels::serial  - plain reference loops, kept as ground truth
//   kernels::omp     - OpenMP-parallel version used in production
//
// Both backends partition work over independent output elements and keep the
// same per-element accumulation order, so their results are bit-identical and
// independent of the thread count. The unqualified functions dispatch on the
// active backend (default: omp when compiled with OpenMP).

namespace uqd::kernels {

enum class Backend { serial, omp };

Backend active_backend();
void set_backend(Backend b);

struct ConvShape {
  int in_c, in_h, in_w;
  int out_c, out_h, out_w;
  int ksize, stride, pad;
};

// Fills in the output spatial size for the given input/kernel/stride/pad.
ConvShape conv_shape(int in_c, int in_h, int in_w, int out_c, int ksize,
                     int stride, int pad);

#define UQD_KERNEL_FUNCS                                                       \
  void conv2d_forward(const float* in, const float* w, const float* bias,     \
                      float* out, const ConvShape& s);                         \
  void conv2d_backward_input(const float* gout, const float* w, float* gin,   \
                             const ConvShape& s);                              \
  void conv2d_backward_params(const float* gout, const float* in, float* gw,  \
                              float* gbias, const ConvShape& s);               \
  void bilinear_sample_forward(const float* src, int c, int h, int w,         \
                               const double* u, const double* v, int n,       \
                               float* out);                                    \
  void bilinear_sample_backward_grid(const float* src, int c, int h, int w,   \
                                     const double* u, const double* v, int n, \
                                     const float* gout, double* gu,           \
                                     double* gv);                              \
  void avg_pool3x3_forward(const float* in, int c, int h, int w, float* out); \
  void avg_pool3x3_backward(const float* gout, int c, int h, int w,           \
                            float* gin);                                       \
  void upsample_nearest2x_forward(const float* in, int c, int h, int w,       \
                                  float* out);                                 \
  void upsample_nearest2x_backward(const float* gout, int c, int h, int w,    \
                                   float* gin);                                \
  void resize_bilinear_forward(const float* in, int c, int h, int w, int oh,  \
                               int ow, float* out);                            \
  void resize_bilinear_backward(const float* gout, int c, int h, int w,       \
                                int oh, int ow, float* gin);

namespace serial {
UQD_KERNEL_FUNCS
}
namespace omp {
UQD_KERNEL_FUNCS
}
UQD_KERNEL_FUNCS  // dispatch on active_backend()

#undef UQD_KERNEL_FUNCS

}  // namespace uqd::kernels
