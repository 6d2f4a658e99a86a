#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <vector>

#include "support.hpp"
#include "uqdepth/kernels.hpp"

using namespace uqd;
using kernels::ConvShape;

namespace {

bool bit_equal(const std::vector<float>& a, const std::vector<float>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

std::vector<float> random_vec(std::size_t n, Rng& rng, double lo = -1.0,
                              double hi = 1.0) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(lo, hi));
  return v;
}

}  // namespace

TEST_CASE("conv2d: omp backend matches the serial reference bit-for-bit") {
  Rng rng(7);
  for (int stride : {1, 2}) {
    const ConvShape s = kernels::conv_shape(5, 12, 16, 7, 3, stride, 1);
    const auto in = random_vec(static_cast<std::size_t>(s.in_c) * s.in_h * s.in_w, rng);
    const auto w =
        random_vec(static_cast<std::size_t>(s.out_c) * s.in_c * s.ksize * s.ksize, rng);
    const auto b = random_vec(static_cast<std::size_t>(s.out_c), rng);
    const std::size_t out_n = static_cast<std::size_t>(s.out_c) * s.out_h * s.out_w;

    std::vector<float> out_a(out_n), out_b(out_n);
    kernels::serial::conv2d_forward(in.data(), w.data(), b.data(), out_a.data(), s);
    kernels::omp::conv2d_forward(in.data(), w.data(), b.data(), out_b.data(), s);
    CHECK(bit_equal(out_a, out_b));

    const auto gout = random_vec(out_n, rng);
    std::vector<float> gin_a(in.size()), gin_b(in.size());
    kernels::serial::conv2d_backward_input(gout.data(), w.data(), gin_a.data(), s);
    kernels::omp::conv2d_backward_input(gout.data(), w.data(), gin_b.data(), s);
    CHECK(bit_equal(gin_a, gin_b));

    std::vector<float> gw_a(w.size()), gw_b(w.size()), gb_a(b.size()), gb_b(b.size());
    kernels::serial::conv2d_backward_params(gout.data(), in.data(), gw_a.data(),
                                            gb_a.data(), s);
    kernels::omp::conv2d_backward_params(gout.data(), in.data(), gw_b.data(),
                                         gb_b.data(), s);
    CHECK(bit_equal(gw_a, gw_b));
    CHECK(bit_equal(gb_a, gb_b));
  }
}

TEST_CASE("bilinear sampling, pooling, resizing: backend parity") {
  Rng rng(11);
  const int c = 3, h = 9, w = 13;
  const auto src = random_vec(static_cast<std::size_t>(c) * h * w, rng, 0.0, 1.0);

  const int n = 40;
  std::vector<double> u(n), v(n);
  for (int i = 0; i < n; ++i) {
    u[i] = rng.uniform(-2.0, w + 1.0);  // includes out-of-bounds samples
    v[i] = rng.uniform(-2.0, h + 1.0);
  }
  std::vector<float> s_out(static_cast<std::size_t>(c) * n), o_out(s_out.size());
  kernels::serial::bilinear_sample_forward(src.data(), c, h, w, u.data(), v.data(), n,
                                           s_out.data());
  kernels::omp::bilinear_sample_forward(src.data(), c, h, w, u.data(), v.data(), n,
                                        o_out.data());
  CHECK(bit_equal(s_out, o_out));

  const auto gout = random_vec(s_out.size(), rng);
  std::vector<double> gu_a(n), gv_a(n), gu_b(n), gv_b(n);
  kernels::serial::bilinear_sample_backward_grid(src.data(), c, h, w, u.data(), v.data(),
                                                 n, gout.data(), gu_a.data(), gv_a.data());
  kernels::omp::bilinear_sample_backward_grid(src.data(), c, h, w, u.data(), v.data(), n,
                                              gout.data(), gu_b.data(), gv_b.data());
  CHECK(std::memcmp(gu_a.data(), gu_b.data(), gu_a.size() * sizeof(double)) == 0);
  CHECK(std::memcmp(gv_a.data(), gv_b.data(), gv_a.size() * sizeof(double)) == 0);

  std::vector<float> pool_a(src.size()), pool_b(src.size());
  kernels::serial::avg_pool3x3_forward(src.data(), c, h, w, pool_a.data());
  kernels::omp::avg_pool3x3_forward(src.data(), c, h, w, pool_b.data());
  CHECK(bit_equal(pool_a, pool_b));

  const auto gpool = random_vec(src.size(), rng);
  std::vector<float> gp_a(src.size()), gp_b(src.size());
  kernels::serial::avg_pool3x3_backward(gpool.data(), c, h, w, gp_a.data());
  kernels::omp::avg_pool3x3_backward(gpool.data(), c, h, w, gp_b.data());
  CHECK(bit_equal(gp_a, gp_b));

  const int oh = 23, ow = 31;
  std::vector<float> rs_a(static_cast<std::size_t>(c) * oh * ow), rs_b(rs_a.size());
  kernels::serial::resize_bilinear_forward(src.data(), c, h, w, oh, ow, rs_a.data());
  kernels::omp::resize_bilinear_forward(src.data(), c, h, w, oh, ow, rs_b.data());
  CHECK(bit_equal(rs_a, rs_b));

  const auto gr = random_vec(rs_a.size(), rng);
  std::vector<float> gr_a(src.size()), gr_b(src.size());
  kernels::serial::resize_bilinear_backward(gr.data(), c, h, w, oh, ow, gr_a.data());
  kernels::omp::resize_bilinear_backward(gr.data(), c, h, w, oh, ow, gr_b.data());
  CHECK(bit_equal(gr_a, gr_b));

  std::vector<float> up_a(static_cast<std::size_t>(c) * 4 * h * w), up_b(up_a.size());
  kernels::serial::upsample_nearest2x_forward(src.data(), c, h, w, up_a.data());
  kernels::omp::upsample_nearest2x_forward(src.data(), c, h, w, up_b.data());
  CHECK(bit_equal(up_a, up_b));

  const auto gup = random_vec(up_a.size(), rng);
  std::vector<float> gu2_a(src.size()), gu2_b(src.size());
  kernels::serial::upsample_nearest2x_backward(gup.data(), c, h, w, gu2_a.data());
  kernels::omp::upsample_nearest2x_backward(gup.data(), c, h, w, gu2_b.data());
  CHECK(bit_equal(gu2_a, gu2_b));
}

TEST_CASE("avg_pool3x3 replicate border matches a direct window sum") {
  Rng rng(3);
  const int h = 6, w = 5;
  const auto in = random_vec(static_cast<std::size_t>(h) * w, rng);
  std::vector<float> out(in.size());
  kernels::avg_pool3x3_forward(in.data(), 1, h, w, out.data());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int sy = std::clamp(y + dy, 0, h - 1);
          const int sx = std::clamp(x + dx, 0, w - 1);
          acc += in[static_cast<std::size_t>(sy) * w + sx];
        }
      CHECK(out[static_cast<std::size_t>(y) * w + x] ==
            doctest::Approx(acc / 9.0).epsilon(1e-6));
    }
}

TEST_CASE("avg_pool3x3 backward is the exact transpose of the forward") {
  // <A x, y> == <x, A^T y> for random x, y
  Rng rng(5);
  const int h = 7, w = 6;
  const auto x = random_vec(static_cast<std::size_t>(h) * w, rng);
  const auto y = random_vec(x.size(), rng);
  std::vector<float> ax(x.size()), aty(x.size());
  kernels::avg_pool3x3_forward(x.data(), 1, h, w, ax.data());
  kernels::avg_pool3x3_backward(y.data(), 1, h, w, aty.data());
  double lhs = 0, rhs = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    lhs += static_cast<double>(ax[i]) * y[i];
    rhs += static_cast<double>(x[i]) * aty[i];
  }
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-5));
}

TEST_CASE("resize_bilinear backward is the exact transpose of the forward") {
  Rng rng(9);
  const int h = 5, w = 4, oh = 12, ow = 9;
  const auto x = random_vec(static_cast<std::size_t>(h) * w, rng);
  const auto y = random_vec(static_cast<std::size_t>(oh) * ow, rng);
  std::vector<float> ax(y.size()), aty(x.size());
  kernels::resize_bilinear_forward(x.data(), 1, h, w, oh, ow, ax.data());
  kernels::resize_bilinear_backward(y.data(), 1, h, w, oh, ow, aty.data());
  double lhs = 0, rhs = 0;
  for (std::size_t i = 0; i < y.size(); ++i) lhs += static_cast<double>(ax[i]) * y[i];
  for (std::size_t i = 0; i < x.size(); ++i) rhs += static_cast<double>(x[i]) * aty[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-5));
}

TEST_CASE("backend switch is honored") {
  const auto saved = kernels::active_backend();
  kernels::set_backend(kernels::Backend::serial);
  CHECK(kernels::active_backend() == kernels::Backend::serial);
  kernels::set_backend(saved);
}
