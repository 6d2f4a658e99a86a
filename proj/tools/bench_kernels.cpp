// Serial vs OpenMP kernel throughput on training-sized workloads.
// Run: ./uqdepth_bench [--benchmark_filter=conv...]

#include <benchmark/benchmark.h>

#include <vector>

#include "uqdepth/kernels.hpp"
#include "uqdepth/rng.hpp"

using namespace uqd;
using kernels::ConvShape;

namespace {

std::vector<float> random_vec(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return v;
}

template <typename Fn>
void bench_conv_forward(benchmark::State& state, Fn fn) {
  const ConvShape s = kernels::conv_shape(32, 32, 32, 32, 3, 1, 1);
  const auto in = random_vec(static_cast<std::size_t>(s.in_c) * s.in_h * s.in_w, 1);
  const auto w = random_vec(static_cast<std::size_t>(s.out_c) * s.in_c * 9, 2);
  const auto b = random_vec(static_cast<std::size_t>(s.out_c), 3);
  std::vector<float> out(static_cast<std::size_t>(s.out_c) * s.out_h * s.out_w);
  for (auto _ : state) {
    fn(in.data(), w.data(), b.data(), out.data(), s);
    benchmark::DoNotOptimize(out.data());
  }
}

template <typename Fn>
void bench_conv_backward_params(benchmark::State& state, Fn fn) {
  const ConvShape s = kernels::conv_shape(32, 32, 32, 32, 3, 1, 1);
  const auto in = random_vec(static_cast<std::size_t>(s.in_c) * s.in_h * s.in_w, 1);
  const auto gout =
      random_vec(static_cast<std::size_t>(s.out_c) * s.out_h * s.out_w, 4);
  std::vector<float> gw(static_cast<std::size_t>(s.out_c) * s.in_c * 9);
  std::vector<float> gb(static_cast<std::size_t>(s.out_c));
  for (auto _ : state) {
    fn(gout.data(), in.data(), gw.data(), gb.data(), s);
    benchmark::DoNotOptimize(gw.data());
  }
}

template <typename Fn>
void bench_bilinear(benchmark::State& state, Fn fn) {
  const int c = 3, h = 64, w = 64, n = h * w;
  const auto src = random_vec(static_cast<std::size_t>(c) * h * w, 5);
  Rng rng(6);
  std::vector<double> u(n), v(n);
  for (int i = 0; i < n; ++i) {
    u[i] = rng.uniform(0.0, w - 1.0);
    v[i] = rng.uniform(0.0, h - 1.0);
  }
  std::vector<float> out(static_cast<std::size_t>(c) * n);
  for (auto _ : state) {
    fn(src.data(), c, h, w, u.data(), v.data(), n, out.data());
    benchmark::DoNotOptimize(out.data());
  }
}

template <typename Fn>
void bench_resize(benchmark::State& state, Fn fn) {
  const int c = 16, h = 16, w = 16, oh = 64, ow = 64;
  const auto in = random_vec(static_cast<std::size_t>(c) * h * w, 7);
  std::vector<float> out(static_cast<std::size_t>(c) * oh * ow);
  for (auto _ : state) {
    fn(in.data(), c, h, w, oh, ow, out.data());
    benchmark::DoNotOptimize(out.data());
  }
}

void conv2d_forward_serial(benchmark::State& s) {
  bench_conv_forward(s, kernels::serial::conv2d_forward);
}
void conv2d_forward_omp(benchmark::State& s) {
  bench_conv_forward(s, kernels::omp::conv2d_forward);
}
void conv2d_backward_params_serial(benchmark::State& s) {
  bench_conv_backward_params(s, kernels::serial::conv2d_backward_params);
}
void conv2d_backward_params_omp(benchmark::State& s) {
  bench_conv_backward_params(s, kernels::omp::conv2d_backward_params);
}
void bilinear_sample_serial(benchmark::State& s) {
  bench_bilinear(s, kernels::serial::bilinear_sample_forward);
}
void bilinear_sample_omp(benchmark::State& s) {
  bench_bilinear(s, kernels::omp::bilinear_sample_forward);
}
void resize_bilinear_serial(benchmark::State& s) {
  bench_resize(s, kernels::serial::resize_bilinear_forward);
}
void resize_bilinear_omp(benchmark::State& s) {
  bench_resize(s, kernels::omp::resize_bilinear_forward);
}

BENCHMARK(conv2d_forward_serial);
BENCHMARK(conv2d_forward_omp);
BENCHMARK(conv2d_backward_params_serial);
BENCHMARK(conv2d_backward_params_omp);
BENCHMARK(bilinear_sample_serial);
BENCHMARK(bilinear_sample_omp);
BENCHMARK(resize_bilinear_serial);
BENCHMARK(resize_bilinear_omp);

}  // namespace

BENCHMARK_MAIN();
