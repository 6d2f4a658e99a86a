#include "uqdepth/ops.hpp"

#include <cmath>
#include <stdexcept>

#include "uqdepth/kernels.hpp"

namespace uqd::ops {

namespace {

// Unary op whose derivative only needs input and output values.
template <typename Fwd, typename Bwd>
Var unary(const Var& x, Fwd fwd, Bwd bwd_factor) {
  Tensor out(x.shape());
  const Tensor& in = x.value();
  for (std::int64_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  auto xn = x.node();
  return make_op(std::move(out), {x}, [xn, bwd_factor](Node& self) {
    Tensor g(self.value.shape());
    for (std::int64_t i = 0; i < g.size(); ++i)
      g[i] = self.grad[i] * bwd_factor(xn->value[i], self.value[i]);
    xn->accumulate(g);
  });
}

}  // namespace

Var neg(const Var& x) {
  return unary(x, [](float v) { return -v; }, [](float, float) { return -1.0f; });
}

Var abs(const Var& x) {
  return unary(x, [](float v) { return std::fabs(v); },
               [](float v, float) { return v > 0.0f ? 1.0f : (v < 0.0f ? -1.0f : 0.0f); });
}

Var exp(const Var& x) {
  return unary(x, [](float v) { return std::exp(v); },
               [](float, float y) { return y; });
}

Var log(const Var& x) {
  return unary(x, [](float v) { return std::log(v); },
               [](float v, float) { return 1.0f / v; });
}

Var square(const Var& x) {
  return unary(x, [](float v) { return v * v; },
               [](float v, float) { return 2.0f * v; });
}

Var reciprocal(const Var& x) {
  return unary(x, [](float v) { return 1.0f / v; },
               [](float, float y) { return -y * y; });
}

Var sigmoid(const Var& x) {
  return unary(x, [](float v) { return 1.0f / (1.0f + std::exp(-v)); },
               [](float, float y) { return y * (1.0f - y); });
}

Var relu(const Var& x) {
  return unary(x, [](float v) { return v > 0.0f ? v : 0.0f; },
               [](float v, float) { return v > 0.0f ? 1.0f : 0.0f; });
}

Var elu(const Var& x) {
  return unary(x, [](float v) { return v > 0.0f ? v : std::exp(v) - 1.0f; },
               [](float v, float y) { return v > 0.0f ? 1.0f : y + 1.0f; });
}

Var affine(const Var& x, float scale, float shift) {
  return unary(x, [scale, shift](float v) { return scale * v + shift; },
               [scale](float, float) { return scale; });
}

Var clamp(const Var& x, float lo, float hi) {
  return unary(x, [lo, hi](float v) { return v < lo ? lo : (v > hi ? hi : v); },
               [lo, hi](float v, float) { return (v > lo && v < hi) ? 1.0f : 0.0f; });
}

Var add(const Var& a, const Var& b) {
  check_same_shape(a.value(), b.value(), "add");
  Tensor out(a.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  auto an = a.node(), bn = b.node();
  return make_op(std::move(out), {a, b}, [an, bn](Node& self) {
    if (an->requires_grad) an->accumulate(self.grad);
    if (bn->requires_grad) bn->accumulate(self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a.value(), b.value(), "sub");
  Tensor out(a.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  auto an = a.node(), bn = b.node();
  return make_op(std::move(out), {a, b}, [an, bn](Node& self) {
    if (an->requires_grad) an->accumulate(self.grad);
    if (bn->requires_grad) {
      Tensor g(self.grad.shape());
      for (std::int64_t i = 0; i < g.size(); ++i) g[i] = -self.grad[i];
      bn->accumulate(g);
    }
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a.value(), b.value(), "mul");
  Tensor out(a.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  auto an = a.node(), bn = b.node();
  return make_op(std::move(out), {a, b}, [an, bn](Node& self) {
    if (an->requires_grad) {
      Tensor g(self.grad.shape());
      for (std::int64_t i = 0; i < g.size(); ++i) g[i] = self.grad[i] * bn->value[i];
      an->accumulate(g);
    }
    if (bn->requires_grad) {
      Tensor g(self.grad.shape());
      for (std::int64_t i = 0; i < g.size(); ++i) g[i] = self.grad[i] * an->value[i];
      bn->accumulate(g);
    }
  });
}

Var div(const Var& a, const Var& b) {
  check_same_shape(a.value(), b.value(), "div");
  Tensor out(a.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] / b.value()[i];
  auto an = a.node(), bn = b.node();
  return make_op(std::move(out), {a, b}, [an, bn](Node& self) {
    if (an->requires_grad) {
      Tensor g(self.grad.shape());
      for (std::int64_t i = 0; i < g.size(); ++i) g[i] = self.grad[i] / bn->value[i];
      an->accumulate(g);
    }
    if (bn->requires_grad) {
      Tensor g(self.grad.shape());
      for (std::int64_t i = 0; i < g.size(); ++i) {
        const float bv = bn->value[i];
        g[i] = -self.grad[i] * an->value[i] / (bv * bv);
      }
      bn->accumulate(g);
    }
  });
}

Var broadcast_mul(const Var& x, const Var& s) {
  if (s.value().size() != 1) throw std::invalid_argument("broadcast_mul: scalar expected");
  Tensor out(x.shape());
  const float sv = s.value()[0];
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = x.value()[i] * sv;
  auto xn = x.node(), sn = s.node();
  return make_op(std::move(out), {x, s}, [xn, sn](Node& self) {
    if (xn->requires_grad) {
      Tensor g(self.grad.shape());
      const float sv = sn->value[0];
      for (std::int64_t i = 0; i < g.size(); ++i) g[i] = self.grad[i] * sv;
      xn->accumulate(g);
    }
    if (sn->requires_grad) {
      double acc = 0.0;
      for (std::int64_t i = 0; i < self.grad.size(); ++i)
        acc += static_cast<double>(self.grad[i]) * xn->value[i];
      sn->accumulate(Tensor::scalar(static_cast<float>(acc)));
    }
  });
}

Var sum(const Var& x) {
  Tensor out = Tensor::scalar(static_cast<float>(x.value().sum()));
  auto xn = x.node();
  return make_op(std::move(out), {x}, [xn](Node& self) {
    Tensor g(xn->value.shape(), self.grad[0]);
    xn->accumulate(g);
  });
}

Var mean(const Var& x) {
  const double n = static_cast<double>(x.value().size());
  Tensor out = Tensor::scalar(static_cast<float>(x.value().sum() / n));
  auto xn = x.node();
  return make_op(std::move(out), {x}, [xn, n](Node& self) {
    Tensor g(xn->value.shape(), static_cast<float>(self.grad[0] / n));
    xn->accumulate(g);
  });
}

Var masked_mean(const Var& x, const Tensor& mask) {
  check_same_shape(x.value(), mask, "masked_mean");
  double acc = 0.0;
  std::int64_t count = 0;
  for (std::int64_t i = 0; i < mask.size(); ++i) {
    if (mask[i] > 0.5f) {
      acc += x.value()[i];
      ++count;
    }
  }
  if (count == 0) throw std::domain_error("masked_mean: empty mask");
  Tensor out = Tensor::scalar(static_cast<float>(acc / count));
  auto xn = x.node();
  return make_op(std::move(out), {x}, [xn, mask, count](Node& self) {
    Tensor g(xn->value.shape());
    const float w = self.grad[0] / static_cast<float>(count);
    for (std::int64_t i = 0; i < g.size(); ++i) g[i] = mask[i] > 0.5f ? w : 0.0f;
    xn->accumulate(g);
  });
}

Var mean_channels(const Var& x) {
  if (x.value().ndim() != 3) throw std::invalid_argument("mean_channels: rank-3 expected");
  const int c = x.value().dim(0), h = x.value().dim(1), w = x.value().dim(2);
  Tensor out({h, w});
  for (int y = 0; y < h; ++y)
    for (int xx = 0; xx < w; ++xx) {
      double acc = 0.0;
      for (int ch = 0; ch < c; ++ch) acc += x.value().at(ch, y, xx);
      out.at(y, xx) = static_cast<float>(acc / c);
    }
  auto xn = x.node();
  return make_op(std::move(out), {x}, [xn, c, h, w](Node& self) {
    Tensor g({c, h, w});
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) g.at(ch, y, xx) = self.grad.at(y, xx) / c;
    xn->accumulate(g);
  });
}

Var mean_hw(const Var& x) {
  if (x.value().ndim() != 3) throw std::invalid_argument("mean_hw: rank-3 expected");
  const int c = x.value().dim(0), h = x.value().dim(1), w = x.value().dim(2);
  const double n = static_cast<double>(h) * w;
  Tensor out({c, 1, 1});
  for (int ch = 0; ch < c; ++ch) {
    double acc = 0.0;
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx) acc += x.value().at(ch, y, xx);
    out[ch] = static_cast<float>(acc / n);
  }
  auto xn = x.node();
  return make_op(std::move(out), {x}, [xn, c, h, w, n](Node& self) {
    Tensor g({c, h, w});
    for (int ch = 0; ch < c; ++ch) {
      const float gv = static_cast<float>(self.grad[ch] / n);
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) g.at(ch, y, xx) = gv;
    }
    xn->accumulate(g);
  });
}

Var reshape(const Var& x, std::vector<int> shape) {
  Tensor out(std::move(shape));
  if (out.size() != x.value().size())
    throw std::invalid_argument("reshape: element count mismatch");
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = x.value()[i];
  auto xn = x.node();
  return make_op(std::move(out), {x}, [xn](Node& self) {
    Tensor g(xn->value.shape());
    for (std::int64_t i = 0; i < g.size(); ++i) g[i] = self.grad[i];
    xn->accumulate(g);
  });
}

Var concat_channels(const std::vector<Var>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_channels: empty input");
  const int h = xs[0].value().dim(1), w = xs[0].value().dim(2);
  int total_c = 0;
  for (const Var& x : xs) {
    if (x.value().ndim() != 3 || x.value().dim(1) != h || x.value().dim(2) != w)
      throw std::invalid_argument("concat_channels: incompatible shapes");
    total_c += x.value().dim(0);
  }
  Tensor out({total_c, h, w});
  std::int64_t off = 0;
  for (const Var& x : xs) {
    for (std::int64_t i = 0; i < x.value().size(); ++i) out[off + i] = x.value()[i];
    off += x.value().size();
  }
  std::vector<std::shared_ptr<Node>> nodes;
  for (const Var& x : xs) nodes.push_back(x.node());
  return make_op(std::move(out), xs, [nodes](Node& self) {
    std::int64_t off = 0;
    for (const auto& n : nodes) {
      if (n->requires_grad) {
        Tensor g(n->value.shape());
        for (std::int64_t i = 0; i < g.size(); ++i) g[i] = self.grad[off + i];
        n->accumulate(g);
      }
      off += n->value.size();
    }
  });
}

Var flip_horizontal(const Var& x) {
  const Tensor& in = x.value();
  const int w = in.dim(in.ndim() - 1);
  const std::int64_t rows = in.size() / w;
  Tensor out(in.shape());
  for (std::int64_t r = 0; r < rows; ++r)
    for (int c = 0; c < w; ++c) out[r * w + c] = in[r * w + (w - 1 - c)];
  auto xn = x.node();
  return make_op(std::move(out), {x}, [xn, rows, w](Node& self) {
    Tensor g(xn->value.shape());
    for (std::int64_t r = 0; r < rows; ++r)
      for (int c = 0; c < w; ++c) g[r * w + c] = self.grad[r * w + (w - 1 - c)];
    xn->accumulate(g);
  });
}

Var diff_x(const Var& x) {
  const Tensor& in = x.value();
  const int w = in.dim(in.ndim() - 1);
  if (w < 2) throw std::invalid_argument("diff_x: width < 2");
  const std::int64_t rows = in.size() / w;
  std::vector<int> shp = in.shape();
  shp.back() = w - 1;
  Tensor out(shp);
  for (std::int64_t r = 0; r < rows; ++r)
    for (int c = 0; c + 1 < w; ++c)
      out[r * (w - 1) + c] = in[r * w + c + 1] - in[r * w + c];
  auto xn = x.node();
  return make_op(std::move(out), {x}, [xn, rows, w](Node& self) {
    Tensor g(xn->value.shape());
    for (std::int64_t r = 0; r < rows; ++r)
      for (int c = 0; c + 1 < w; ++c) {
        const float gv = self.grad[r * (w - 1) + c];
        g[r * w + c + 1] += gv;
        g[r * w + c] -= gv;
      }
    xn->accumulate(g);
  });
}

Var diff_y(const Var& x) {
  const Tensor& in = x.value();
  const int nd = in.ndim();
  if (nd < 2) throw std::invalid_argument("diff_y: rank >= 2 expected");
  const int w = in.dim(nd - 1), h = in.dim(nd - 2);
  if (h < 2) throw std::invalid_argument("diff_y: height < 2");
  const std::int64_t planes = in.size() / (static_cast<std::int64_t>(h) * w);
  std::vector<int> shp = in.shape();
  shp[nd - 2] = h - 1;
  Tensor out(shp);
  for (std::int64_t pl = 0; pl < planes; ++pl) {
    const float* ip = in.data() + pl * h * w;
    float* op = out.data() + pl * (h - 1) * w;
    for (int y = 0; y + 1 < h; ++y)
      for (int c = 0; c < w; ++c) op[y * w + c] = ip[(y + 1) * w + c] - ip[y * w + c];
  }
  auto xn = x.node();
  return make_op(std::move(out), {x}, [xn, planes, h, w](Node& self) {
    Tensor g(xn->value.shape());
    for (std::int64_t pl = 0; pl < planes; ++pl) {
      float* ip = g.data() + pl * h * w;
      const float* op = self.grad.data() + pl * (h - 1) * w;
      for (int y = 0; y + 1 < h; ++y)
        for (int c = 0; c < w; ++c) {
          ip[(y + 1) * w + c] += op[y * w + c];
          ip[y * w + c] -= op[y * w + c];
        }
    }
    xn->accumulate(g);
  });
}

Var upsample_nearest2x(const Var& x) {
  const int c = x.value().dim(0), h = x.value().dim(1), w = x.value().dim(2);
  Tensor out({c, 2 * h, 2 * w});
  kernels::upsample_nearest2x_forward(x.value().data(), c, h, w, out.data());
  auto xn = x.node();
  return make_op(std::move(out), {x}, [xn, c, h, w](Node& self) {
    Tensor g({c, h, w});
    kernels::upsample_nearest2x_backward(self.grad.data(), c, h, w, g.data());
    xn->accumulate(g);
  });
}

Var resize_bilinear(const Var& x, int out_h, int out_w) {
  const bool chw = x.value().ndim() == 3;
  const int c = chw ? x.value().dim(0) : 1;
  const int h = x.value().dim(chw ? 1 : 0), w = x.value().dim(chw ? 2 : 1);
  if (out_h == h && out_w == w) return x;
  Tensor out(chw ? std::vector<int>{c, out_h, out_w} : std::vector<int>{out_h, out_w});
  kernels::resize_bilinear_forward(x.value().data(), c, h, w, out_h, out_w, out.data());
  auto xn = x.node();
  return make_op(std::move(out), {x}, [xn, c, h, w, out_h, out_w](Node& self) {
    Tensor g(xn->value.shape());
    kernels::resize_bilinear_backward(self.grad.data(), c, h, w, out_h, out_w, g.data());
    xn->accumulate(g);
  });
}

Var avg_pool3x3(const Var& x) {
  const bool chw = x.value().ndim() == 3;
  const int c = chw ? x.value().dim(0) : 1;
  const int h = x.value().dim(chw ? 1 : 0), w = x.value().dim(chw ? 2 : 1);
  Tensor out(x.shape());
  kernels::avg_pool3x3_forward(x.value().data(), c, h, w, out.data());
  auto xn = x.node();
  return make_op(std::move(out), {x}, [xn, c, h, w](Node& self) {
    Tensor g(xn->value.shape());
    kernels::avg_pool3x3_backward(self.grad.data(), c, h, w, g.data());
    xn->accumulate(g);
  });
}

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  const Tensor& in = x.value();
  const Tensor& wt = w.value();
  if (in.ndim() != 3 || wt.ndim() != 4)
    throw std::invalid_argument("conv2d: expects {c,h,w} input and {oc,ic,k,k} weights");
  if (wt.dim(1) != in.dim(0))
    throw std::invalid_argument("conv2d: channel mismatch");
  const kernels::ConvShape s = kernels::conv_shape(
      in.dim(0), in.dim(1), in.dim(2), wt.dim(0), wt.dim(2), stride, pad);
  Tensor out({s.out_c, s.out_h, s.out_w});
  kernels::conv2d_forward(in.data(), wt.data(), b.value().data(), out.data(), s);
  auto xn = x.node(), wn = w.node(), bn = b.node();
  return make_op(std::move(out), {x, w, b}, [xn, wn, bn, s](Node& self) {
    if (xn->requires_grad) {
      Tensor g({s.in_c, s.in_h, s.in_w});
      kernels::conv2d_backward_input(self.grad.data(), wn->value.data(), g.data(), s);
      xn->accumulate(g);
    }
    if (wn->requires_grad || bn->requires_grad) {
      Tensor gw(wn->value.shape());
      Tensor gb(bn->value.shape());
      kernels::conv2d_backward_params(self.grad.data(), xn->value.data(), gw.data(),
                                      gb.data(), s);
      if (wn->requires_grad) wn->accumulate(gw);
      if (bn->requires_grad) bn->accumulate(gb);
    }
  });
}

Var dropout(const Var& x, float p, Rng& rng) {
  if (p < 0.0f || p >= 1.0f) throw std::invalid_argument("dropout: p in [0,1) expected");
  if (p == 0.0f) return x;
  const float keep_scale = 1.0f / (1.0f - p);
  Tensor mask(x.shape());
  for (std::int64_t i = 0; i < mask.size(); ++i)
    mask[i] = rng.uniform() >= p ? keep_scale : 0.0f;
  Tensor out(x.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = x.value()[i] * mask[i];
  auto xn = x.node();
  return make_op(std::move(out), {x}, [xn, mask](Node& self) {
    Tensor g(self.grad.shape());
    for (std::int64_t i = 0; i < g.size(); ++i) g[i] = self.grad[i] * mask[i];
    xn->accumulate(g);
  });
}

Var masked_fill(const Var& x, const Tensor& mask, float fill) {
  check_same_shape(x.value(), mask, "masked_fill");
  Tensor out(x.shape());
  for (std::int64_t i = 0; i < out.size(); ++i)
    out[i] = mask[i] > 0.5f ? x.value()[i] : fill;
  auto xn = x.node();
  return make_op(std::move(out), {x}, [xn, mask](Node& self) {
    Tensor g(self.grad.shape());
    for (std::int64_t i = 0; i < g.size(); ++i)
      g[i] = mask[i] > 0.5f ? self.grad[i] : 0.0f;
    xn->accumulate(g);
  });
}

MinStack min_stack(const std::vector<Var>& maps) {
  if (maps.empty()) throw std::invalid_argument("min_stack: empty input");
  for (const Var& m : maps) check_same_shape(maps[0].value(), m.value(), "min_stack");
  const std::int64_t n = maps[0].value().size();
  Tensor values(maps[0].shape());
  Tensor argmin(maps[0].shape());
  for (std::int64_t i = 0; i < n; ++i) {
    float best = maps[0].value()[i];
    int best_k = 0;
    for (int k = 1; k < static_cast<int>(maps.size()); ++k) {
      const float v = maps[k].value()[i];
      if (v < best) {
        best = v;
        best_k = k;
      }
    }
    values[i] = best;
    argmin[i] = static_cast<float>(best_k);
  }
  std::vector<std::shared_ptr<Node>> nodes;
  for (const Var& m : maps) nodes.push_back(m.node());
  MinStack result;
  result.argmin = argmin;
  result.values = make_op(std::move(values), maps, [nodes, argmin](Node& self) {
    for (int k = 0; k < static_cast<int>(nodes.size()); ++k) {
      if (!nodes[k]->requires_grad) continue;
      Tensor g(self.grad.shape());
      for (std::int64_t i = 0; i < g.size(); ++i)
        g[i] = argmin[i] == static_cast<float>(k) ? self.grad[i] : 0.0f;
      nodes[k]->accumulate(g);
    }
  });
  return result;
}

Var stop_gradient(const Var& x) { return Var::constant(x.value()); }

}  // namespace uqd::ops
