#pragma once

#include <vector>

#include "uqdepth/autodiff.hpp"
#include "uqdepth/rng.hpp"

namespace uqd::ops {

// Elementwise.
Var neg(const Var& x);
Var abs(const Var& x);
Var exp(const Var& x);
Var log(const Var& x);
Var square(const Var& x);
Var reciprocal(const Var& x);
Var sigmoid(const Var& x);
Var relu(const Var& x);
Var elu(const Var& x);
Var affine(const Var& x, float scale, float shift);  // scale*x + shift
Var clamp(const Var& x, float lo, float hi);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);

// Multiplies every element of x by the single-element tensor s.
Var broadcast_mul(const Var& x, const Var& s);

// Reductions (all return a {1} tensor; sums accumulate in double).
Var sum(const Var& x);
Var mean(const Var& x);
// Mean over elements where mask > 0.5; throws std::domain_error when empty.
Var masked_mean(const Var& x, const Tensor& mask);

Var mean_channels(const Var& x);  // {c,h,w} -> {h,w}
Var mean_hw(const Var& x);        // {c,h,w} -> {c,1,1}

// Shape and sampling.
Var reshape(const Var& x, std::vector<int> shape);
Var concat_channels(const std::vector<Var>& xs);
Var flip_horizontal(const Var& x);  // reverses the innermost dimension
Var diff_x(const Var& x);           // forward difference along x
Var diff_y(const Var& x);           // forward difference along y
Var upsample_nearest2x(const Var& x);
Var resize_bilinear(const Var& x, int out_h, int out_w);
Var avg_pool3x3(const Var& x);

// Network building blocks.
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
Var dropout(const Var& x, float p, Rng& rng);

// Keeps x where mask > 0.5, `fill` elsewhere; gradients only pass where kept.
Var masked_fill(const Var& x, const Tensor& mask, float fill);

struct MinStack {
  Var values;
  Tensor argmin;  // index of the winning map per element (ties: lowest)
};
// Elementwise minimum over K same-shaped maps; gradient flows to the winner.
MinStack min_stack(const std::vector<Var>& maps);

Var stop_gradient(const Var& x);

}  // namespace uqd::ops
