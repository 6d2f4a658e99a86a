#pragma once

#include <vector>

#include "uqdepth/autodiff.hpp"
#include "uqdepth/geometry.hpp"

namespace uqd::photometric {

struct LossConfig {
  float alpha = 0.85f;            // SSIM share of the photometric mix
  float smoothness_weight = 1e-3f;
  int ssim_window = 3;

  void validate() const;
};

// Per-pixel SSIM over local box windows, averaged across channels.
// Accepts {c,h,w} or {h,w}; result is {h,w} in [-1,1]. Symmetric in (a,b).
Var ssim(const Var& a, const Var& b, int window = 3);
Tensor ssim(const Tensor& a, const Tensor& b, int window = 3);

// alpha*(1-SSIM)/2 + (1-alpha)*mean_c|a-b|, zero iff the images agree.
Var photometric_error(const Var& warped, const Var& target, const LossConfig& cfg);
Tensor photometric_error(const Tensor& warped, const Tensor& target,
                         const LossConfig& cfg);

struct MinReprojection {
  Var combined;
  Tensor argmin;
};
// Per-pixel minimum over K >= 1 error maps and which source attained it.
MinReprojection min_reprojection(const std::vector<Var>& errors);

// Edge-aware first-order regularizer on a mean-normalized map:
// weight * [ mean(|dx(m/mean m)| * exp(-mean_c|dx I|)) + same in y ].
// Degenerate extents (height or width 1) contribute zero for that axis.
Var smoothness(const Var& map, const Var& image, float weight);

}  // namespace uqd::photometric
