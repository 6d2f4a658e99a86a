#pragma once

#include <string>
#include <vector>

#include "uqdepth/tensor.hpp"

namespace uqd::eval {

struct DepthMetrics {
  double abs_rel = 0, sq_rel = 0, rmse = 0, rmse_log = 0;
  double delta1 = 0, delta2 = 0, delta3 = 0;
};

// Standard seven-metric evaluation over valid pixels; predictions are clamped
// to [floor_m, cap_m] first. gt must be positive wherever valid is set.
DepthMetrics depth_metrics(const Tensor& pred, const Tensor& gt,
                           const Tensor& valid, double cap_m = 80.0,
                           double floor_m = 1e-3);

// pred * median(gt over valid) / median(pred over valid). Applied per image
// under monocular supervision, where the training scale is arbitrary.
Tensor median_scale(const Tensor& pred, const Tensor& gt, const Tensor& valid);

enum class SparsMetric { abs_rel, rmse, delta_outlier };
std::string spars_metric_name(SparsMetric metric);
std::vector<SparsMetric> all_spars_metrics();

// Per-pixel error feeding sparsification: |p-g|/g, (p-g)^2, or the outlier
// indicator max(p/g,g/p) >= 1.25. The curve aggregator is mean, sqrt(mean)
// and mean respectively, so the f=0 point equals the full-image metric.
Tensor per_pixel_error(const Tensor& pred, const Tensor& gt, SparsMetric metric,
                       double cap_m = 80.0, double floor_m = 1e-3);

struct SparsificationResult {
  std::vector<double> fractions;  // 0, 0.02, ..., 0.98
  std::vector<double> estimated_curve;
  std::vector<double> oracle_curve;
  std::vector<double> random_curve;
  double ause = 0;  // integral of (estimated - oracle), trapezoidal
  double aurg = 0;  // integral of (random - estimated), trapezoidal
};

// Removes the top round(f*n) pixels (at least one pixel always remains) in
// order of descending uncertainty (estimated) or descending error (oracle);
// ties break on pixel index via stable sort. The random curve is the constant
// full-set metric.
SparsificationResult sparsification(const Tensor& per_pixel_errors,
                                    const Tensor& uncertainty,
                                    const Tensor& valid, SparsMetric metric);

// Unweighted means across images of curves and areas.
SparsificationResult aggregate_sparsification(
    const std::vector<SparsificationResult>& per_image);
DepthMetrics aggregate_metrics(const std::vector<DepthMetrics>& per_image);

}  // namespace uqd::eval
