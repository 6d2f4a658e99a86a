#include "uqdepth/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace uqd::eval {

namespace {

double clamp_pred(double p, double floor_m, double cap_m) {
  return std::min(std::max(p, floor_m), cap_m);
}

std::vector<int> valid_indices(const Tensor& valid) {
  std::vector<int> idx;
  for (std::int64_t i = 0; i < valid.size(); ++i)
    if (valid[i] > 0.5f) idx.push_back(static_cast<int>(i));
  return idx;
}

double median_of(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of empty set");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

DepthMetrics depth_metrics(const Tensor& pred, const Tensor& gt,
                           const Tensor& valid, double cap_m, double floor_m) {
  check_same_shape(pred, gt, "depth_metrics");
  check_same_shape(pred, valid, "depth_metrics");
  const std::vector<int> idx = valid_indices(valid);
  if (idx.empty()) throw std::invalid_argument("depth_metrics: empty valid mask");

  double abs_rel = 0, sq_rel = 0, sq = 0, sq_log = 0;
  std::int64_t in1 = 0, in2 = 0, in3 = 0;
  for (int i : idx) {
    const double g = gt[i];
    if (!(g > 0.0)) throw std::invalid_argument("depth_metrics: non-positive gt on valid pixel");
    const double p = clamp_pred(pred[i], floor_m, cap_m);
    const double diff = p - g;
    abs_rel += std::fabs(diff) / g;
    sq_rel += diff * diff / g;
    sq += diff * diff;
    const double dl = std::log(p) - std::log(g);
    sq_log += dl * dl;
    const double ratio = std::max(p / g, g / p);
    if (ratio < 1.25) ++in1;
    if (ratio < 1.25 * 1.25) ++in2;
    if (ratio < 1.25 * 1.25 * 1.25) ++in3;
  }
  const double n = static_cast<double>(idx.size());
  DepthMetrics m;
  m.abs_rel = abs_rel / n;
  m.sq_rel = sq_rel / n;
  m.rmse = std::sqrt(sq / n);
  m.rmse_log = std::sqrt(sq_log / n);
  m.delta1 = in1 / n;
  m.delta2 = in2 / n;
  m.delta3 = in3 / n;
  return m;
}

Tensor median_scale(const Tensor& pred, const Tensor& gt, const Tensor& valid) {
  check_same_shape(pred, gt, "median_scale");
  check_same_shape(pred, valid, "median_scale");
  const std::vector<int> idx = valid_indices(valid);
  if (idx.empty()) throw std::invalid_argument("median_scale: empty valid mask");
  std::vector<double> pv, gv;
  pv.reserve(idx.size());
  gv.reserve(idx.size());
  for (int i : idx) {
    pv.push_back(pred[i]);
    gv.push_back(gt[i]);
  }
  const double mp = median_of(pv);
  const double mg = median_of(gv);
  if (mp == 0.0 || mg <= 0.0)
    throw std::invalid_argument("median_scale: zero or non-positive median");
  const double s = mg / mp;
  Tensor out(pred.shape());
  for (std::int64_t i = 0; i < pred.size(); ++i)
    out[i] = static_cast<float>(pred[i] * s);
  return out;
}

std::string spars_metric_name(SparsMetric metric) {
  switch (metric) {
    case SparsMetric::abs_rel: return "abs_rel";
    case SparsMetric::rmse: return "rmse";
    case SparsMetric::delta_outlier: return "delta_outlier";
  }
  throw std::logic_error("unreachable metric");
}

std::vector<SparsMetric> all_spars_metrics() {
  return {SparsMetric::abs_rel, SparsMetric::rmse, SparsMetric::delta_outlier};
}

Tensor per_pixel_error(const Tensor& pred, const Tensor& gt, SparsMetric metric,
                       double cap_m, double floor_m) {
  check_same_shape(pred, gt, "per_pixel_error");
  Tensor out(pred.shape());
  for (std::int64_t i = 0; i < pred.size(); ++i) {
    const double g = gt[i];
    const double p = clamp_pred(pred[i], floor_m, cap_m);
    double e = 0.0;
    if (g > 0.0) {
      switch (metric) {
        case SparsMetric::abs_rel: e = std::fabs(p - g) / g; break;
        case SparsMetric::rmse: e = (p - g) * (p - g); break;
        case SparsMetric::delta_outlier:
          e = std::max(p / g, g / p) >= 1.25 ? 1.0 : 0.0;
          break;
      }
    }
    out[i] = static_cast<float>(e);
  }
  return out;
}

namespace {

double aggregate_tail(const std::vector<double>& suffix_sum, std::size_t from,
                      std::size_t n, SparsMetric metric) {
  const double count = static_cast<double>(n - from);
  const double mean = suffix_sum[from] / count;
  return metric == SparsMetric::rmse ? std::sqrt(mean) : mean;
}

double trapezoid(const std::vector<double>& y, double step) {
  double area = 0.0;
  for (std::size_t i = 0; i + 1 < y.size(); ++i) area += 0.5 * (y[i] + y[i + 1]) * step;
  return area;
}

}  // namespace

SparsificationResult sparsification(const Tensor& per_pixel_errors,
                                    const Tensor& uncertainty,
                                    const Tensor& valid, SparsMetric metric) {
  check_same_shape(per_pixel_errors, uncertainty, "sparsification");
  check_same_shape(per_pixel_errors, valid, "sparsification");
  const std::vector<int> idx = valid_indices(valid);
  if (idx.empty()) throw std::invalid_argument("sparsification: empty valid mask");
  const std::size_t n = idx.size();

  std::vector<int> by_unc(idx), by_err(idx);
  std::stable_sort(by_unc.begin(), by_unc.end(), [&](int a, int b) {
    return uncertainty[a] > uncertainty[b];
  });
  std::stable_sort(by_err.begin(), by_err.end(), [&](int a, int b) {
    return per_pixel_errors[a] > per_pixel_errors[b];
  });

  auto suffix_sums = [&](const std::vector<int>& order) {
    std::vector<double> s(n + 1, 0.0);
    for (std::size_t i = n; i-- > 0;)
      s[i] = s[i + 1] + per_pixel_errors[order[i]];
    return s;
  };
  const std::vector<double> sum_unc = suffix_sums(by_unc);
  const std::vector<double> sum_err = suffix_sums(by_err);

  SparsificationResult r;
  const double full = aggregate_tail(sum_unc, 0, n, metric);
  for (int j = 0; j < 50; ++j) {
    const double f = 0.02 * j;
    std::size_t k = static_cast<std::size_t>(std::llround(f * static_cast<double>(n)));
    if (k >= n) k = n - 1;  // always evaluate on at least one pixel
    r.fractions.push_back(f);
    r.estimated_curve.push_back(aggregate_tail(sum_unc, k, n, metric));
    r.oracle_curve.push_back(aggregate_tail(sum_err, k, n, metric));
    r.random_curve.push_back(full);
  }
  std::vector<double> est_minus_oracle(50), random_minus_est(50);
  for (int j = 0; j < 50; ++j) {
    est_minus_oracle[j] = r.estimated_curve[j] - r.oracle_curve[j];
    random_minus_est[j] = r.random_curve[j] - r.estimated_curve[j];
  }
  r.ause = trapezoid(est_minus_oracle, 0.02);
  r.aurg = trapezoid(random_minus_est, 0.02);
  return r;
}

SparsificationResult aggregate_sparsification(
    const std::vector<SparsificationResult>& per_image) {
  if (per_image.empty())
    throw std::invalid_argument("aggregate_sparsification: empty set");
  SparsificationResult out;
  out.fractions = per_image.front().fractions;
  const std::size_t n = out.fractions.size();
  out.estimated_curve.assign(n, 0.0);
  out.oracle_curve.assign(n, 0.0);
  out.random_curve.assign(n, 0.0);
  for (const auto& r : per_image) {
    if (r.fractions.size() != n)
      throw std::invalid_argument("aggregate_sparsification: mismatched grids");
    for (std::size_t i = 0; i < n; ++i) {
      out.estimated_curve[i] += r.estimated_curve[i];
      out.oracle_curve[i] += r.oracle_curve[i];
      out.random_curve[i] += r.random_curve[i];
    }
    out.ause += r.ause;
    out.aurg += r.aurg;
  }
  const double m = static_cast<double>(per_image.size());
  for (std::size_t i = 0; i < n; ++i) {
    out.estimated_curve[i] /= m;
    out.oracle_curve[i] /= m;
    out.random_curve[i] /= m;
  }
  out.ause /= m;
  out.aurg /= m;
  return out;
}

DepthMetrics aggregate_metrics(const std::vector<DepthMetrics>& per_image) {
  if (per_image.empty()) throw std::invalid_argument("aggregate_metrics: empty set");
  DepthMetrics m;
  for (const auto& x : per_image) {
    m.abs_rel += x.abs_rel;
    m.sq_rel += x.sq_rel;
    m.rmse += x.rmse;
    m.rmse_log += x.rmse_log;
    m.delta1 += x.delta1;
    m.delta2 += x.delta2;
    m.delta3 += x.delta3;
  }
  const double n = static_cast<double>(per_image.size());
  m.abs_rel /= n;
  m.sq_rel /= n;
  m.rmse /= n;
  m.rmse_log /= n;
  m.delta1 /= n;
  m.delta2 /= n;
  m.delta3 /= n;
  return m;
}

}  // namespace uqd::eval
