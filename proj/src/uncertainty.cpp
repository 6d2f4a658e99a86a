#include "uqdepth/uncertainty.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "uqdepth/float_map.hpp"
#include "uqdepth/hash.hpp"
#include "uqdepth/ops.hpp"

namespace uqd::uncertainty {

using namespace uqd::ops;

void UncertaintyMap::validate() const {
  if (values.ndim() != 2)
    throw std::invalid_argument("uncertainty map: values must be {h,w}");
  for (std::int64_t i = 0; i < values.size(); ++i)
    if (!(values[i] >= 0.0f) || !std::isfinite(values[i]))
      throw std::invalid_argument("uncertainty map: negative or non-finite value");
}

void PredictionSet::validate() const {
  if (entries.empty()) throw std::invalid_argument("prediction set: empty");
  const bool with_var = entries.front().variance.has_value();
  for (const Entry& e : entries) {
    check_same_shape(entries.front().mean.values, e.mean.values, "prediction set");
    if (e.variance.has_value() != with_var)
      throw std::invalid_argument("prediction set: variances must be all present or all absent");
    if (e.variance) check_same_shape(e.mean.values, e.variance->values, "prediction set");
  }
}

void SnapshotSchedule::validate() const {
  if (!(lambda0 > 0.0)) throw std::invalid_argument("snapshot schedule: lambda0 must be > 0");
  if (cycles < 1 || static_cast<std::int64_t>(cycles) > total_steps)
    throw std::invalid_argument("snapshot schedule: need 1 <= C <= T");
}

std::int64_t SnapshotSchedule::cycle_length() const {
  return (total_steps + cycles - 1) / cycles;
}

double snapshot_lr(const SnapshotSchedule& schedule, std::int64_t t) {
  schedule.validate();
  if (t < 1 || t > schedule.total_steps)
    throw std::out_of_range("snapshot_lr: step outside [1, T]");
  const std::int64_t len = schedule.cycle_length();
  const std::int64_t phase = (t - 1) % len;
  return schedule.lambda0 / 2.0 *
         (std::cos(M_PI * static_cast<double>(phase) / static_cast<double>(len)) + 1.0);
}

StrategyKind strategy_from_string(const std::string& name) {
  for (StrategyKind k : all_strategies())
    if (strategy_to_string(k) == name) return k;
  throw std::invalid_argument("unknown strategy: " + name);
}

std::string strategy_to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::post: return "post";
    case StrategyKind::drop: return "drop";
    case StrategyKind::boot: return "boot";
    case StrategyKind::snap: return "snap";
    case StrategyKind::repr: return "repr";
    case StrategyKind::log: return "log";
    case StrategyKind::self: return "self";
    case StrategyKind::boot_log: return "boot+log";
    case StrategyKind::boot_self: return "boot+self";
    case StrategyKind::snap_log: return "snap+log";
    case StrategyKind::snap_self: return "snap+self";
  }
  throw std::logic_error("unreachable strategy kind");
}

std::vector<StrategyKind> all_strategies() {
  return {StrategyKind::post,      StrategyKind::drop,     StrategyKind::boot,
          StrategyKind::snap,      StrategyKind::repr,     StrategyKind::log,
          StrategyKind::self,      StrategyKind::boot_log, StrategyKind::boot_self,
          StrategyKind::snap_log,  StrategyKind::snap_self};
}

void StrategyConfig::validate() const {
  if (uses_ensemble_inference() && ensemble_size < 2)
    throw std::invalid_argument("strategy: ensemble kinds need N >= 2");
  if (!(beta > 0.0f)) throw std::invalid_argument("strategy: beta must be > 0");
  if (!(bootstrap_fraction > 0.0f && bootstrap_fraction <= 1.0f))
    throw std::invalid_argument("strategy: bootstrap fraction outside (0,1]");
}

bool StrategyConfig::needs_uncertainty_head() const {
  switch (kind) {
    case StrategyKind::repr:
    case StrategyKind::log:
    case StrategyKind::self:
    case StrategyKind::boot_log:
    case StrategyKind::boot_self:
    case StrategyKind::snap_log:
    case StrategyKind::snap_self:
      return true;
    default:
      return false;
  }
}

bool StrategyConfig::is_bayesian() const {
  return kind == StrategyKind::boot_log || kind == StrategyKind::boot_self ||
         kind == StrategyKind::snap_log || kind == StrategyKind::snap_self;
}

bool StrategyConfig::uses_bootstrap() const {
  return kind == StrategyKind::boot || kind == StrategyKind::boot_log ||
         kind == StrategyKind::boot_self;
}

bool StrategyConfig::uses_snapshots() const {
  return kind == StrategyKind::snap || kind == StrategyKind::snap_log ||
         kind == StrategyKind::snap_self;
}

bool StrategyConfig::uses_dropout() const { return kind == StrategyKind::drop; }

bool StrategyConfig::uses_self_teaching() const {
  return kind == StrategyKind::self || kind == StrategyKind::boot_self ||
         kind == StrategyKind::snap_self;
}

bool StrategyConfig::uses_ensemble_inference() const {
  return uses_bootstrap() || uses_snapshots() || uses_dropout();
}

DepthAndUncertainty post_uncertainty(models::DepthNet& net,
                                     const geometry::ImageFrame& image,
                                     float d_min, float d_max) {
  const Var input = Var::constant(image.pixels);
  const Var flipped = flip_horizontal(input);
  const Var disp = net.forward(input).disparity[0];
  const Var disp_flipped = net.forward(flipped).disparity[0];
  const Var disp_back = flip_horizontal(disp_flipped);

  const geometry::DepthMap d = geometry::disparity_to_depth(disp.value(), d_min, d_max);
  const geometry::DepthMap d_back =
      geometry::disparity_to_depth(disp_back.value(), d_min, d_max);

  DepthAndUncertainty out;
  out.depth.d_min = d_min;
  out.depth.d_max = d_max;
  out.depth.values = Tensor(d.values.shape());
  out.uncertainty.values = Tensor(d.values.shape());
  for (std::int64_t i = 0; i < d.values.size(); ++i) {
    out.depth.values[i] = 0.5f * (d.values[i] + d_back.values[i]);
    out.uncertainty.values[i] = std::fabs(d.values[i] - d_back.values[i]);
  }
  return out;
}

Moments empirical_moments(const PredictionSet& set) {
  set.validate();
  if (set.size() < 2) throw std::invalid_argument("empirical_moments: N >= 2 required");
  if (set.entries.front().variance)
    throw std::invalid_argument("empirical_moments: set carries predictive variances");
  const int n = set.size();
  const Tensor& first = set.entries.front().mean.values;
  Moments m;
  m.mean.d_min = set.entries.front().mean.d_min;
  m.mean.d_max = set.entries.front().mean.d_max;
  m.mean.values = Tensor(first.shape());
  m.variance.values = Tensor(first.shape());
  for (std::int64_t i = 0; i < first.size(); ++i) {
    double mu = 0.0;
    for (const auto& e : set.entries) mu += e.mean.values[i];
    mu /= n;
    double var = 0.0;
    for (const auto& e : set.entries) {
      const double diff = e.mean.values[i] - mu;
      var += diff * diff;
    }
    var /= n;
    m.mean.values[i] = static_cast<float>(mu);
    m.variance.values[i] = static_cast<float>(var);
  }
  return m;
}

Moments bayesian_aggregate(const PredictionSet& set) {
  set.validate();
  if (set.size() < 2) throw std::invalid_argument("bayesian_aggregate: N >= 2 required");
  if (!set.entries.front().variance)
    throw std::invalid_argument("bayesian_aggregate: per-entry variances required");
  const int n = set.size();
  const Tensor& first = set.entries.front().mean.values;
  Moments m;
  m.mean.d_min = set.entries.front().mean.d_min;
  m.mean.d_max = set.entries.front().mean.d_max;
  m.mean.values = Tensor(first.shape());
  m.variance.values = Tensor(first.shape());
  for (std::int64_t i = 0; i < first.size(); ++i) {
    double mu = 0.0;
    for (const auto& e : set.entries) mu += e.mean.values[i];
    mu /= n;
    double var = 0.0;
    for (const auto& e : set.entries) {
      const double diff = e.mean.values[i] - mu;
      var += diff * diff + e.variance->values[i];
    }
    var /= n;
    m.mean.values[i] = static_cast<float>(mu);
    m.variance.values[i] = static_cast<float>(var);
  }
  return m;
}

Var repr_loss(const Var& u, const Var& per_pixel_min_reprojection, float beta,
              const Tensor& mask) {
  check_same_shape(u.value(), per_pixel_min_reprojection.value(), "repr_loss");
  const Var target = stop_gradient(per_pixel_min_reprojection);
  const Var residual = abs(sub(u, target));
  const Var m = mask.empty() ? mean(residual) : masked_mean(residual, mask);
  return affine(m, beta, 0.0f);
}

Var log_likelihood_loss(const Var& residual, const Var& log_variance,
                        const Tensor& mask) {
  check_same_shape(residual.value(), log_variance.value(), "log_likelihood_loss");
  for (std::int64_t i = 0; i < residual.value().size(); ++i)
    if (!std::isfinite(residual.value()[i]) || !std::isfinite(log_variance.value()[i]))
      throw std::invalid_argument("log_likelihood_loss: non-finite input");
  const Var per_pixel = add(mul(residual, exp(neg(log_variance))), log_variance);
  return mask.empty() ? mean(per_pixel) : masked_mean(per_pixel, mask);
}

std::filesystem::path self_teaching_targets(
    models::DepthNet& teacher,
    const std::vector<std::pair<std::string, geometry::ImageFrame>>& images,
    const std::filesystem::path& out_dir, float d_min, float d_max) {
  if (images.empty())
    throw std::invalid_argument("self_teaching_targets: no images");
  std::filesystem::create_directories(out_dir);
  const std::vector<char> blob = models::serialize_checkpoint(teacher.checkpoint());
  const std::string teacher_hash = io::sha256_hex(blob.data(), blob.size());

  nlohmann::json manifest;
  manifest["teacher_sha256"] = teacher_hash;
  auto files = nlohmann::json::array();
  for (const auto& [id, frame] : images) {
    const Var disp = teacher.forward(Var::constant(frame.pixels)).disparity[0];
    const geometry::DepthMap depth =
        geometry::disparity_to_depth(disp.value(), d_min, d_max);
    const std::filesystem::path file = out_dir / (id + ".uqdm");
    io::write_map(file, depth.values);
    files.push_back({{"id", id},
                     {"file", file.filename().string()},
                     {"sha256", io::sha256_file(file)}});
  }
  manifest["targets"] = files;
  manifest["d_min"] = d_min;
  manifest["d_max"] = d_max;
  const std::filesystem::path manifest_path = out_dir / "proxy_manifest.json";
  std::ofstream f(manifest_path);
  f << manifest.dump(2) << "\n";
  return manifest_path;
}

}  // namespace uqd::uncertainty
