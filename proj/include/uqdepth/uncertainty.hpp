#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "uqdepth/autodiff.hpp"
#include "uqdepth/geometry.hpp"
#include "uqdepth/models.hpp"

namespace uqd::uncertainty {

struct UncertaintyMap {
  Tensor values;  // {h,w}, non-negative finite scores; higher = less trusted

  void validate() const;
};

// N paired (mean, variance) predictions from sampled models. Variances are
// either present on every entry or on none.
struct PredictionSet {
  struct Entry {
    geometry::DepthMap mean;
    std::optional<UncertaintyMap> variance;
  };
  std::vector<Entry> entries;

  void validate() const;
  int size() const { return static_cast<int>(entries.size()); }
};

// Cyclic cosine schedule producing C pre-converged snapshots in one training.
struct SnapshotSchedule {
  double lambda0 = 1e-4;     // initial learning rate
  std::int64_t total_steps = 0;  // T
  int cycles = 20;           // C

  void validate() const;
  std::int64_t cycle_length() const;  // ceil(T / C)
};

// lambda_t = lambda0/2 * (cos(pi * mod(t-1, ceil(T/C)) / ceil(T/C)) + 1),
// t in [1, T]. Restarts at lambda0 on the first step of every cycle.
double snapshot_lr(const SnapshotSchedule& schedule, std::int64_t t);

enum class StrategyKind {
  post,
  drop,
  boot,
  snap,
  repr,
  log,
  self,
  boot_log,
  boot_self,
  snap_log,
  snap_self,
};

StrategyKind strategy_from_string(const std::string& name);
std::string strategy_to_string(StrategyKind kind);
std::vector<StrategyKind> all_strategies();

struct StrategyConfig {
  StrategyKind kind = StrategyKind::log;
  int ensemble_size = 8;           // N
  float beta = 0.1f;               // weight of the learned-reprojection term
  float bootstrap_fraction = 0.25f;

  void validate() const;
  bool needs_uncertainty_head() const;
  bool is_bayesian() const;
  bool uses_bootstrap() const;   // trains N nets on random subsets
  bool uses_snapshots() const;   // cyclic schedule, C checkpoints
  bool uses_dropout() const;
  bool uses_self_teaching() const;
  bool uses_ensemble_inference() const;  // N forwards at test time
};

struct DepthAndUncertainty {
  geometry::DepthMap depth;
  UncertaintyMap uncertainty;
};

// Flip refinement: depth is the mean of d and the back-flipped prediction on
// the mirrored image; uncertainty their absolute difference. 2 forwards.
DepthAndUncertainty post_uncertainty(models::DepthNet& net,
                                     const geometry::ImageFrame& image,
                                     float d_min, float d_max);

struct Moments {
  geometry::DepthMap mean;
  UncertaintyMap variance;
};

// Per-pixel mean and population variance (divisor N) of N >= 2 plain
// predictions; rejects sets that carry per-entry variances.
Moments empirical_moments(const PredictionSet& set);

// mean = 1/N sum mu_i; variance = 1/N sum[(mu_i - mean)^2 + var_i].
// Requires per-entry variances and N >= 2.
Moments bayesian_aggregate(const PredictionSet& set);

// beta * mean|u - target| where the target (a per-pixel min-reprojection map)
// is detached; no gradient reaches whatever produced it. An optional 0/1 mask
// restricts the mean to valid pixels.
Var repr_loss(const Var& u, const Var& per_pixel_min_reprojection, float beta,
              const Tensor& mask = Tensor());

// mean(residual * exp(-u) + u) with u the predicted log-variance. For a fixed
// residual r the minimizer is u = log r.
Var log_likelihood_loss(const Var& residual, const Var& log_variance,
                        const Tensor& mask = Tensor());

// Runs the teacher once per image and persists its full-resolution depth as a
// proxy target, keyed by image id; the manifest records the teacher hash.
// Returns the manifest path. Deterministic: same teacher, same bytes.
std::filesystem::path self_teaching_targets(
    models::DepthNet& teacher,
    const std::vector<std::pair<std::string, geometry::ImageFrame>>& images,
    const std::filesystem::path& out_dir, float d_min, float d_max);

}  // namespace uqd::uncertainty
