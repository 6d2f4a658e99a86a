#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "uqdepth/autodiff.hpp"
#include "uqdepth/geometry.hpp"
#include "uqdepth/rng.hpp"

namespace uqd::models {

struct DepthNetConfig {
  std::vector<int> encoder_widths{16, 32, 64, 128};
  float dropout_p = 0.0f;
  bool predict_uncertainty = false;
  int scales = 4;

  void validate() const;
  int levels() const { return static_cast<int>(encoder_widths.size()); }
  bool operator==(const DepthNetConfig&) const = default;
};

struct PoseEstimate {
  geometry::Vec3 axis_angle;    // radians, |axis_angle| < pi after normalization
  geometry::Vec3 translation;   // scale-ambiguous units when learned

  PoseEstimate normalized() const;
  geometry::Pose to_pose() const;
};

// Ordered named parameters of one network. Order is creation order and is the
// serialization order, so checkpoints round-trip bit-exactly.
class ParamSet {
 public:
  Var create(const std::string& name, Tensor init);
  const Var& get(const std::string& name) const;
  const std::vector<std::pair<std::string, Var>>& entries() const { return entries_; }
  std::vector<Var> vars() const;
  void zero_grads();

 private:
  std::vector<std::pair<std::string, Var>> entries_;
};

struct ModelCheckpoint {
  std::string kind;  // "depth" or "pose"
  DepthNetConfig config;
  std::vector<int> pose_widths;
  std::int64_t training_step = 0;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, Tensor>> weights;
};

std::vector<char> serialize_checkpoint(const ModelCheckpoint& ck);
ModelCheckpoint deserialize_checkpoint(const std::vector<char>& bytes);
// Writes <path> (binary blob) and <path>.json (config, step, seed, blob hash).
void save_checkpoint(const ModelCheckpoint& ck, const std::filesystem::path& path);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);

// Skip-connected encoder-decoder emitting sigmoid disparity at `scales`
// resolutions (scale 0 = input resolution, scale s halves it s times), plus a
// parallel unconstrained channel per scale when predict_uncertainty is set.
class DepthNet {
 public:
  DepthNet(DepthNetConfig cfg, std::uint64_t seed);
  DepthNet(DepthNetConfig cfg, const std::vector<std::pair<std::string, Tensor>>& weights,
           std::int64_t step, std::uint64_t seed);

  struct Output {
    std::vector<Var> disparity;        // per scale, {h,w} in (0,1)
    std::vector<Var> log_uncertainty;  // per scale, {h,w}; empty if disabled
  };
  // sample_dropout=true draws a fresh dropout mask from `rng` (required when
  // dropout_p > 0); false runs the deterministic network.
  Output forward(const Var& image, bool sample_dropout = false, Rng* rng = nullptr);

  const DepthNetConfig& config() const { return cfg_; }
  ParamSet& params() { return params_; }
  std::int64_t forward_count() const { return forward_count_; }
  std::int64_t training_step = 0;
  std::uint64_t seed = 0;

  ModelCheckpoint checkpoint() const;

 private:
  void build(Rng* init_rng);
  DepthNetConfig cfg_;
  ParamSet params_;
  std::int64_t forward_count_ = 0;
};

// Relative pose regressor on a concatenated frame pair. The output layer is
// zero-initialized and scaled by 0.01, so an untrained network predicts the
// identity transform.
class PoseNet {
 public:
  explicit PoseNet(std::uint64_t seed, std::vector<int> widths = {16, 32, 64, 128});
  PoseNet(const std::vector<std::pair<std::string, Tensor>>& weights,
          std::vector<int> widths, std::int64_t step, std::uint64_t seed);

  struct Output {
    Var axis_angle;   // {3}
    Var translation;  // {3}
  };
  Output forward(const Var& frame_a, const Var& frame_b);
  PoseEstimate estimate(const geometry::ImageFrame& a, const geometry::ImageFrame& b);

  ParamSet& params() { return params_; }
  const std::vector<int>& widths() const { return widths_; }
  std::int64_t training_step = 0;
  std::uint64_t seed = 0;

  ModelCheckpoint checkpoint() const;

 private:
  void build(Rng* init_rng);
  std::vector<int> widths_;
  ParamSet params_;
};

class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<Var> params, float lr, float beta1 = 0.9f,
                float beta2 = 0.999f, float eps = 1e-8f);
  void set_lr(float lr) { lr_ = lr; }
  float lr() const { return lr_; }
  void step();
  void zero_grads();

 private:
  std::vector<Var> params_;
  std::vector<Tensor> m_, v_;
  float lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
};

}  // namespace uqd::models
