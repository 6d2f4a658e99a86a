#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "uqdepth/dataset.hpp"
#include "uqdepth/models.hpp"
#include "uqdepth/photometric.hpp"
#include "uqdepth/uncertainty.hpp"

namespace uqd::trainer {

enum class Supervision { M, S, MS };
Supervision supervision_from_string(const std::string& s);
std::string supervision_to_string(Supervision s);

struct TrainConfig {
  Supervision supervision = Supervision::S;
  uncertainty::StrategyConfig strategy;
  int epochs = 10;
  int batch_size = 4;
  float lr = 1e-4f;
  std::uint64_t seed = 0;
  // Cyclic schedule for snapshot kinds. total_steps == 0 means "derive from
  // epochs", lambda0 <= 0 means "use lr".
  std::optional<uncertainty::SnapshotSchedule> schedule;
  models::DepthNetConfig net;
  photometric::LossConfig loss;
  float d_min = 0.1f, d_max = 100.0f;

  void validate() const;
};

struct ExperimentManifest {
  TrainConfig config;
  // Trained depth checkpoints: one for single-model strategies, N members for
  // boot kinds, all C snapshots (in emission order) for snap kinds.
  std::vector<std::filesystem::path> checkpoint_refs;
  std::vector<std::filesystem::path> pose_checkpoint_refs;  // M/MS only
  std::filesystem::path teacher_ref;  // teacher manifest, self kinds only
  std::filesystem::path proxy_dir;    // proxy depth store, self kinds only
  std::string dataset_hash;
  std::filesystem::path metrics_path;  // per-step training log (csv)
  std::filesystem::path root;

  void save() const;  // writes <root>/experiment.json
  static ExperimentManifest load(const std::filesystem::path& experiment_dir);
};

// Self-supervised training under the configured supervision mode and
// strategy. Self-teaching kinds train their own teacher first and then
// delegate to train_self_teaching. Deterministic given config.seed.
ExperimentManifest train(const TrainConfig& config, const data::Dataset& dataset,
                         const std::filesystem::path& out_dir);

// Stage two of the teaching pipeline: persists the teacher's depth maps as
// proxy targets, then trains student(s) purely on the likelihood of
// |mu(d_S) - d_T| under the predicted log-variance (no photometric term).
ExperimentManifest train_self_teaching(const ExperimentManifest& teacher,
                                       const TrainConfig& config,
                                       const data::Dataset& dataset,
                                       const std::filesystem::path& out_dir);

std::string train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const std::string& text);

struct InferResult {
  geometry::DepthMap depth;
  uncertainty::UncertaintyMap uncertainty;
  int depth_forwards = 0;  // network passes spent on this image
};

// Strategy-dispatched inference; forward counts follow the strategy (post: 2,
// predictive heads: 1, ensembles and dropout: N). `sample_seed` drives
// dropout sampling for the drop strategy.
InferResult infer(const ExperimentManifest& manifest,
                  const geometry::ImageFrame& image,
                  std::uint64_t sample_seed = 0);

// Loss of the supervised views for an externally supplied sigmoid disparity
// map (photometric + smoothness only). Used by oracle checks: feeding the
// exact ground-truth disparity must land near the resampling noise floor.
double photometric_loss_for_disparity(const TrainConfig& config,
                                      const data::DatasetSample& sample,
                                      const Tensor& sigmoid_disparity);

// Training-set subset used by bootstrap member `member_index`; reproducible
// from (seed, member_index) alone.
std::vector<int> bootstrap_subset(const std::vector<int>& train_indices,
                                  float fraction, std::uint64_t seed,
                                  int member_index);

}  // namespace uqd::trainer
