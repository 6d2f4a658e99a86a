#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "uqdepth/geometry.hpp"

namespace uqd::data {

struct DatasetSample {
  std::string id;
  geometry::ImageFrame left_t, right_t, left_prev, left_next;
  geometry::DepthMap gt_depth;
  Tensor occlusion_free;
  geometry::Pose pose_right, pose_prev, pose_next;  // target -> source
};

// In-memory view of a generated dataset directory (see datagen::write_dataset).
struct Dataset {
  std::filesystem::path root;
  geometry::Intrinsics intrinsics;
  double near = 0, far = 0;
  std::vector<DatasetSample> samples;
  std::vector<int> train_indices, test_indices;
  std::string dataset_sha256;

  static Dataset load(const std::filesystem::path& dir);
  const DatasetSample& sample(int idx) const { return samples.at(static_cast<std::size_t>(idx)); }
};

}  // namespace uqd::data
