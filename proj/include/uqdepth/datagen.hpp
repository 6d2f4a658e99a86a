#pragma once

#include <cstdint>
#include <filesystem>

#include "uqdepth/geometry.hpp"

namespace uqd::datagen {

// Procedural scenes: textured slanted planes rendered analytically, so the
// stereo and temporal views are exact re-projections of the same 3-D scene
// and ground-truth depth is exact.
struct SceneSpec {
  std::uint64_t seed = 0;
  int num_primitives = 5;
  double near = 2.0, far = 20.0;  // meters
  int texture_octaves = 3;
  double baseline = 0.2;  // stereo baseline, meters
  geometry::Vec3 ego_translation{0, 0, 0.1};  // camera step per temporal frame
  double ego_rotation_jitter = 0.01;          // radians, sampled per scene
  int width = 64, height = 64;
  double focal = 64.0;  // pixels

  void validate() const;
  geometry::Intrinsics intrinsics() const;
};

struct Sample {
  geometry::ImageFrame left_t, right_t, left_prev, left_next;
  geometry::DepthMap gt_depth;  // for the left_t view
  Tensor occlusion_free;        // {h,w}: 1 where the pixel is visible in right_t
  // target(left_t) -> source transforms
  geometry::Pose pose_right, pose_prev, pose_next;
};

// Deterministic in (spec.seed, index).
Sample render_sample(const SceneSpec& spec, int index);

// Renders `count` samples under out_dir with an 80/20 train/test split by
// index and writes manifest.json with per-file content hashes.
std::filesystem::path write_dataset(const SceneSpec& spec, int count,
                                    const std::filesystem::path& out_dir);

}  // namespace uqd::datagen
