#include "uqdepth/dataset.hpp"

#include <fstream>
#include <map>
#include <stdexcept>

#include <json.hpp>

#include "uqdepth/float_map.hpp"
#include "uqdepth/ppm.hpp"

namespace uqd::data {

namespace {

geometry::Pose pose_from_json(const nlohmann::json& j) {
  geometry::Pose p;
  const auto rot = j.at("rotation");
  for (int i = 0; i < 9; ++i) p.rotation.m[static_cast<std::size_t>(i)] = rot.at(i);
  const auto tr = j.at("translation");
  p.translation = {tr.at(0), tr.at(1), tr.at(2)};
  return p;
}

}  // namespace

Dataset Dataset::load(const std::filesystem::path& dir) {
  const std::filesystem::path manifest_path = dir / "manifest.json";
  std::ifstream f(manifest_path);
  if (!f) throw std::runtime_error("cannot open dataset manifest: " + manifest_path.string());
  nlohmann::json manifest;
  f >> manifest;

  Dataset ds;
  ds.root = dir;
  const auto& spec = manifest.at("spec");
  ds.near = manifest.at("depth_range").at(0);
  ds.far = manifest.at("depth_range").at(1);
  ds.intrinsics.width = spec.at("width");
  ds.intrinsics.height = spec.at("height");
  const double focal = spec.at("focal");
  ds.intrinsics.fx = ds.intrinsics.fy = static_cast<float>(focal);
  ds.intrinsics.cx = static_cast<float>((ds.intrinsics.width - 1) / 2.0);
  ds.intrinsics.cy = static_cast<float>((ds.intrinsics.height - 1) / 2.0);
  ds.dataset_sha256 = manifest.at("dataset_sha256");

  std::map<std::string, int> index_of;
  for (const auto& entry : manifest.at("samples")) {
    DatasetSample s;
    s.id = entry.at("id");
    const auto& files = entry.at("files");
    const auto path_of = [&](const char* key) {
      return dir / std::string(files.at(key).at("path"));
    };
    const auto frame_of = [&](const char* key) {
      geometry::ImageFrame fr;
      fr.pixels = io::read_ppm(path_of(key));
      fr.intrinsics = ds.intrinsics;
      return fr;
    };
    s.left_t = frame_of("left_t");
    s.right_t = frame_of("right_t");
    s.left_prev = frame_of("left_prev");
    s.left_next = frame_of("left_next");
    s.gt_depth.values = io::read_map(path_of("gt_depth"));
    s.gt_depth.d_min = static_cast<float>(ds.near * 0.5);
    s.gt_depth.d_max = static_cast<float>(ds.far * 1.1);
    s.occlusion_free = io::read_map(path_of("occlusion_free"));
    const auto& poses = entry.at("poses");
    s.pose_right = pose_from_json(poses.at("right"));
    s.pose_prev = pose_from_json(poses.at("prev"));
    s.pose_next = pose_from_json(poses.at("next"));
    s.left_t.pose = geometry::Pose::identity();
    s.right_t.pose = s.pose_right;
    s.left_prev.pose = s.pose_prev;
    s.left_next.pose = s.pose_next;
    index_of[s.id] = static_cast<int>(ds.samples.size());
    ds.samples.push_back(std::move(s));
  }
  for (const auto& id : manifest.at("split").at("train"))
    ds.train_indices.push_back(index_of.at(id));
  for (const auto& id : manifest.at("split").at("test"))
    ds.test_indices.push_back(index_of.at(id));
  return ds;
}

}  // namespace uqd::data
