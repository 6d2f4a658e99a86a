#include "uqdepth/datagen.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "uqdepth/float_map.hpp"
#include "uqdepth/hash.hpp"
#include "uqdepth/ppm.hpp"
#include "uqdepth/rng.hpp"

namespace uqd::datagen {

using geometry::Mat3;
using geometry::Pose;
using geometry::Vec3;

void SceneSpec::validate() const {
  if (!(near > 0.0)) throw std::invalid_argument("scene spec: near must be > 0");
  if (!(far > near)) throw std::invalid_argument("scene spec: far <= near");
  if (!(baseline >= 0.0)) throw std::invalid_argument("scene spec: negative baseline");
  if (num_primitives < 0) throw std::invalid_argument("scene spec: negative primitive count");
  if (width <= 0 || height <= 0 || focal <= 0)
    throw std::invalid_argument("scene spec: bad camera parameters");
  if (texture_octaves < 1) throw std::invalid_argument("scene spec: octaves must be >= 1");
}

geometry::Intrinsics SceneSpec::intrinsics() const {
  geometry::Intrinsics k;
  k.fx = k.fy = static_cast<float>(focal);
  k.cx = static_cast<float>((width - 1) / 2.0);
  k.cy = static_cast<float>((height - 1) / 2.0);
  k.width = width;
  k.height = height;
  return k;
}

namespace {

// Smooth lattice value noise in [0,1], C2-continuous.
double value_noise(double x, double y, std::uint64_t seed) {
  const auto lattice = [seed](std::int64_t ix, std::int64_t iy) {
    Rng r(seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(ix + 0x10000)) ^
          (0xbf58476d1ce4e5b9ULL * static_cast<std::uint64_t>(iy + 0x20000)));
    return r.uniform();
  };
  const double fx = std::floor(x), fy = std::floor(y);
  const std::int64_t ix = static_cast<std::int64_t>(fx);
  const std::int64_t iy = static_cast<std::int64_t>(fy);
  const double tx = x - fx, ty = y - fy;
  const auto fade = [](double t) { return t * t * t * (t * (t * 6 - 15) + 10); };
  const double sx = fade(tx), sy = fade(ty);
  const double v00 = lattice(ix, iy), v10 = lattice(ix + 1, iy);
  const double v01 = lattice(ix, iy + 1), v11 = lattice(ix + 1, iy + 1);
  const double a = v00 + sx * (v10 - v00);
  const double b = v01 + sx * (v11 - v01);
  return a + sy * (b - a);
}

struct Plane {
  Vec3 point, normal;     // normal faces the camera (negative z component)
  Vec3 axis_u, axis_v;    // in-plane orthonormal axes
  double half_u = 0, half_v = 0;
  bool bounded = true;
  Vec3 color_a, color_b;  // endpoints of the per-channel texture ramp
  std::uint64_t texture_seed = 0;
  double texture_freq = 1.0;
};

struct Scene {
  std::vector<Plane> planes;
  int texture_octaves = 3;
};

struct Hit {
  double t = -1.0;  // ray parameter; with unnormalized pixel rays t == depth z
  int plane = -1;
};

Hit ray_cast(const Scene& scene, const Vec3& origin, const Vec3& dir) {
  Hit best;
  for (std::size_t i = 0; i < scene.planes.size(); ++i) {
    const Plane& pl = scene.planes[i];
    const double denom = dir.dot(pl.normal);
    if (std::fabs(denom) < 1e-12) continue;
    const double t = (pl.point - origin).dot(pl.normal) / denom;
    if (t <= 1e-9) continue;
    if (pl.bounded) {
      const Vec3 rel = origin + dir * t - pl.point;
      if (std::fabs(rel.dot(pl.axis_u)) > pl.half_u ||
          std::fabs(rel.dot(pl.axis_v)) > pl.half_v)
        continue;
    }
    if (best.plane < 0 || t < best.t) {
      best.t = t;
      best.plane = static_cast<int>(i);
    }
  }
  return best;
}

Vec3 shade(const Scene& scene, const Plane& pl, const Vec3& world_point) {
  const Vec3 rel = world_point - pl.point;
  const double u = rel.dot(pl.axis_u);
  const double v = rel.dot(pl.axis_v);
  Vec3 rgb;
  double* out[3] = {&rgb.x, &rgb.y, &rgb.z};
  const double* ca[3] = {&pl.color_a.x, &pl.color_a.y, &pl.color_a.z};
  const double* cb[3] = {&pl.color_b.x, &pl.color_b.y, &pl.color_b.z};
  for (int c = 0; c < 3; ++c) {
    double noise = 0.0, amp = 0.5, norm = 0.0, freq = pl.texture_freq;
    // octaves fall off fast: bilinear resampling must track the texture
    for (int o = 0; o < scene.texture_octaves; ++o) {
      noise += amp * value_noise(u * freq, v * freq,
                                 pl.texture_seed + static_cast<std::uint64_t>(c) * 97 +
                                     static_cast<std::uint64_t>(o) * 1009);
      norm += amp;
      amp *= 0.35;
      freq *= 2.0;
    }
    noise /= norm;
    double val = *ca[c] + (*cb[c] - *ca[c]) * noise;
    *out[c] = std::min(1.0, std::max(0.0, val));
  }
  return rgb;
}

// world -> camera transform of a camera whose centre sits at `centre` with
// orientation `r_cam_to_world`.
Pose world_to_cam(const Mat3& r_cam_to_world, const Vec3& centre) {
  const Mat3 rt = r_cam_to_world.transposed();
  return Pose{rt, (rt * centre) * -1.0};
}

struct View {
  Tensor pixels;  // {3,h,w}
  Tensor depth;   // {h,w}, camera z
  Tensor plane_id;
};

View render_view(const Scene& scene, const Pose& w2c,
                 const geometry::Intrinsics& k) {
  const Pose c2w = w2c.inverse();
  View view;
  view.pixels = Tensor({3, k.height, k.width});
  view.depth = Tensor({k.height, k.width});
  view.plane_id = Tensor({k.height, k.width}, -1.0f);
  for (int y = 0; y < k.height; ++y)
    for (int x = 0; x < k.width; ++x) {
      const Vec3 dir_cam{(x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0};
      const Vec3 dir_world = c2w.rotation * dir_cam;
      const Hit hit = ray_cast(scene, c2w.translation, dir_world);
      if (hit.plane < 0) continue;  // never happens: background is unbounded
      const Vec3 world_point = c2w.translation + dir_world * hit.t;
      const Vec3 rgb = shade(scene, scene.planes[hit.plane], world_point);
      view.pixels.at(0, y, x) = static_cast<float>(rgb.x);
      view.pixels.at(1, y, x) = static_cast<float>(rgb.y);
      view.pixels.at(2, y, x) = static_cast<float>(rgb.z);
      view.depth.at(y, x) = static_cast<float>(hit.t);
      view.plane_id.at(y, x) = static_cast<float>(hit.plane);
    }
  return view;
}

Scene build_scene(const SceneSpec& spec, int index, Rng& rng) {
  Scene scene;
  scene.texture_octaves = spec.texture_octaves;

  auto random_color = [&rng]() {
    return Vec3{rng.uniform(0.15, 0.95), rng.uniform(0.15, 0.95),
                rng.uniform(0.15, 0.95)};
  };

  // unbounded backdrop, slightly tilted, near 80% of the far bound
  {
    Plane bg;
    const double d0 = 0.8 * spec.far;
    bg.point = {0, 0, d0};
    const double tilt = rng.uniform(-0.05, 0.05);
    const double tilt2 = rng.uniform(-0.05, 0.05);
    bg.normal = Vec3{std::sin(tilt), std::sin(tilt2), -1.0}.normalized();
    bg.axis_u = bg.normal.cross(Vec3{0, 1, 0}).normalized();
    bg.axis_v = bg.normal.cross(bg.axis_u).normalized();
    bg.bounded = false;
    bg.color_a = random_color();
    bg.color_b = random_color();
    bg.texture_seed = Rng::derive(spec.seed, 7001 + static_cast<std::uint64_t>(index));
    bg.texture_freq = rng.uniform(0.12, 0.3);
    scene.planes.push_back(bg);
  }

  for (int i = 0; i < spec.num_primitives; ++i) {
    Plane pl;
    const double depth = rng.uniform(1.3 * spec.near, 0.7 * spec.far);
    // aim the patch centre at a random image position, well inside the view
    const double px = rng.uniform(-0.35, 0.35);
    const double py = rng.uniform(-0.35, 0.35);
    pl.point = Vec3{px, py, 1.0} * depth;
    const double tilt_x = rng.uniform(-0.5, 0.5);
    const double tilt_y = rng.uniform(-0.5, 0.5);
    pl.normal = Vec3{std::sin(tilt_x), std::sin(tilt_y), -1.0}.normalized();
    pl.axis_u = pl.normal.cross(Vec3{0, 1, 0}).normalized();
    pl.axis_v = pl.normal.cross(pl.axis_u).normalized();
    const double max_extent = std::min(2.0, 0.2 * depth);
    pl.half_u = rng.uniform(0.3 * max_extent, max_extent);
    pl.half_v = rng.uniform(0.3 * max_extent, max_extent);
    pl.color_a = random_color();
    pl.color_b = random_color();
    pl.texture_seed = Rng::derive(
        spec.seed, 9001 + static_cast<std::uint64_t>(index) * 131 +
                       static_cast<std::uint64_t>(i));
    pl.texture_freq = rng.uniform(0.3, 0.8);
    scene.planes.push_back(pl);
  }
  return scene;
}

geometry::ImageFrame make_frame(Tensor pixels, const geometry::Intrinsics& k,
                                std::optional<Pose> pose) {
  geometry::ImageFrame f;
  f.pixels = std::move(pixels);
  f.intrinsics = k;
  f.pose = std::move(pose);
  return f;
}

}  // namespace

Sample render_sample(const SceneSpec& spec, int index) {
  spec.validate();
  Rng rng(Rng::derive(spec.seed, 0x5A17 + static_cast<std::uint64_t>(index)));
  const Scene scene = build_scene(spec, index, rng);
  const geometry::Intrinsics k = spec.intrinsics();

  // temporal motion: fixed translation step plus a small per-scene rotation
  const Vec3 jitter{rng.uniform(-1.0, 1.0) * spec.ego_rotation_jitter,
                    rng.uniform(-1.0, 1.0) * spec.ego_rotation_jitter,
                    rng.uniform(-1.0, 1.0) * spec.ego_rotation_jitter};
  const Mat3 step_rot = geometry::rotation_from_axis_angle(jitter);

  const Pose left_w2c = Pose::identity();
  const Pose right_w2c = world_to_cam(Mat3::identity(), Vec3{spec.baseline, 0, 0});
  const Pose next_w2c = world_to_cam(step_rot, spec.ego_translation);
  // previous frame: the camera one step behind the current one
  const Pose prev_w2c =
      world_to_cam(step_rot.transposed(), (step_rot.transposed() * spec.ego_translation) * -1.0);

  const View left = render_view(scene, left_w2c, k);
  const View right = render_view(scene, right_w2c, k);
  const View prev = render_view(scene, prev_w2c, k);
  const View next = render_view(scene, next_w2c, k);

  Sample s;
  s.left_t = make_frame(left.pixels, k, Pose::identity());
  s.right_t = make_frame(right.pixels, k, right_w2c);
  s.left_prev = make_frame(prev.pixels, k, prev_w2c);
  s.left_next = make_frame(next.pixels, k, next_w2c);
  s.gt_depth.values = left.depth;
  s.gt_depth.d_min = static_cast<float>(spec.near * 0.5);
  s.gt_depth.d_max = static_cast<float>(spec.far * 1.1);
  s.pose_right = right_w2c;
  s.pose_prev = prev_w2c;
  s.pose_next = next_w2c;

  // occlusion: a left pixel is kept when the ray from the right camera centre
  // towards its 3-D point first hits (numerically) that same point, and the
  // bilinear stencil around its right-view projection stays on that surface
  // (a stencil straddling an occlusion edge blends two textures)
  s.occlusion_free = Tensor({k.height, k.width});
  const Pose right_c2w = right_w2c.inverse();
  for (int y = 0; y < k.height; ++y)
    for (int x = 0; x < k.width; ++x) {
      const double d = left.depth.at(y, x);
      const Vec3 world{(x - k.cx) / k.fx * d, (y - k.cy) / k.fy * d, d};
      const Vec3 in_right = right_w2c.rotation * world + right_w2c.translation;
      const auto proj = geometry::project_point(in_right, k);
      if (!proj.in_front || proj.u < 0 || proj.u > k.width - 1.0 || proj.v < 0 ||
          proj.v > k.height - 1.0) {
        s.occlusion_free.at(y, x) = 0.0f;
        continue;
      }
      const Vec3 dir = world - right_c2w.translation;
      const Hit hit = ray_cast(scene, right_c2w.translation, dir);
      if (hit.plane < 0 || hit.t < 1.0 - 1e-6) {
        s.occlusion_free.at(y, x) = 0.0f;
        continue;
      }
      const float plane_here = left.plane_id.at(y, x);
      const int x0 = std::min(static_cast<int>(proj.u), k.width - 2);
      const int y0 = std::min(static_cast<int>(proj.v), k.height - 2);
      const bool same_surface = right.plane_id.at(y0, x0) == plane_here &&
                                right.plane_id.at(y0, x0 + 1) == plane_here &&
                                right.plane_id.at(y0 + 1, x0) == plane_here &&
                                right.plane_id.at(y0 + 1, x0 + 1) == plane_here;
      s.occlusion_free.at(y, x) = same_surface ? 1.0f : 0.0f;
    }

  // erode by one pixel: the photometric error reads a 3x3 window, so a pixel
  // only counts as consistent when its whole neighbourhood is
  Tensor eroded(s.occlusion_free.shape());
  for (int y = 0; y < k.height; ++y)
    for (int x = 0; x < k.width; ++x) {
      float keep = 1.0f;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int sy = std::min(std::max(y + dy, 0), k.height - 1);
          const int sx = std::min(std::max(x + dx, 0), k.width - 1);
          if (s.occlusion_free.at(sy, sx) < 0.5f) keep = 0.0f;
        }
      eroded.at(y, x) = keep;
    }
  s.occlusion_free = eroded;
  return s;
}

namespace {

nlohmann::json pose_json(const Pose& p) {
  nlohmann::json j;
  j["rotation"] = p.rotation.m;
  j["translation"] = {p.translation.x, p.translation.y, p.translation.z};
  return j;
}

}  // namespace

std::filesystem::path write_dataset(const SceneSpec& spec, int count,
                                    const std::filesystem::path& out_dir) {
  spec.validate();
  if (count < 1) throw std::invalid_argument("write_dataset: count must be >= 1");
  std::filesystem::create_directories(out_dir);

  const int train_count = static_cast<int>(std::floor(0.8 * count));
  nlohmann::json manifest;
  manifest["spec"] = {{"seed", spec.seed},
                      {"num_primitives", spec.num_primitives},
                      {"near", spec.near},
                      {"far", spec.far},
                      {"texture_octaves", spec.texture_octaves},
                      {"baseline", spec.baseline},
                      {"ego_translation",
                       {spec.ego_translation.x, spec.ego_translation.y,
                        spec.ego_translation.z}},
                      {"ego_rotation_jitter", spec.ego_rotation_jitter},
                      {"width", spec.width},
                      {"height", spec.height},
                      {"focal", spec.focal}};
  manifest["count"] = count;

  auto samples = nlohmann::json::array();
  std::vector<std::string> train_ids, test_ids;
  std::string all_hashes;
  for (int i = 0; i < count; ++i) {
    char id_buf[16];
    std::snprintf(id_buf, sizeof(id_buf), "%04d", i);
    const std::string id(id_buf);
    (i < train_count ? train_ids : test_ids).push_back(id);

    const Sample s = render_sample(spec, i);
    const std::filesystem::path dir = out_dir / "samples" / id;
    std::filesystem::create_directories(dir);

    nlohmann::json entry;
    entry["id"] = id;
    auto files = nlohmann::json::object();
    const auto add_file = [&](const std::string& name,
                              const std::filesystem::path& p) {
      const std::string rel = "samples/" + id + "/" + p.filename().string();
      const std::string h = io::sha256_file(p);
      files[name] = {{"path", rel}, {"sha256", h}};
      all_hashes += h;
    };
    io::write_ppm(dir / "left_t.ppm", s.left_t.pixels);
    add_file("left_t", dir / "left_t.ppm");
    io::write_ppm(dir / "right_t.ppm", s.right_t.pixels);
    add_file("right_t", dir / "right_t.ppm");
    io::write_ppm(dir / "left_prev.ppm", s.left_prev.pixels);
    add_file("left_prev", dir / "left_prev.ppm");
    io::write_ppm(dir / "left_next.ppm", s.left_next.pixels);
    add_file("left_next", dir / "left_next.ppm");
    io::write_map(dir / "gt_depth.uqdm", s.gt_depth.values);
    add_file("gt_depth", dir / "gt_depth.uqdm");
    io::write_map(dir / "occlusion_free.uqdm", s.occlusion_free);
    add_file("occlusion_free", dir / "occlusion_free.uqdm");
    entry["files"] = files;
    entry["poses"] = {{"right", pose_json(s.pose_right)},
                      {"prev", pose_json(s.pose_prev)},
                      {"next", pose_json(s.pose_next)}};
    samples.push_back(entry);
  }
  manifest["samples"] = samples;
  manifest["split"] = {{"train", train_ids}, {"test", test_ids}};
  manifest["depth_range"] = {spec.near, spec.far};
  manifest["dataset_sha256"] = io::sha256_hex(all_hashes);

  const std::filesystem::path manifest_path = out_dir / "manifest.json";
  std::ofstream f(manifest_path);
  if (!f) throw std::runtime_error("cannot write dataset manifest");
  f << manifest.dump(2) << "\n";
  return manifest_path;
}

}  // namespace uqd::datagen
