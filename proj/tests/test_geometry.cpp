#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "uqdepth/geometry.hpp"
#include "uqdepth/ops.hpp"

using namespace uqd;
using namespace uqd::geometry;
using test::tiny_intrinsics;

namespace {

DepthMap constant_depth(const Intrinsics& k, float d) {
  DepthMap m;
  m.values = Tensor({k.height, k.width}, d);
  return m;
}

}  // namespace

TEST_CASE("backproject: principal-point ray and unit offsets") {
  Intrinsics k = tiny_intrinsics(101, 101, 100.0f);
  DepthMap depth = constant_depth(k, 5.0f);
  Tensor pts = backproject(depth, k);
  const int cy = 50, cx = 50;  // (cx,cy) = (50,50) for a 101-wide image
  CHECK(pts.at(0, cy, cx) == doctest::Approx(0.0f));
  CHECK(pts.at(1, cy, cx) == doctest::Approx(0.0f));
  CHECK(pts.at(2, cy, cx) == doctest::Approx(5.0f));

  DepthMap unit = constant_depth(k, 1.0f);
  Tensor pts1 = backproject(unit, k);
  // pixel (cx+fx, cy) does not exist on a 101px image; check the formula at
  // an in-range offset instead and at (cx+fx,cy) via a wider sensor
  Intrinsics wide = tiny_intrinsics(201, 101, 100.0f);
  wide.cx = 50.0f;
  DepthMap unit_wide;
  unit_wide.values = Tensor({101, 201}, 1.0f);
  Tensor ptsw = backproject(unit_wide, wide);
  CHECK(ptsw.at(0, 50, 150) == doctest::Approx(1.0f));  // (cx+fx, cy), d=1
  CHECK(ptsw.at(1, 50, 150) == doctest::Approx(0.0f));
  CHECK(ptsw.at(2, 50, 150) == doctest::Approx(1.0f));
  (void)pts1;
}

TEST_CASE("backproject: hand-computed generic pixel") {
  // pixel (10,20), fx=fy=100, cx=cy=50, depth 2 -> (-0.8, -0.6, 2)
  Intrinsics k;
  k.fx = k.fy = 100.0f;
  k.cx = k.cy = 50.0f;
  k.width = k.height = 101;
  DepthMap depth = constant_depth(k, 2.0f);
  Tensor pts = backproject(depth, k);
  CHECK(pts.at(0, 20, 10) == doctest::Approx(-0.8f));
  CHECK(pts.at(1, 20, 10) == doctest::Approx(-0.6f));
  CHECK(pts.at(2, 20, 10) == doctest::Approx(2.0f));
}

TEST_CASE("backproject then project is the identity on pixel coordinates") {
  Intrinsics k = tiny_intrinsics(16, 12, 13.7f);
  Rng rng(31);
  DepthMap depth;
  depth.values = test::random_tensor({k.height, k.width}, rng, 1.0, 50.0);
  Tensor pts = backproject(depth, k);
  for (int y = 0; y < k.height; ++y)
    for (int x = 0; x < k.width; ++x) {
      const auto p = project_point(
          Vec3{pts.at(0, y, x), pts.at(1, y, x), pts.at(2, y, x)}, k);
      REQUIRE(p.in_front);
      CHECK(std::fabs(p.u - x) < 1e-6);
      CHECK(std::fabs(p.v - y) < 1e-6);
    }
}

TEST_CASE("disparity_to_depth: bounds, formula, monotonicity, errors") {
  Tensor s({1, 3}, {0.0f, 0.5f, 1.0f});
  DepthMap d = disparity_to_depth(s, 0.1f, 100.0f);
  CHECK(d.values[0] == doctest::Approx(100.0f));
  CHECK(d.values[2] == doctest::Approx(0.1f));
  // 1/(0.5*9.99 + 0.01)
  CHECK(d.values[1] == doctest::Approx(1.0f / (0.5f * 9.99f + 0.01f)).epsilon(1e-5));

  // strictly decreasing in s
  Tensor grid({101});
  for (int i = 0; i <= 100; ++i) grid[i] = i / 100.0f;
  DepthMap dg = disparity_to_depth(grid, 0.1f, 100.0f);
  for (int i = 0; i + 1 <= 100; ++i) CHECK(dg.values[i] > dg.values[i + 1]);

  CHECK_THROWS_AS(disparity_to_depth(s, 0.0f, 10.0f), std::invalid_argument);
  CHECK_THROWS_AS(disparity_to_depth(s, 1.0f, 0.5f), std::invalid_argument);
  Tensor bad({1}, {1.5f});
  CHECK_THROWS_AS(disparity_to_depth(bad, 0.1f, 10.0f), std::invalid_argument);
}

TEST_CASE("pose validation and inversion") {
  Pose p;
  p.rotation = rotation_from_axis_angle({0.3, -0.2, 0.5});
  p.translation = {1.0, -2.0, 0.5};
  CHECK_NOTHROW(p.validate());
  const Pose inv = p.inverse();
  const Pose ident = p.then(inv);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(ident.rotation(i, j) == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-9));
  CHECK(ident.translation.norm() < 1e-9);

  Pose bad;
  bad.rotation.m[0] = 1.1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("warp with identity pose reproduces the source on the valid mask") {
  Intrinsics k = tiny_intrinsics(12, 10, 9.3f);
  Rng rng(33);
  ImageFrame src = test::random_frame(k, rng);
  DepthMap depth;
  depth.values = test::random_tensor({k.height, k.width}, rng, 2.0, 30.0);
  WarpResult r = warp(src, depth, Pose::identity(), k, k);
  for (int y = 0; y < k.height; ++y)
    for (int x = 0; x < k.width; ++x) {
      REQUIRE(r.valid_mask.at(y, x) == 1.0f);
      for (int c = 0; c < 3; ++c)
        CHECK(std::fabs(r.warped.pixels.at(c, y, x) - src.pixels.at(c, y, x)) <= 1e-6f);
    }
}

TEST_CASE("fronto-parallel stereo warp shifts every pixel by fx*b/d") {
  const int w = 32, h = 16;
  Intrinsics k = tiny_intrinsics(w, h, 20.0f);
  // horizontal gradient image: intensity = x / w, so a shift is measurable
  ImageFrame src;
  src.intrinsics = k;
  src.pixels = Tensor({3, h, w});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) src.pixels.at(c, y, x) = static_cast<float>(x) / w;

  const float d = 8.0f, b = 0.8f;
  DepthMap depth = constant_depth(k, d);
  Pose stereo;  // right camera at +b on x: X_src = X - (b,0,0)
  stereo.translation = {-static_cast<double>(b), 0.0, 0.0};
  WarpResult r = warp(src, depth, stereo, k, k);
  const float disparity = k.fx * b / d;  // 2.0 px
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const float expected_u = x - disparity;
      // pixels landing exactly on the image border can round either way
      if (std::fabs(expected_u) < 1e-4f || std::fabs(expected_u - (w - 1)) < 1e-4f)
        continue;
      if (expected_u < 0.0f || expected_u > w - 1.0f) {
        CHECK(r.valid_mask.at(y, x) == 0.0f);
      } else {
        REQUIRE(r.valid_mask.at(y, x) == 1.0f);
        CHECK(r.warped.pixels.at(0, y, x) ==
              doctest::Approx(expected_u / w).epsilon(1e-5));
      }
    }
}

TEST_CASE("pose pushing all projections off-image yields an all-false mask") {
  Intrinsics k = tiny_intrinsics(8, 8, 8.0f);
  Rng rng(34);
  ImageFrame src = test::random_frame(k, rng);
  DepthMap depth = constant_depth(k, 5.0f);
  Pose far_off;
  far_off.translation = {1000.0, 0.0, 0.0};
  WarpResult r = warp(src, depth, far_off, k, k);
  for (std::int64_t i = 0; i < r.valid_mask.size(); ++i)
    CHECK(r.valid_mask[i] == 0.0f);
}

TEST_CASE("warp rejects mismatched dimensions") {
  Intrinsics k = tiny_intrinsics(8, 8, 8.0f);
  Intrinsics other = tiny_intrinsics(10, 8, 8.0f);
  Rng rng(35);
  ImageFrame src = test::random_frame(k, rng);
  DepthMap depth = constant_depth(k, 3.0f);
  CHECK_THROWS_AS(warp(src, depth, Pose::identity(), k, other), std::invalid_argument);
}

namespace {

// Steep but smooth texture so sampling gradients dominate float32 noise.
ImageFrame steep_frame(const Intrinsics& k) {
  ImageFrame f;
  f.intrinsics = k;
  f.pixels = Tensor({3, k.height, k.width});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < k.height; ++y)
      for (int x = 0; x < k.width; ++x)
        f.pixels.at(c, y, x) =
            static_cast<float>(0.5 + 0.45 * std::sin(0.7 * x + 0.3 * y + 1.9 * c));
  return f;
}

// Bilinear sampling has derivative kinks at integer grid coordinates; nudge
// the test depths until no finite-difference step can straddle one.
void nudge_clear_of_kinks(Tensor& depth, const Pose& pose, const Intrinsics& k,
                          double margin) {
  for (int y = 0; y < k.height; ++y)
    for (int x = 0; x < k.width; ++x) {
      for (int attempt = 0; attempt < 200; ++attempt) {
        const double d = depth.at(y, x);
        const Vec3 ray{(x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0};
        const Vec3 xs = pose.rotation * (ray * d) + pose.translation;
        if (xs.z < 1e-6) break;
        const double u = k.fx * xs.x / xs.z + k.cx;
        const double v = k.fy * xs.y / xs.z + k.cy;
        // far outside the image the clamp is flat and FD cannot cross a kink
        if (u < -margin || u > k.width - 1 + margin || v < -margin ||
            v > k.height - 1 + margin)
          break;
        if (std::fabs(u - std::round(u)) > margin &&
            std::fabs(v - std::round(v)) > margin)
          break;
        depth.at(y, x) += 0.017f;
      }
    }
}

Pose test_pose() {
  Pose pose;
  pose.rotation = rotation_from_axis_angle({0.01, -0.02, 0.005});
  pose.translation = {-2.0, 0.05, 0.1};
  return pose;
}

}  // namespace

TEST_CASE("warp gradient w.r.t. depth matches finite differences (rel 1e-3)") {
  Intrinsics k = tiny_intrinsics(8, 8, 8.0f);
  ImageFrame src = steep_frame(k);
  Rng rng(36);
  Tensor depth0 = test::random_tensor({8, 8}, rng, 4.0, 6.0);
  const Pose pose = test_pose();
  nudge_clear_of_kinks(depth0, pose, k, 0.02);
  Tensor rot({3, 3});
  for (int i = 0; i < 9; ++i) rot[i] = static_cast<float>(pose.rotation.m[i]);
  Tensor tr({3}, {static_cast<float>(pose.translation.x),
                  static_cast<float>(pose.translation.y),
                  static_cast<float>(pose.translation.z)});
  const double err = test::max_grad_scaled_err(
      [&](const Var& depth) {
        WarpVar wv = warp(Var::constant(src.pixels), depth, Var::constant(rot),
                          Var::constant(tr), k, k);
        return wv.warped;
      },
      depth0, 2e-3);
  CHECK(err < 1e-3);
}

TEST_CASE("warp gradients w.r.t. rotation and translation match finite differences") {
  Intrinsics k = tiny_intrinsics(8, 8, 8.0f);
  ImageFrame src = steep_frame(k);
  Rng rng(37);
  Tensor depth0 = test::random_tensor({8, 8}, rng, 4.0, 6.0);
  const Pose pose = test_pose();
  nudge_clear_of_kinks(depth0, pose, k, 0.02);
  const Tensor aa0({3}, {0.01f, -0.02f, 0.005f});
  const Tensor tr0({3}, {-2.0f, 0.05f, 0.1f});
  // weight the loss with fixed random coefficients so no gradient component
  // cancels to zero across pixels
  const Tensor weights = test::random_tensor({3, 8, 8}, rng, 0.2, 1.0);

  const double err_t = test::max_grad_scaled_err(
      [&](const Var& t) {
        Var rot = rotation_var_from_axis_angle(Var::constant(aa0));
        WarpVar wv =
            warp(Var::constant(src.pixels), Var::constant(depth0), rot, t, k, k);
        return ops::mul(wv.warped, Var::constant(weights));
      },
      tr0, 1e-3);
  CHECK(err_t < 5e-3);

  const double err_aa = test::max_grad_scaled_err(
      [&](const Var& aa) {
        Var rot = rotation_var_from_axis_angle(aa);
        WarpVar wv = warp(Var::constant(src.pixels), Var::constant(depth0), rot,
                          Var::constant(tr0), k, k);
        return ops::mul(wv.warped, Var::constant(weights));
      },
      aa0, 1e-4);
  CHECK(err_aa < 5e-3);
}

TEST_CASE("rotation_from_axis_angle round-trips and differentiates") {
  const Vec3 w{0.4, -0.3, 0.7};
  const Mat3 r = rotation_from_axis_angle(w);
  Pose p{r, {0, 0, 0}};
  CHECK_NOTHROW(p.validate(1e-9));
  const Vec3 back = axis_angle_from_rotation(r);
  CHECK(back.x == doctest::Approx(w.x).epsilon(1e-9));
  CHECK(back.y == doctest::Approx(w.y).epsilon(1e-9));
  CHECK(back.z == doctest::Approx(w.z).epsilon(1e-9));

  // analytic Jacobian of a linear functional of R against double-precision
  // finite differences of the double-path Rodrigues formula
  Rng rng(38);
  const Tensor coefs = test::random_tensor({3, 3}, rng, -1.0, 1.0);
  const Tensor aa0({3}, {0.4f, -0.3f, 0.7f});
  Var aa = Var::leaf(aa0, true);
  backward(ops::sum(ops::mul(rotation_var_from_axis_angle(aa), Var::constant(coefs))));
  for (int i = 0; i < 3; ++i) {
    const double h = 1e-7;
    Vec3 wp = w, wm = w;
    (i == 0 ? wp.x : i == 1 ? wp.y : wp.z) += h;
    (i == 0 ? wm.x : i == 1 ? wm.y : wm.z) -= h;
    const Mat3 rp = rotation_from_axis_angle(wp);
    const Mat3 rm = rotation_from_axis_angle(wm);
    double fd = 0;
    for (int j = 0; j < 9; ++j)
      fd += static_cast<double>(coefs[j]) * (rp.m[j] - rm.m[j]) / (2 * h);
    CHECK(test::rel_err(aa.grad()[i], fd) < 1e-4);
  }
}

TEST_CASE("intrinsics/image/depth validation") {
  Intrinsics k = tiny_intrinsics(8, 8, 8.0f);
  CHECK_NOTHROW(k.validate());
  Intrinsics bad = k;
  bad.cx = 8.0f;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  Rng rng(39);
  ImageFrame f = test::random_frame(k, rng);
  CHECK_NOTHROW(f.validate());
  f.pixels[0] = 1.5f;
  CHECK_THROWS_AS(f.validate(), std::invalid_argument);

  DepthMap d;
  d.values = Tensor({8, 8}, 5.0f);
  CHECK_NOTHROW(d.validate());
  d.values[0] = 1000.0f;
  CHECK_THROWS_AS(d.validate(), std::invalid_argument);
}
