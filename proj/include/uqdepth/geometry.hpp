#pragma once

#include <array>
#include <optional>

#include "uqdepth/autodiff.hpp"
#include "uqdepth/tensor.hpp"

namespace uqd::geometry {

struct Vec3 {
  double x = 0, y = 0, z = 0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const;
  Vec3 normalized() const;
};

struct Mat3 {
  // row-major
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  static Mat3 identity() { return Mat3{}; }
  double operator()(int r, int c) const { return m[r * 3 + c]; }
  double& operator()(int r, int c) { return m[r * 3 + c]; }
  Vec3 operator*(const Vec3& v) const;
  Mat3 operator*(const Mat3& o) const;
  Mat3 transposed() const;
  double determinant() const;
};

// Rodrigues rotation from an axis-angle vector (angle = |w| radians).
Mat3 rotation_from_axis_angle(const Vec3& w);
Vec3 axis_angle_from_rotation(const Mat3& r);

struct Intrinsics {
  float fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;

  void validate() const;  // throws std::invalid_argument
};

// Rigid transform X' = R*X + t, in meters unless the pose is learned.
struct Pose {
  Mat3 rotation;
  Vec3 translation;

  static Pose identity() { return Pose{}; }
  void validate(double tol = 1e-6) const;
  Pose inverse() const;
  // this->then(other): applies *this first, then other.
  Pose then(const Pose& other) const;
};

struct ImageFrame {
  Tensor pixels;  // {3,h,w}, values in [0,1]
  Intrinsics intrinsics;
  std::optional<Pose> pose;  // relative to the reference frame, when known

  int height() const { return pixels.dim(1); }
  int width() const { return pixels.dim(2); }
  void validate() const;
};

struct DepthMap {
  Tensor values;  // {h,w}, meters
  float d_min = 0.1f;
  float d_max = 100.0f;

  int height() const { return values.dim(0); }
  int width() const { return values.dim(1); }
  void validate() const;
};

// Camera-frame 3-D point of every pixel: {3,h,w} with planes X, Y, Z.
Tensor backproject(const DepthMap& depth, const Intrinsics& k);

struct ProjectedPixel {
  double u = 0, v = 0;
  bool in_front = false;
};
ProjectedPixel project_point(const Vec3& point, const Intrinsics& k);

// View synthesis: samples `source` at the projection of the target pixel's
// backprojected point through `target_to_source`. valid_mask is 1 where the
// projection lands inside source bounds (and in front of the camera).
struct WarpResult {
  ImageFrame warped;
  Tensor valid_mask;  // {h,w} of 0/1
};
WarpResult warp(const ImageFrame& source, const DepthMap& depth,
                const Pose& target_to_source, const Intrinsics& k_target,
                const Intrinsics& k_source);

// Differentiable path used in training. `rotation` is a {3,3} Var,
// `translation` a {3} Var; gradients flow into depth, rotation, translation.
struct WarpVar {
  Var warped;        // same shape as source
  Tensor valid_mask; // {h,w}
};
WarpVar warp(const Var& source, const Var& depth, const Var& rotation,
             const Var& translation, const Intrinsics& k_target,
             const Intrinsics& k_source);

// {3,3} rotation Var from a {3} axis-angle Var (analytic Jacobian).
Var rotation_var_from_axis_angle(const Var& axis_angle);

// depth = 1 / (a*s + b), a = 1/d_min - 1/d_max, b = 1/d_max. Maps a sigmoid
// activation in [0,1] onto [d_min, d_max], monotone decreasing in s.
DepthMap disparity_to_depth(const Tensor& sigmoid_output, float d_min, float d_max);
Var disparity_to_depth(const Var& sigmoid_output, float d_min, float d_max);

}  // namespace uqd::geometry
