#include "uqdepth/geometry.hpp"

#include <cmath>
#include <stdexcept>

#include "uqdepth/kernels.hpp"
#include "uqdepth/ops.hpp"

namespace uqd::geometry {

double Vec3::norm() const { return std::sqrt(x * x + y * y + z * z); }

Vec3 Vec3::normalized() const {
  const double n = norm();
  if (n == 0.0) throw std::invalid_argument("cannot normalize zero vector");
  return {x / n, y / n, z / n};
}

Vec3 Mat3::operator*(const Vec3& v) const {
  return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
          m[3] * v.x + m[4] * v.y + m[5] * v.z,
          m[6] * v.x + m[7] * v.y + m[8] * v.z};
}

Mat3 Mat3::operator*(const Mat3& o) const {
  Mat3 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double acc = 0;
      for (int k = 0; k < 3; ++k) acc += (*this)(i, k) * o(k, j);
      r(i, j) = acc;
    }
  return r;
}

Mat3 Mat3::transposed() const {
  Mat3 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
  return r;
}

double Mat3::determinant() const {
  return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
         m[2] * (m[3] * m[7] - m[4] * m[6]);
}

namespace {

Mat3 skew(const Vec3& v) {
  Mat3 s;
  s.m = {0, -v.z, v.y, v.z, 0, -v.x, -v.y, v.x, 0};
  return s;
}

Mat3 add(const Mat3& a, const Mat3& b) {
  Mat3 r;
  for (int i = 0; i < 9; ++i) r.m[i] = a.m[i] + b.m[i];
  return r;
}

Mat3 scale(const Mat3& a, double s) {
  Mat3 r;
  for (int i = 0; i < 9; ++i) r.m[i] = a.m[i] * s;
  return r;
}

}  // namespace

Mat3 rotation_from_axis_angle(const Vec3& w) {
  const double theta = w.norm();
  const Mat3 k = skew(w);
  if (theta < 1e-12) return add(Mat3::identity(), k);
  const Mat3 k2 = scale(k * k, 1.0 / (theta * theta));
  Mat3 r = Mat3::identity();
  r = add(r, scale(k, std::sin(theta) / theta));
  r = add(r, scale(k2, 1.0 - std::cos(theta)));
  return r;
}

Vec3 axis_angle_from_rotation(const Mat3& r) {
  const double tr = r(0, 0) + r(1, 1) + r(2, 2);
  const double c = std::min(1.0, std::max(-1.0, (tr - 1.0) / 2.0));
  const double theta = std::acos(c);
  if (theta < 1e-12) return {0, 0, 0};
  const double s = 2.0 * std::sin(theta);
  return Vec3{(r(2, 1) - r(1, 2)), (r(0, 2) - r(2, 0)), (r(1, 0) - r(0, 1))} *
         (theta / s);
}

void Intrinsics::validate() const {
  if (fx <= 0 || fy <= 0) throw std::invalid_argument("intrinsics: focal lengths must be positive");
  if (width <= 0 || height <= 0) throw std::invalid_argument("intrinsics: image size must be positive");
  if (cx < 0 || cx >= static_cast<float>(width) || cy < 0 || cy >= static_cast<float>(height))
    throw std::invalid_argument("intrinsics: principal point outside image");
}

void Pose::validate(double tol) const {
  const Mat3 rtr = rotation.transposed() * rotation;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const double expect = i == j ? 1.0 : 0.0;
      if (std::fabs(rtr(i, j) - expect) > tol)
        throw std::invalid_argument("pose: rotation is not orthonormal");
    }
  if (std::fabs(rotation.determinant() - 1.0) > tol)
    throw std::invalid_argument("pose: rotation determinant is not +1");
}

Pose Pose::inverse() const {
  const Mat3 rt = rotation.transposed();
  return Pose{rt, (rt * translation) * -1.0};
}

Pose Pose::then(const Pose& other) const {
  return Pose{other.rotation * rotation,
              other.rotation * translation + other.translation};
}

void ImageFrame::validate() const {
  intrinsics.validate();
  if (pixels.ndim() != 3 || pixels.dim(0) != 3)
    throw std::invalid_argument("image frame: pixels must be {3,h,w}");
  if (pixels.dim(1) != intrinsics.height || pixels.dim(2) != intrinsics.width)
    throw std::invalid_argument("image frame: pixel dims do not match intrinsics");
  for (std::int64_t i = 0; i < pixels.size(); ++i)
    if (!(pixels[i] >= 0.0f && pixels[i] <= 1.0f))
      throw std::invalid_argument("image frame: pixel values outside [0,1]");
  if (pose) pose->validate();
}

void DepthMap::validate() const {
  if (values.ndim() != 2) throw std::invalid_argument("depth map: values must be {h,w}");
  if (!(d_min > 0.0f) || !(d_max > d_min))
    throw std::invalid_argument("depth map: need 0 < d_min < d_max");
  for (std::int64_t i = 0; i < values.size(); ++i)
    if (!(values[i] >= d_min && values[i] <= d_max))
      throw std::invalid_argument("depth map: value outside [d_min, d_max]");
}

Tensor backproject(const DepthMap& depth, const Intrinsics& k) {
  k.validate();
  const int h = depth.height(), w = depth.width();
  if (h != k.height || w != k.width)
    throw std::invalid_argument("backproject: depth dims do not match intrinsics");
  Tensor pts({3, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double d = depth.values.at(y, x);
      pts.at(0, y, x) = static_cast<float>((x - k.cx) / k.fx * d);
      pts.at(1, y, x) = static_cast<float>((y - k.cy) / k.fy * d);
      pts.at(2, y, x) = static_cast<float>(d);
    }
  return pts;
}

ProjectedPixel project_point(const Vec3& point, const Intrinsics& k) {
  ProjectedPixel p;
  p.in_front = point.z > 1e-9;
  if (p.in_front) {
    p.u = k.fx * point.x / point.z + k.cx;
    p.v = k.fy * point.y / point.z + k.cy;
  }
  return p;
}

namespace {

constexpr double kMinZ = 1e-6;

// Projects every target pixel through depth and pose into the source view.
// u,v get a far out-of-bounds sentinel when the point is behind the camera,
// which zeroes both the mask and the sampling gradient.
void compute_grid(const Tensor& depth, const Mat3& r, const Vec3& t,
                  const Intrinsics& kt, const Intrinsics& ks,
                  std::vector<double>& u, std::vector<double>& v,
                  Tensor& mask) {
  const int h = kt.height, w = kt.width;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int p = y * w + x;
      const double d = depth[p];
      const Vec3 ray{(x - kt.cx) / kt.fx, (y - kt.cy) / kt.fy, 1.0};
      const Vec3 xs = r * (ray * d) + t;
      if (xs.z <= kMinZ) {
        u[p] = -1e9;
        v[p] = -1e9;
        mask[p] = 0.0f;
        continue;
      }
      u[p] = ks.fx * xs.x / xs.z + ks.cx;
      v[p] = ks.fy * xs.y / xs.z + ks.cy;
      const bool inside = u[p] >= 0.0 && u[p] <= ks.width - 1.0 && v[p] >= 0.0 &&
                          v[p] <= ks.height - 1.0;
      mask[p] = inside ? 1.0f : 0.0f;
    }
}

}  // namespace

WarpVar warp(const Var& source, const Var& depth, const Var& rotation,
             const Var& translation, const Intrinsics& k_target,
             const Intrinsics& k_source) {
  const Tensor& src = source.value();
  if (src.ndim() != 3) throw std::invalid_argument("warp: source must be {c,h,w}");
  if (src.dim(1) != k_source.height || src.dim(2) != k_source.width)
    throw std::invalid_argument("warp: source dims do not match source intrinsics");
  const Tensor& dep = depth.value();
  if (dep.ndim() != 2 || dep.dim(0) != k_target.height || dep.dim(1) != k_target.width)
    throw std::invalid_argument("warp: depth dims do not match target intrinsics");
  if (source.requires_grad())
    throw std::invalid_argument("warp: gradients w.r.t. source pixels unsupported");

  Mat3 r;
  for (int i = 0; i < 9; ++i) r.m[i] = rotation.value()[i];
  Vec3 t{translation.value()[0], translation.value()[1], translation.value()[2]};

  const int c = src.dim(0);
  const int h = k_target.height, w = k_target.width;
  const int n = h * w;
  auto u = std::make_shared<std::vector<double>>(n);
  auto v = std::make_shared<std::vector<double>>(n);
  Tensor mask({h, w});
  compute_grid(dep, r, t, k_target, k_source, *u, *v, mask);

  Tensor out({c, h, w});
  kernels::bilinear_sample_forward(src.data(), c, src.dim(1), src.dim(2), u->data(),
                                   v->data(), n, out.data());

  auto src_n = source.node();
  auto dep_n = depth.node();
  auto rot_n = rotation.node();
  auto tr_n = translation.node();
  Var warped = make_op(
      std::move(out), {source, depth, rotation, translation},
      [src_n, dep_n, rot_n, tr_n, u, v, r, t, k_target, k_source, c, h, w,
       n](Node& self) {
        std::vector<double> gu(n), gv(n);
        kernels::bilinear_sample_backward_grid(
            src_n->value.data(), c, k_source.height, k_source.width, u->data(),
            v->data(), n, self.grad.data(), gu.data(), gv.data());

        Tensor gdepth({h, w});
        std::array<double, 9> grot{};
        std::array<double, 3> gtrans{};
        const bool need_pose = rot_n->requires_grad || tr_n->requires_grad;
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) {
            const int p = y * w + x;
            const double d = dep_n->value[p];
            const Vec3 ray{(x - k_target.cx) / k_target.fx,
                           (y - k_target.cy) / k_target.fy, 1.0};
            const Vec3 xc = ray * d;
            const Vec3 xs = r * xc + t;
            if (xs.z <= kMinZ) continue;
            const double inv_z = 1.0 / xs.z;
            // d(u,v)/d(xs)
            const Vec3 du_dxs{k_source.fx * inv_z, 0.0,
                              -k_source.fx * xs.x * inv_z * inv_z};
            const Vec3 dv_dxs{0.0, k_source.fy * inv_z,
                              -k_source.fy * xs.y * inv_z * inv_z};
            const Vec3 dxs = du_dxs * gu[p] + dv_dxs * gv[p];
            if (dep_n->requires_grad)
              gdepth[p] = static_cast<float>(dxs.dot(r * ray));
            if (need_pose) {
              gtrans[0] += dxs.x;
              gtrans[1] += dxs.y;
              gtrans[2] += dxs.z;
              grot[0] += dxs.x * xc.x;
              grot[1] += dxs.x * xc.y;
              grot[2] += dxs.x * xc.z;
              grot[3] += dxs.y * xc.x;
              grot[4] += dxs.y * xc.y;
              grot[5] += dxs.y * xc.z;
              grot[6] += dxs.z * xc.x;
              grot[7] += dxs.z * xc.y;
              grot[8] += dxs.z * xc.z;
            }
          }
        if (dep_n->requires_grad) dep_n->accumulate(gdepth);
        if (rot_n->requires_grad) {
          Tensor g({3, 3});
          for (int i = 0; i < 9; ++i) g[i] = static_cast<float>(grot[i]);
          rot_n->accumulate(g);
        }
        if (tr_n->requires_grad) {
          Tensor g({3});
          for (int i = 0; i < 3; ++i) g[i] = static_cast<float>(gtrans[i]);
          tr_n->accumulate(g);
        }
      });
  return WarpVar{warped, mask};
}

WarpResult warp(const ImageFrame& source, const DepthMap& depth,
                const Pose& target_to_source, const Intrinsics& k_target,
                const Intrinsics& k_source) {
  source.validate();
  depth.validate();
  target_to_source.validate();
  k_target.validate();
  Tensor rot({3, 3});
  for (int i = 0; i < 9; ++i) rot[i] = static_cast<float>(target_to_source.rotation.m[i]);
  Tensor tr({3}, {static_cast<float>(target_to_source.translation.x),
                  static_cast<float>(target_to_source.translation.y),
                  static_cast<float>(target_to_source.translation.z)});
  WarpVar wv = warp(Var::constant(source.pixels), Var::constant(depth.values),
                    Var::constant(rot), Var::constant(tr), k_target, k_source);
  WarpResult res;
  res.warped.pixels = wv.warped.value();
  // Sampling can only interpolate between valid source values, so the result
  // stays in [0,1]; clamp float noise at the boundaries anyway.
  for (std::int64_t i = 0; i < res.warped.pixels.size(); ++i) {
    if (res.warped.pixels[i] < 0.0f) res.warped.pixels[i] = 0.0f;
    if (res.warped.pixels[i] > 1.0f) res.warped.pixels[i] = 1.0f;
  }
  res.warped.intrinsics = k_target;
  res.valid_mask = wv.valid_mask;
  return res;
}

Var rotation_var_from_axis_angle(const Var& axis_angle) {
  if (axis_angle.value().size() != 3)
    throw std::invalid_argument("rotation_var_from_axis_angle: {3} vector expected");
  const Vec3 w{axis_angle.value()[0], axis_angle.value()[1], axis_angle.value()[2]};
  const Mat3 r = rotation_from_axis_angle(w);
  Tensor out({3, 3});
  for (int i = 0; i < 9; ++i) out[i] = static_cast<float>(r.m[i]);
  auto an = axis_angle.node();
  return make_op(std::move(out), {axis_angle}, [an, w, r](Node& self) {
    const double theta2 = w.dot(w);
    const double w_arr[3] = {w.x, w.y, w.z};
    Tensor g({3});
    for (int i = 0; i < 3; ++i) {
      Vec3 e{i == 0 ? 1.0 : 0.0, i == 1 ? 1.0 : 0.0, i == 2 ? 1.0 : 0.0};
      Mat3 dr;
      if (theta2 < 1e-16) {
        dr = skew(e);
      } else {
        // d(R)/d(w_i) = (w_i [w]x + [w x ((I - R) e_i)]x) / |w|^2 * R
        const Vec3 col{e.x - r(0, i), e.y - r(1, i), e.z - r(2, i)};
        Mat3 a = add(scale(skew(w), w_arr[i]), skew(w.cross(col)));
        dr = scale(a, 1.0 / theta2) * r;
      }
      double acc = 0;
      for (int j = 0; j < 9; ++j) acc += static_cast<double>(self.grad[j]) * dr.m[j];
      g[i] = static_cast<float>(acc);
    }
    an->accumulate(g);
  });
}

namespace {
void check_disparity_range(float d_min, float d_max) {
  if (!(d_min > 0.0f)) throw std::invalid_argument("disparity_to_depth: d_min must be > 0");
  if (!(d_max > d_min)) throw std::invalid_argument("disparity_to_depth: d_max must exceed d_min");
}
}  // namespace

DepthMap disparity_to_depth(const Tensor& sigmoid_output, float d_min, float d_max) {
  check_disparity_range(d_min, d_max);
  const float a = 1.0f / d_min - 1.0f / d_max;
  const float b = 1.0f / d_max;
  DepthMap dm;
  dm.d_min = d_min;
  dm.d_max = d_max;
  dm.values = Tensor(sigmoid_output.shape());
  for (std::int64_t i = 0; i < sigmoid_output.size(); ++i) {
    const float s = sigmoid_output[i];
    if (!(s >= 0.0f && s <= 1.0f))
      throw std::invalid_argument("disparity_to_depth: input outside [0,1]");
    float d = 1.0f / (a * s + b);
    // inverse-depth arithmetic may overshoot the bounds by a few ulps
    if (d < d_min) d = d_min;
    if (d > d_max) d = d_max;
    dm.values[i] = d;
  }
  return dm;
}

Var disparity_to_depth(const Var& sigmoid_output, float d_min, float d_max) {
  check_disparity_range(d_min, d_max);
  const float a = 1.0f / d_min - 1.0f / d_max;
  const float b = 1.0f / d_max;
  return ops::reciprocal(ops::affine(sigmoid_output, a, b));
}

}  // namespace uqd::geometry
