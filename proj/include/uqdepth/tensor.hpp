#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace uqd {

// Dense float32 array with a small runtime shape. Value semantics: copies are
// deep. Shapes used throughout the project: {h,w} maps, {c,h,w} images,
// {oc,ic,kh,kw} conv weights, {1} scalars.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, float fill);
  Tensor(std::vector<int> shape, std::vector<float> values);

  static Tensor scalar(float v) { return Tensor({1}, {v}); }

  const std::vector<int>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const;
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  std::string shape_str() const;

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }

  float& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  float operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  // 2-d and 3-d accessors; the tensor must have the matching rank.
  float& at(int y, int x);
  float at(int y, int x) const;
  float& at(int c, int y, int x);
  float at(int c, int y, int x) const;

  void fill(float v);

  double sum() const;  // accumulated in double
  float min() const;
  float max() const;

 private:
  std::vector<int> shape_;
  std::vector<float> data_;
};

// Throws std::invalid_argument unless both shapes match.
void check_same_shape(const Tensor& a, const Tensor& b, const char* what);

}  // namespace uqd
