#include "uqdepth/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace uqd {

namespace {

std::int64_t element_count(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor dimensions must be positive");
    n *= d;
  }
  return shape.empty() ? 0 : n;
}

}  // namespace

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
  data_.assign(static_cast<std::size_t>(element_count(shape_)), 0.0f);
}

Tensor::Tensor(std::vector<int> shape, float fill) : shape_(std::move(shape)) {
  data_.assign(static_cast<std::size_t>(element_count(shape_)), fill);
}

Tensor::Tensor(std::vector<int> shape, std::vector<float> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (element_count(shape_) != static_cast<std::int64_t>(data_.size()))
    throw std::invalid_argument("tensor shape does not match value count");
}

int Tensor::dim(int i) const {
  if (i < 0 || i >= ndim()) throw std::out_of_range("tensor dim index");
  return shape_[static_cast<std::size_t>(i)];
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << 'x';
    os << shape_[i];
  }
  os << ']';
  return os.str();
}

float& Tensor::at(int y, int x) {
  return data_[static_cast<std::size_t>(y) * shape_[1] + x];
}

float Tensor::at(int y, int x) const {
  return data_[static_cast<std::size_t>(y) * shape_[1] + x];
}

float& Tensor::at(int c, int y, int x) {
  return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
}

float Tensor::at(int c, int y, int x) const {
  return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

double Tensor::sum() const {
  double s = 0.0;
  for (float v : data_) s += v;
  return s;
}

float Tensor::min() const {
  return *std::min_element(data_.begin(), data_.end());
}

float Tensor::max() const {
  return *std::max_element(data_.begin(), data_.end());
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(what) + ": shape mismatch " +
                                a.shape_str() + " vs " + b.shape_str());
}

}  // namespace uqd
