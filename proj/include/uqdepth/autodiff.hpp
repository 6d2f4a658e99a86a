#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "uqdepth/tensor.hpp"

namespace uqd {

// Define-by-run reverse-mode autodiff over Tensor. Each operation allocates a
// Node holding its value, parent links and a closure that scatters the
// upstream gradient into the parents. Nodes carry a monotonically increasing
// sequence number; walking reachable nodes in decreasing order yields a valid
// reverse topological order, so no explicit tape is required.

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::uint64_t seq = 0;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Tensor& ensure_grad() {
    if (grad.empty()) grad = Tensor(value.shape());
    return grad;
  }
  void accumulate(const Tensor& g);
};

class Var {
 public:
  Var() = default;

  static Var leaf(Tensor value, bool requires_grad = false);
  static Var constant(Tensor value) { return leaf(std::move(value), false); }
  static Var scalar(float v) { return constant(Tensor::scalar(v)); }

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }  // leaves only (optimizer)
  const Tensor& grad() const { return node_->grad; }
  bool has_grad() const { return defined() && !node_->grad.empty(); }
  bool requires_grad() const { return node_->requires_grad; }
  void zero_grad() { node_->grad = Tensor(); }

  const std::vector<int>& shape() const { return node_->value.shape(); }
  float scalar_value() const { return node_->value[0]; }

  std::shared_ptr<Node>& node() { return node_; }
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Builds an op node. `backward` may be empty for non-differentiable ops.
Var make_op(Tensor value, std::vector<Var> parents,
            std::function<void(Node&)> backward);

// Seeds d(root)/d(root) = 1 and propagates to all reachable parents.
// The root must hold exactly one element.
void backward(const Var& root);

}  // namespace uqd
