#include "uqdepth/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <stdexcept>
#include <unordered_set>

namespace uqd {

namespace {
std::atomic<std::uint64_t> g_seq{1};
}

void Node::accumulate(const Tensor& g) {
  Tensor& dst = ensure_grad();
  check_same_shape(dst, g, "gradient accumulate");
  for (std::int64_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
}

Var Var::leaf(Tensor value, bool requires_grad) {
  Var v;
  v.node_ = std::make_shared<Node>();
  v.node_->value = std::move(value);
  v.node_->requires_grad = requires_grad;
  v.node_->seq = g_seq.fetch_add(1);
  return v;
}

Var make_op(Tensor value, std::vector<Var> parents,
            std::function<void(Node&)> backward) {
  Var v = Var::leaf(std::move(value), false);
  Node& n = *v.node();
  for (const Var& p : parents) {
    if (!p.defined()) throw std::invalid_argument("undefined operand");
    n.parents.push_back(p.node());
    if (p.requires_grad()) n.requires_grad = true;
  }
  if (n.requires_grad) n.backward_fn = std::move(backward);
  return v;
}

void backward(const Var& root) {
  if (!root.defined() || root.value().size() != 1)
    throw std::invalid_argument("backward requires a defined scalar root");

  // Collect reachable nodes (iterative DFS), then run in decreasing seq.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{root.node().get()};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& p : n->parents)
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
  }
  std::sort(order.begin(), order.end(),
            [](const Node* a, const Node* b) { return a->seq > b->seq; });

  root.node()->ensure_grad().fill(1.0f);
  for (Node* n : order)
    if (n->requires_grad && n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
}

}  // namespace uqd
