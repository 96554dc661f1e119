// tensor.hpp — dense row-major tensors on a reverse-mode tape.
//
// A Tensor is a shared handle to a graph node. Ops (ops.hpp) record parent
// links and a backprop closure on their output node; backward() replays the
// recorded closures in reverse topological order. The tape is consumed by
// backward unless retain_graph is set; running it twice without retaining is
// an error. Tensor values are immutable once created except for leaf
// parameter updates between graphs and gradient accumulation.
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "splicer/error.hpp"
#include "splicer/kernels/kernels.hpp"

namespace splicer {

using Shape = std::vector<std::int64_t>;

inline std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (std::int64_t d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

inline void validate_shape(const Shape& shape) {
  check(!shape.empty(), "tensor shape must have at least one dimension");
  for (std::int64_t d : shape) {
    check(d >= 1, "tensor dimensions must be positive, got ", shape_str(shape));
  }
}

// Autograd recording switch (thread-local). Disabled inside NoGradGuard.
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(grad_mode()) { grad_mode() = false; }
  ~NoGradGuard() { grad_mode() = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // sized on first accumulation
  bool requires_grad = false;
  bool consumed = false;
  std::vector<std::shared_ptr<Node>> parents;  // grad-requiring inputs
  std::function<void(const Node&)> backprop;

  void accumulate_grad(const T* g, std::size_t n) {
    if (grad.empty()) grad.assign(value.size(), T(0));
    kernels::axpy(T(1), g, grad.data(), n);
  }
};

}  // namespace detail

template <typename T>
class Tensor {
 public:
  using Node = detail::Node<T>;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    validate_shape(shape);
    auto node = std::make_shared<Node>();
    node->value.assign(static_cast<std::size_t>(numel(shape)), T(0));
    node->shape = std::move(shape);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor full(Shape shape, T v, bool requires_grad = false) {
    Tensor t = zeros(std::move(shape), requires_grad);
    std::fill(t.node_->value.begin(), t.node_->value.end(), v);
    return t;
  }

  static Tensor from(Shape shape, std::vector<T> values,
                     bool requires_grad = false) {
    validate_shape(shape);
    check(static_cast<std::int64_t>(values.size()) == numel(shape),
          "value count ", values.size(), " does not match shape ",
          shape_str(shape));
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor scalar(T v) { return from({1}, {v}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::int64_t dim(std::size_t i) const { return node_->shape[i]; }
  std::size_t ndim() const { return node_->shape.size(); }
  std::int64_t size() const { return static_cast<std::int64_t>(node_->value.size()); }

  const std::vector<T>& values() const { return node_->value; }

  // In-place access for leaves (parameter updates, data staging). Mutating a
  // non-leaf invalidates recorded gradients, hence the check.
  std::vector<T>& leaf_values() {
    check<NumericError>(!node_->backprop,
                        "leaf_values() called on a non-leaf tensor");
    return node_->value;
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) {
    check<NumericError>(!node_->backprop,
                        "set_requires_grad on non-leaf tensor");
    node_->requires_grad = flag;
  }

  bool has_grad() const { return !node_->grad.empty(); }
  const std::vector<T>& grad() const {
    check<NumericError>(has_grad(), "tensor has no gradient");
    return node_->grad;
  }
  void zero_grad() {
    if (!node_->grad.empty()) {
      std::fill(node_->grad.begin(), node_->grad.end(), T(0));
    }
  }

  T item() const {
    check(size() == 1, "item() requires a scalar tensor, got ",
          shape_str(shape()));
    return node_->value[0];
  }

  std::shared_ptr<Node>& node() { return node_; }
  const std::shared_ptr<Node>& node() const { return node_; }

  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<Node> node_;
};

// Builds the output node for an op. parents must be the grad-requiring
// inputs; backprop receives the output node and accumulates into them.
template <typename T>
Tensor<T> make_op_result(
    Shape shape, std::vector<T> values,
    std::vector<std::shared_ptr<detail::Node<T>>> parents,
    std::function<void(const detail::Node<T>&)> backprop) {
  Tensor<T> out = Tensor<T>::from(std::move(shape), std::move(values));
  if (grad_mode() && !parents.empty()) {
    out.node()->requires_grad = true;
    out.node()->parents = std::move(parents);
    out.node()->backprop = std::move(backprop);
  }
  return out;
}

// Collects the nodes of grad-requiring inputs (helper for op authors).
template <typename T, typename... Tensors>
std::vector<std::shared_ptr<detail::Node<T>>> grad_parents(
    const Tensors&... tensors) {
  std::vector<std::shared_ptr<detail::Node<T>>> out;
  auto consider = [&out](const Tensor<T>& t) {
    if (t.requires_grad()) out.push_back(t.node());
  };
  (consider(tensors), ...);
  return out;
}

// Reverse-mode sweep from a scalar loss. Populates .grad on every
// grad-requiring leaf reachable from the loss. Consumes the tape unless
// retain_graph is true.
template <typename T>
void backward(const Tensor<T>& loss, bool retain_graph = false) {
  check(loss.size() == 1, "backward() requires a scalar loss, got ",
        shape_str(loss.shape()));
  using Node = detail::Node<T>;
  Node* root = loss.node().get();
  check<NumericError>(!root->consumed,
                      "backward() called on an already-consumed graph");
  if (!root->requires_grad) return;

  // Iterative post-order DFS over parent links; reverse finish order is a
  // topological order, so each node's grad is complete before its closure
  // runs. Nodes are marked visited at expansion (not push) time.
  std::vector<Node*> order;
  std::vector<std::pair<Node*, bool>> stack;
  std::unordered_set<Node*> visited;
  stack.push_back({root, false});
  while (!stack.empty()) {
    auto [node, expanded] = stack.back();
    stack.pop_back();
    if (expanded) {
      order.push_back(node);
      continue;
    }
    if (!visited.insert(node).second) continue;
    check<NumericError>(!node->consumed,
                        "backward() reached an already-consumed graph node");
    stack.push_back({node, true});
    for (const auto& parent : node->parents) {
      if (!visited.count(parent.get())) {
        stack.push_back({parent.get(), false});
      }
    }
  }

  // Fresh pass: intermediate grads from a retained previous pass must not
  // leak into this one. Leaf grads accumulate across passes.
  for (Node* node : order) {
    if (node->backprop) node->grad.clear();
  }
  root->grad.assign(root->value.size(), T(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backprop && !node->grad.empty()) {
      node->backprop(*node);
    }
  }
  if (!retain_graph) {
    for (Node* node : order) {
      if (node->backprop) {
        node->consumed = true;
        node->backprop = nullptr;
        node->parents.clear();
        node->grad.clear();  // intermediate grads are not part of the contract
      }
    }
  }
}

}  // namespace splicer
