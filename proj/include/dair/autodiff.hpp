#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "dair/common.hpp"
#include "dair/tensor.hpp"

namespace dair {

// Reverse-mode tape node. Graphs are built define-by-run: every operation
// allocates a fresh node whose parents are the operands, so the parent
// relation is acyclic by construction.
template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // allocated on first accumulation, same shape as value
  bool has_grad = false;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node<T>>> parents;
  // Propagates this->grad into the parents' grads (adding, never assigning).
  std::function<void(Node<T>&)> backprop;

  Tensor<T>& ensure_grad() {
    if (!has_grad) {
      grad = Tensor<T>(value.shape());
      has_grad = true;
    }
    return grad;
  }

  void accumulate(const Tensor<T>& g) {
    Tensor<T>& dst = ensure_grad();
    const T* src = g.data();
    T* d = dst.data();
    const int64_t n = dst.numel();
    for (int64_t i = 0; i < n; ++i) d[i] += src[i];
  }

  void clear_grad() {
    has_grad = false;
    grad = Tensor<T>();
  }
};

// Value-semantic handle to a graph node.
template <typename T>
class Var {
 public:
  Var() = default;

  explicit Var(Tensor<T> value, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  bool valid() const { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return node_->has_grad; }
  const Tensor<T>& grad() const { return node_->grad; }
  const char* op() const { return node_->op; }
  void clear_grad() const { node_->clear_grad(); }

  // A grad-less leaf copy of the current value.
  Var detach() const { return Var(node_->value, false); }

  std::shared_ptr<Node<T>> node() const { return node_; }

  static Var from_node(std::shared_ptr<Node<T>> n) {
    Var v;
    v.node_ = std::move(n);
    return v;
  }

 private:
  std::shared_ptr<Node<T>> node_;
};

namespace detail {

template <typename T>
Var<T> make_op_node(const char* op, Tensor<T> value,
                    std::vector<std::shared_ptr<Node<T>>> parents,
                    std::function<void(Node<T>&)> backprop) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->op = op;
  for (const auto& p : parents) n->requires_grad = n->requires_grad || p->requires_grad;
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->backprop = std::move(backprop);
  }
  return Var<T>::from_node(std::move(n));
}

}  // namespace detail

// Reverse accumulation from a scalar loss. Every node reachable through
// requires-grad parents receives the sum of its path contributions; leaves
// keep their grads afterwards, interior nodes are owned by the graph and
// disappear with it.
template <typename T>
void backward(const Var<T>& loss) {
  if (!loss.valid()) throw StructuralError("backward on empty Var");
  if (loss.value().numel() != 1)
    throw StructuralError("backward requires a scalar loss, got shape " +
                          shape_string(loss.value().shape()));

  // Iterative post-order over the requires-grad subgraph.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  struct Frame {
    Node<T>* node;
    size_t next_parent;
  };
  std::vector<Frame> stack;
  Node<T>* root = loss.node().get();
  if (!root->requires_grad) return;
  stack.push_back({root, 0});
  visited.insert(root);
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      Node<T>* p = f.node->parents[f.next_parent++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  root->ensure_grad().fill(T(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backprop && n->has_grad) n->backprop(*n);
  }
}

}  // namespace dair
