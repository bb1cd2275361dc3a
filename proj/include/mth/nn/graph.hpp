#pragma once

#include <functional>
#include <memory>
#include <stdexcept>
#include <unordered_set>
#include <utility>
#include <vector>

#include "mth/core/tensor.hpp"

namespace mth::nn {

inline thread_local int g_no_grad_depth = 0;

inline bool grad_enabled() { return g_no_grad_depth == 0; }

/// Scoped inference mode: ops created inside record no graph, so forward
/// passes free intermediates as soon as they go out of scope.
struct NoGradGuard {
  NoGradGuard() { ++g_no_grad_depth; }
  ~NoGradGuard() { --g_no_grad_depth; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (!grad.same_shape(value)) grad = Tensor<T>::zeros_like(value);
  }

  void accumulate(const Tensor<T>& g) {
    ensure_grad();
    T* dst = grad.data();
    const T* src = g.data();
    for (size_t i = 0; i < grad.numel(); ++i) dst[i] += src[i];
  }
};

/// Handle to a node in the computation graph. Copying shares the node.
template <typename T>
class Var {
 public:
  Var() = default;

  explicit Var(Tensor<T> value, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  bool defined() const { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& value() { return node_->value; }
  Tensor<T>& grad() { return node_->ensure_grad(), node_->grad; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  void zero_grad() {
    if (node_) {
      node_->ensure_grad();
      node_->grad.fill(T{0});
    }
  }

  std::shared_ptr<Node<T>>& node() { return node_; }
  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Wrap an op result. The backward functor receives the result node and is
/// only retained when gradients are enabled and some parent needs them.
template <typename T, typename F>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> parents, F&& backward) {
  Var<T> out(std::move(value));
  bool track = grad_enabled();
  if (track) {
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    track = any;
  }
  if (track) {
    out.node()->requires_grad = true;
    for (auto& p : parents) out.node()->parents.push_back(p.node());
    out.node()->backward_fn = std::forward<F>(backward);
  }
  return out;
}

/// Reverse-mode sweep from a root (typically a scalar loss). Topological
/// order comes from an iterative DFS over the parent edges, so the
/// accumulation order is fixed and runs are reproducible.
template <typename T>
void backward(const Var<T>& root) {
  if (!root.defined()) throw std::invalid_argument("backward: undefined var");
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  struct Frame {
    Node<T>* node;
    size_t next_parent;
  };
  std::vector<Frame> stack;
  if (root.node()->requires_grad) {
    stack.push_back({root.node().get(), 0});
    seen.insert(root.node().get());
  }
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      Node<T>* p = f.node->parents[f.next_parent++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }
  root.node()->ensure_grad();
  root.node()->grad.fill(T{1});
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

}  // namespace mth::nn
