#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "hmap/tensor/array.hpp"

namespace hmap {

template <typename T>
struct Node;

template <typename T>
using BackwardFn = std::function<void(Node<T>&)>;

/// One recorded value in the dynamic graph. Inputs always refer to nodes
/// created earlier, so the graph is acyclic by construction.
template <typename T>
struct Node {
  Array<T> value;
  std::optional<Array<T>> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn<T> backward;

  bool is_leaf() const noexcept { return inputs.empty(); }

  /// Zero-initialized on first use.
  Array<T>& grad_buffer();
  void accumulate(const Array<T>& g);
};

/// Handle to a graph node. Copies share the node; use `detach()` or
/// `value()` for independent data.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Array<T> value, bool requires_grad = false);

  static Tensor from_node(std::shared_ptr<Node<T>> node);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const { return node_->value.shape(); }
  Index dim(Index axis) const { return node_->value.dim(axis); }
  Index size() const { return node_->value.size(); }

  const Array<T>& value() const { return node_->value; }
  /// Direct access for optimizers and initializers; bypasses the graph.
  Array<T>& mutable_value() { return node_->value; }
  T item() const { return node_->value.item(); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on);
  bool has_grad() const { return node_->grad.has_value(); }
  const Array<T>& grad() const;
  void zero_grad() { node_->grad.reset(); }

  Tensor detach() const { return Tensor(node_->value, false); }
  const char* op() const { return node_->op; }

  Node<T>* node() const noexcept { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const noexcept { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate across
/// calls; intermediate gradients are recomputed each call.
template <typename T>
void backward(const Tensor<T>& loss);

/// Nodes reachable from `root` that participate in differentiation, in a
/// valid topological order (inputs before consumers).
template <typename T>
std::vector<Node<T>*> topological_order(const Tensor<T>& root);

bool grad_enabled() noexcept;

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Builds an op result. Records `fn` only when grad mode is on and some
/// input requires a gradient.
template <typename T>
Tensor<T> make_result(Array<T> value, const char* op, std::vector<Tensor<T>> inputs, BackwardFn<T> fn);

extern template struct Node<float>;
extern template struct Node<double>;
extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace hmap
