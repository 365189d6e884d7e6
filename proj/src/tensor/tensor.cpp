#include "hmap/tensor/tensor.hpp"

#include <algorithm>
#include <unordered_set>
#include <utility>

namespace hmap {

namespace {
thread_local bool t_grad_enabled = true;
}

bool grad_enabled() noexcept { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

template <typename T>
Array<T>& Node<T>::grad_buffer() {
  if (!grad) grad.emplace(value.shape());
  return *grad;
}

template <typename T>
void Node<T>::accumulate(const Array<T>& g) {
  require_same_shape(value.shape(), g.shape(), std::string("gradient for ") + op);
  if (!grad) {
    grad = g;
    return;
  }
  T* dst = grad->data();
  const T* src = g.data();
  const Index n = g.size();
  for (Index i = 0; i < n; ++i) dst[i] += src[i];
}

template <typename T>
Tensor<T>::Tensor(Array<T> value, bool requires_grad) : node_(std::make_shared<Node<T>>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::from_node(std::shared_ptr<Node<T>> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

template <typename T>
void Tensor<T>::set_requires_grad(bool on) {
  if (!node_->is_leaf()) throw Error("requires_grad can only be toggled on leaf tensors");
  node_->requires_grad = on;
}

template <typename T>
const Array<T>& Tensor<T>::grad() const {
  if (!node_->grad) throw Error("tensor has no gradient");
  return *node_->grad;
}

template <typename T>
std::vector<Node<T>*> topological_order(const Tensor<T>& root) {
  std::vector<Node<T>*> order;
  if (!root.defined() || !root.requires_grad()) return order;
  std::unordered_set<Node<T>*> visited;
  // Iterative post-order DFS: (node, next input index).
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  visited.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

template <typename T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined()) throw Error("backward on undefined tensor");
  if (loss.size() != 1) {
    throw ShapeError("backward requires a scalar loss, got shape " + to_string(loss.shape()));
  }
  if (!loss.requires_grad()) return;
  auto order = topological_order(loss);
  for (Node<T>* n : order) {
    if (!n->is_leaf()) n->grad.reset();
  }
  loss.node()->accumulate(Array<T>(loss.shape(), T(1)));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->is_leaf() || !n->grad) continue;
    if (n->backward) n->backward(*n);
    n->grad.reset();
  }
}

template <typename T>
Tensor<T> make_result(Array<T> value, const char* op, std::vector<Tensor<T>> inputs, BackwardFn<T> fn) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->op = op;
  const bool track = grad_enabled() && std::any_of(inputs.begin(), inputs.end(),
                                                   [](const Tensor<T>& t) { return t.requires_grad(); });
  if (track) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& t : inputs) node->inputs.push_back(t.node_ptr());
    node->backward = std::move(fn);
  }
  return Tensor<T>::from_node(std::move(node));
}

template struct Node<float>;
template struct Node<double>;
template class Tensor<float>;
template class Tensor<double>;
template void backward(const Tensor<float>&);
template void backward(const Tensor<double>&);
template std::vector<Node<float>*> topological_order(const Tensor<float>&);
template std::vector<Node<double>*> topological_order(const Tensor<double>&);
template Tensor<float> make_result(Array<float>, const char*, std::vector<Tensor<float>>, BackwardFn<float>);
template Tensor<double> make_result(Array<double>, const char*, std::vector<Tensor<double>>, BackwardFn<double>);

}  // namespace hmap
