#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <Eigen/Core>

#include "ccsnet/error.hpp"
#include "ccsnet/rng.hpp"

namespace ccsnet::nn {

using Shape = std::vector<std::size_t>;

/// Tensor value and gradient storage. Eigen's vectorized reductions peel a
/// prologue up to the first packet-aligned element, so summation order (and
/// the rounded result) depends on the buffer address unless every buffer
/// starts packet-aligned.
template <class T>
using Storage = std::vector<T, Eigen::aligned_allocator<T>>;

inline std::size_t numel_of(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

namespace detail {
inline bool& grad_enabled_flag() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_enabled_flag()) { detail::grad_enabled_flag() = false; }
  ~NoGradGuard() { detail::grad_enabled_flag() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

inline bool grad_enabled() { return detail::grad_enabled_flag(); }

template <class T>
struct Node {
  Shape shape;
  Storage<T> value;
  Storage<T> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  /// Propagates this node's grad into its parents' grads.
  std::function<void()> backward;

  Storage<T>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    return grad;
  }
};

/// Reference-semantics handle to a node in the computation graph. Copies
/// share storage; use clone() for an independent value.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0)) : node_(std::make_shared<Node<T>>()) {
    node_->value.assign(numel_of(shape), fill);
    node_->shape = std::move(shape);
  }
  Tensor(Shape shape, const std::vector<T>& values) : Tensor(std::move(shape), Storage<T>(values.begin(), values.end())) {}
  Tensor(Shape shape, Storage<T> values) : node_(std::make_shared<Node<T>>()) {
    if (values.size() != numel_of(shape))
      throw DimensionError("value count " + std::to_string(values.size()) + " does not match shape " +
                           shape_str(shape));
    node_->shape = std::move(shape);
    node_->value = std::move(values);
  }
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
  static Tensor ones(Shape s) { return Tensor(std::move(s), T(1)); }
  static Tensor scalar(T v) { return Tensor(Shape{}, std::vector<T>{v}); }
  static Tensor randn(Shape s, Rng& rng, double stddev = 1.0) {
    Tensor t(std::move(s));
    for (auto& v : t.node_->value) v = static_cast<T>(stddev * rng.normal());
    return t;
  }
  static Tensor uniform(Shape s, Rng& rng, double lo, double hi) {
    Tensor t(std::move(s));
    for (auto& v : t.node_->value) v = static_cast<T>(rng.uniform(lo, hi));
    return t;
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t ndim() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<T> data() { return node_->value; }
  std::span<const T> data() const { return node_->value; }
  Storage<T>& values() { return node_->value; }
  const Storage<T>& values() const { return node_->value; }
  /// Copy of the values as a plain vector.
  std::vector<T> to_vector() const { return {node_->value.begin(), node_->value.end()}; }
  T& operator[](std::size_t i) { return node_->value[i]; }
  T operator[](std::size_t i) const { return node_->value[i]; }
  T item() const {
    if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
    return node_->value[0];
  }

  bool has_grad() const { return node_->grad.size() == node_->value.size() && !node_->value.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  Storage<T>& grad_buffer() { return node_->ensure_grad(); }
  void zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), T(0)); }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on) {
    node_->requires_grad = on;
    return *this;
  }

  const char* op() const { return node_->op; }
  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

  /// Independent leaf with a copy of the values.
  Tensor clone() const { return Tensor(shape(), values()); }
  /// Leaf sharing no graph history.
  Tensor detach() const { return clone(); }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Creates the output node for an operation. Parents are recorded only if
/// recording is enabled and at least one of them requires a gradient.
template <class T>
Tensor<T> make_result(Shape shape, const char* op, std::initializer_list<const Tensor<T>*> inputs,
                      Storage<T> values = {}) {
  auto node = std::make_shared<Node<T>>();
  node->op = op;
  if (values.empty()) values.assign(numel_of(shape), T(0));
  node->value = std::move(values);
  node->shape = std::move(shape);
  if (grad_enabled())
    for (const auto* in : inputs)
      if (in->requires_grad()) node->requires_grad = true;
  if (node->requires_grad)
    for (const auto* in : inputs) node->parents.push_back(in->node_ptr());
  return Tensor<T>(std::move(node));
}

template <class T>
Tensor<T> make_result(Shape shape, const char* op, const std::vector<Tensor<T>>& inputs) {
  auto node = std::make_shared<Node<T>>();
  node->op = op;
  node->value.assign(numel_of(shape), T(0));
  node->shape = std::move(shape);
  if (grad_enabled())
    for (const auto& in : inputs)
      if (in.requires_grad()) node->requires_grad = true;
  if (node->requires_grad)
    for (const auto& in : inputs) node->parents.push_back(in.node_ptr());
  return Tensor<T>(std::move(node));
}

/// Topologically ordered list of graph nodes reachable from a root; each
/// node appears once, parents before children.
template <class T>
struct Tape {
  std::vector<Node<T>*> order;

  static Tape record(const Tensor<T>& root) {
    Tape tape;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, std::size_t>> stack;
    if (!root.requires_grad()) return tape;
    stack.emplace_back(root.node(), 0);
    seen.insert(root.node());
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->parents.size()) {
        Node<T>* p = n->parents[next++].get();
        if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
      } else {
        tape.order.push_back(n);
        stack.pop_back();
      }
    }
    return tape;
  }
};

/// Reverse-mode sweep from a scalar root. Leaf gradients accumulate across
/// calls; intermediate gradients are released once propagated.
template <class T>
void backward(const Tensor<T>& root) {
  if (root.numel() != 1)
    throw ContractError("backward() requires a scalar root, got shape " + shape_str(root.shape()));
  if (!root.requires_grad()) return;
  auto tape = Tape<T>::record(root);
  auto& g = root.node()->ensure_grad();
  g[0] += T(1);
  for (auto it = tape.order.rbegin(); it != tape.order.rend(); ++it) {
    Node<T>* n = *it;
    if (!n->backward) continue;
    if (n->grad.size() == n->value.size()) n->backward();
    n->grad.clear();
    n->grad.shrink_to_fit();
  }
}

}  // namespace ccsnet::nn
