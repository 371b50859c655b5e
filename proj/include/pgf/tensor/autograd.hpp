#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "pgf/tensor/tensor.hpp"

namespace pgf::ad {

template <typename T>
class Var;

// Maps the gradient flowing into a node onto one gradient per parent.
// `needed[i]` is false for parents that do not lead to any requested
// variable; the function may return an undefined Var for those.
template <typename T>
using BackwardFn =
    std::function<std::vector<Var<T>>(const Var<T>& grad, const std::vector<bool>& needed)>;

template <typename T>
struct Node {
  Tensor<T> value;
  std::vector<Var<T>> parents;
  BackwardFn<T> backward;
  const char* op = "leaf";
  bool requires_grad = false;
};

// Handle to a node of the computation graph. Copies share the node.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false);

  static Var parameter(Tensor<T> value) { return Var(std::move(value), true); }

  bool defined() const { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t size() const { return node_->value.size(); }
  T item() const { return node_->value.item(); }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool is_leaf() const { return node_ && node_->parents.empty(); }
  const char* op() const { return node_->op; }

  // Leaf-only mutators (optimizer updates, freezing).
  Tensor<T>& mutable_value();
  void set_requires_grad(bool flag);

  const Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

  static Var from_node(std::shared_ptr<Node<T>> node) {
    Var v;
    v.node_ = std::move(node);
    return v;
  }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Thread-local switch controlling whether ops record graph nodes.
class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool flag);
};

class GradModeGuard {
 public:
  explicit GradModeGuard(bool enabled) : previous_(GradMode::enabled()) {
    GradMode::set_enabled(enabled);
  }
  ~GradModeGuard() { GradMode::set_enabled(previous_); }
  GradModeGuard(const GradModeGuard&) = delete;
  GradModeGuard& operator=(const GradModeGuard&) = delete;

 private:
  bool previous_;
};

struct NoGradGuard : GradModeGuard {
  NoGradGuard() : GradModeGuard(false) {}
};

// Records an op result. Falls back to a constant when grad mode is off or
// no parent requires a gradient.
template <typename T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> parents, const char* op,
                   BackwardFn<T> backward);

template <typename T>
struct GradientResult {
  std::vector<Var<T>> grads;
  // Indices into `wrt` that the loss does not depend on; their gradient is zero.
  std::vector<std::size_t> unreachable;

  bool has_unreachable() const { return !unreachable.empty(); }
  std::vector<Tensor<T>> values() const;
};

// Reverse-mode gradient of a scalar loss. With create_graph the returned
// gradients are graph nodes and can be differentiated again.
template <typename T>
GradientResult<T> grad(const Var<T>& loss, std::span<const Var<T>> wrt, bool create_graph = false);

template <typename T>
GradientResult<T> grad(const Var<T>& loss, const std::vector<Var<T>>& wrt, bool create_graph = false) {
  return grad(loss, std::span<const Var<T>>(wrt), create_graph);
}

extern template class Var<float>;
extern template class Var<double>;

}  // namespace pgf::ad
