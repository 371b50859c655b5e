#include "pgf/tensor/autograd.hpp"

#include <unordered_map>
#include <unordered_set>

#include "pgf/tensor/ops.hpp"

namespace pgf::ad {

namespace {
thread_local bool t_grad_enabled = true;
}

bool GradMode::enabled() { return t_grad_enabled; }
void GradMode::set_enabled(bool flag) { t_grad_enabled = flag; }

template <typename T>
Var<T>::Var(Tensor<T> value, bool requires_grad) : node_(std::make_shared<Node<T>>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T>& Var<T>::mutable_value() {
  if (!is_leaf()) throw std::logic_error("mutable_value() on a non-leaf node");
  return node_->value;
}

template <typename T>
void Var<T>::set_requires_grad(bool flag) {
  if (!is_leaf()) throw std::logic_error("set_requires_grad() on a non-leaf node");
  node_->requires_grad = flag;
}

template <typename T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> parents, const char* op,
                   BackwardFn<T> backward) {
  bool any = false;
  if (GradMode::enabled())
    for (const auto& p : parents) any = any || p.requires_grad();
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->op = op;
  if (any) {
    node->parents = std::move(parents);
    node->backward = std::move(backward);
    node->requires_grad = true;
  }
  return Var<T>::from_node(std::move(node));
}

template <typename T>
std::vector<Tensor<T>> GradientResult<T>::values() const {
  std::vector<Tensor<T>> out;
  out.reserve(grads.size());
  for (const auto& g : grads) out.push_back(g.value());
  return out;
}

template <typename T>
GradientResult<T> grad(const Var<T>& loss, std::span<const Var<T>> wrt, bool create_graph) {
  if (!loss.defined()) throw std::invalid_argument("grad(): undefined loss");
  if (loss.size() != 1)
    throw ShapeError("grad(): loss must be scalar, got shape " + to_string(loss.shape()));

  using NodeT = Node<T>;
  std::unordered_set<const NodeT*> targets;
  for (const auto& w : wrt)
    if (w.defined()) targets.insert(w.node());

  // Post-order DFS gives parents before children.
  std::vector<const NodeT*> order;
  std::unordered_map<const NodeT*, bool> leads;  // node reaches a target
  if (loss.requires_grad()) {
    std::vector<std::pair<const NodeT*, std::size_t>> stack{{loss.node(), 0}};
    std::unordered_set<const NodeT*> seen{loss.node()};
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->parents.size()) {
        const NodeT* p = node->parents[next++].node();
        if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        continue;
      }
      bool reach = targets.count(node) > 0;
      for (const auto& p : node->parents) {
        auto it = leads.find(p.node());
        if (it != leads.end() && it->second) reach = true;
      }
      leads[node] = reach;
      order.push_back(node);
      stack.pop_back();
    }
  }

  GradModeGuard mode(create_graph);
  std::unordered_map<const NodeT*, Var<T>> grads;
  if (!order.empty() && leads[loss.node()]) {
    grads[loss.node()] = Var<T>(Tensor<T>(loss.shape(), T{1}));
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const NodeT* node = *it;
    if (node->parents.empty() || !leads[node]) continue;
    auto g = grads.find(node);
    if (g == grads.end()) continue;
    std::vector<bool> needed(node->parents.size());
    for (std::size_t i = 0; i < needed.size(); ++i) {
      const NodeT* p = node->parents[i].node();
      needed[i] = p->requires_grad && leads[p];
    }
    Var<T> upstream = g->second;
    // Interior gradients are no longer needed once consumed.
    if (!targets.count(node)) grads.erase(g);
    auto parent_grads = node->backward(upstream, needed);
    for (std::size_t i = 0; i < needed.size(); ++i) {
      if (!needed[i] || !parent_grads[i].defined()) continue;
      const NodeT* p = node->parents[i].node();
      auto [slot, inserted] = grads.try_emplace(p, parent_grads[i]);
      if (!inserted) slot->second = add(slot->second, parent_grads[i]);
    }
  }

  GradientResult<T> result;
  result.grads.reserve(wrt.size());
  for (std::size_t i = 0; i < wrt.size(); ++i) {
    auto g = grads.find(wrt[i].node());
    if (g == grads.end()) {
      result.grads.push_back(Var<T>(Tensor<T>(wrt[i].shape())));
      result.unreachable.push_back(i);
    } else {
      result.grads.push_back(g->second);
    }
  }
  return result;
}

template class Var<float>;
template class Var<double>;
template struct GradientResult<float>;
template struct GradientResult<double>;
template Var<float> make_result(Tensor<float>, std::vector<Var<float>>, const char*, BackwardFn<float>);
template Var<double> make_result(Tensor<double>, std::vector<Var<double>>, const char*, BackwardFn<double>);
template GradientResult<float> grad(const Var<float>&, std::span<const Var<float>>, bool);
template GradientResult<double> grad(const Var<double>&, std::span<const Var<double>>, bool);

}  // namespace pgf::ad
