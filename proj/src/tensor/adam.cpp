#include "pgf/tensor/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace pgf::ad {

template <typename T>
AdamState<T>::AdamState(AdamConfig cfg, std::span<const Var<T>> params) : config(cfg) {
  m.reserve(params.size());
  v.reserve(params.size());
  for (const auto& p : params) {
    m.emplace_back(p.shape());
    v.emplace_back(p.shape());
  }
}

template <typename T>
void adam_step(std::span<const Var<T>> params, std::span<const Tensor<T>> grads, AdamState<T>& state,
               std::span<const std::string> names) {
  if (params.size() != grads.size() || params.size() != state.m.size() || params.size() != state.v.size()) {
    throw std::invalid_argument("adam_step: parameter, gradient and state counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string name = i < names.size() ? names[i] : "parameter #" + std::to_string(i);
    if (params[i].shape() != grads[i].shape() || params[i].shape() != state.m[i].shape()) {
      throw ShapeError("adam_step: shape mismatch for " + name);
    }
    if (!grads[i].all_finite()) throw std::domain_error("adam_step: non-finite gradient for " + name);
  }

  const auto& cfg = state.config;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(cfg.beta1, t);
  const double bias2 = 1.0 - std::pow(cfg.beta2, t);
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T lr = static_cast<T>(cfg.lr), eps = static_cast<T>(cfg.epsilon);
  const T inv_bias1 = static_cast<T>(1.0 / bias1), inv_bias2 = static_cast<T>(1.0 / bias2);

  for (std::size_t i = 0; i < params.size(); ++i) {
    Var<T> param = params[i];
    auto p = param.mutable_value().data();
    auto g = grads[i].data();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = b1 * m[j] + (T{1} - b1) * g[j];
      v[j] = b2 * v[j] + (T{1} - b2) * g[j] * g[j];
      const T m_hat = m[j] * inv_bias1;
      const T v_hat = v[j] * inv_bias2;
      p[j] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step(std::span<const Var<float>>, std::span<const Tensor<float>>, AdamState<float>&,
                        std::span<const std::string>);
template void adam_step(std::span<const Var<double>>, std::span<const Tensor<double>>, AdamState<double>&,
                        std::span<const std::string>);

}  // namespace pgf::ad
