#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pgf/tensor/autograd.hpp"

namespace pgf::ad {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.0;
  double beta2 = 0.99;
  double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
  AdamConfig config;
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  std::int64_t step = 0;

  AdamState() = default;
  AdamState(AdamConfig cfg, std::span<const Var<T>> params);
};

// One bias-corrected Adam update applied in place to the leaf parameters.
// Throws std::domain_error naming the parameter when a gradient is not finite;
// in that case no parameter or moment is modified.
template <typename T>
void adam_step(std::span<const Var<T>> params, std::span<const Tensor<T>> grads, AdamState<T>& state,
               std::span<const std::string> names = {});

extern template struct AdamState<float>;
extern template struct AdamState<double>;

}  // namespace pgf::ad
