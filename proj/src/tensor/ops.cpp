#include "pgf/tensor/ops.hpp"

#include <algorithm>
#include <cmath>

#include "kernels.hpp"

namespace pgf::ad {

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < a.size() ? a[a.size() - 1 - i] : 1;
    const std::size_t db = i < b.size() ? b[b.size() - 1 - i] : 1;
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("shapes " + to_string(a) + " and " + to_string(b) + " do not broadcast");
    }
    out[rank - 1 - i] = std::max(da, db);
  }
  return out;
}

namespace {

template <typename T>
using Grads = std::vector<Var<T>>;

template <typename T>
Var<T> reduce_like(const Var<T>& g, const Shape& shape) {
  return g.shape() == shape ? g : sum_to(g, shape);
}

// 0.5 / sqrt(x), defined as 0 at x == 0. Its own derivative is recorded as
// a constant factor, which is exact up to second order.
template <typename T>
Var<T> sqrt_grad_factor(const Var<T>& x) {
  auto value = kernels::map(x.value(), [](T v) { return v > T{0} ? T(0.5) / std::sqrt(v) : T{0}; });
  return make_result<T>(std::move(value), {x}, "sqrt_grad_factor",
                        [x](const Var<T>& g, const std::vector<bool>&) -> Grads<T> {
                          auto d = kernels::map(x.value(), [](T v) {
                            return v > T{0} ? T(-0.25) / (v * std::sqrt(v)) : T{0};
                          });
                          return {mul(g, constant(std::move(d)))};
                        });
}

template <typename T>
void require_rank4(const Var<T>& x, const char* what) {
  if (x.shape().size() != 4) {
    throw ShapeError(std::string(what) + " expects NCHW input, got " + to_string(x.shape()));
  }
}

}  // namespace

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  auto value = kernels::zip(a.value(), b.value(), [](T x, T y) { return x + y; });
  return make_result<T>(std::move(value), {a, b}, "add",
                        [a, b](const Var<T>& g, const std::vector<bool>& need) -> Grads<T> {
                          Grads<T> out(2);
                          if (need[0]) out[0] = reduce_like(g, a.shape());
                          if (need[1]) out[1] = reduce_like(g, b.shape());
                          return out;
                        });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  auto value = kernels::zip(a.value(), b.value(), [](T x, T y) { return x - y; });
  return make_result<T>(std::move(value), {a, b}, "sub",
                        [a, b](const Var<T>& g, const std::vector<bool>& need) -> Grads<T> {
                          Grads<T> out(2);
                          if (need[0]) out[0] = reduce_like(g, a.shape());
                          if (need[1]) out[1] = reduce_like(neg(g), b.shape());
                          return out;
                        });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  auto value = kernels::zip(a.value(), b.value(), [](T x, T y) { return x * y; });
  return make_result<T>(std::move(value), {a, b}, "mul",
                        [a, b](const Var<T>& g, const std::vector<bool>& need) -> Grads<T> {
                          Grads<T> out(2);
                          if (need[0]) out[0] = reduce_like(mul(g, b), a.shape());
                          if (need[1]) out[1] = reduce_like(mul(g, a), b.shape());
                          return out;
                        });
}

template <typename T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
  auto value = kernels::zip(a.value(), b.value(), [](T x, T y) { return x / y; });
  return make_result<T>(std::move(value), {a, b}, "div",
                        [a, b](const Var<T>& g, const std::vector<bool>& need) -> Grads<T> {
                          Grads<T> out(2);
                          if (need[0]) out[0] = reduce_like(div(g, b), a.shape());
                          if (need[1]) out[1] = reduce_like(neg(div(mul(g, a), square(b))), b.shape());
                          return out;
                        });
}

template <typename T>
Var<T> neg(const Var<T>& x) {
  return make_result<T>(kernels::map(x.value(), [](T v) { return -v; }), {x}, "neg",
                        [](const Var<T>& g, const std::vector<bool>&) -> Grads<T> { return {neg(g)}; });
}

template <typename T>
Var<T> scale(const Var<T>& x, double factor) {
  const T f = static_cast<T>(factor);
  return make_result<T>(kernels::map(x.value(), [f](T v) { return v * f; }), {x}, "scale",
                        [factor](const Var<T>& g, const std::vector<bool>&) -> Grads<T> {
                          return {scale(g, factor)};
                        });
}

template <typename T>
Var<T> add_scalar(const Var<T>& x, double offset) {
  const T c = static_cast<T>(offset);
  return make_result<T>(kernels::map(x.value(), [c](T v) { return v + c; }), {x}, "add_scalar",
                        [](const Var<T>& g, const std::vector<bool>&) -> Grads<T> { return {g}; });
}

template <typename T>
Var<T> square(const Var<T>& x) {
  return make_result<T>(kernels::map(x.value(), [](T v) { return v * v; }), {x}, "square",
                        [x](const Var<T>& g, const std::vector<bool>&) -> Grads<T> {
                          return {mul(g, scale(x, 2.0))};
                        });
}

template <typename T>
Var<T> sqrt(const Var<T>& x) {
  auto value = kernels::map(x.value(), [](T v) {
    if (v < T{0}) throw std::domain_error("sqrt of negative value");
    return std::sqrt(v);
  });
  return make_result<T>(std::move(value), {x}, "sqrt",
                        [x](const Var<T>& g, const std::vector<bool>&) -> Grads<T> {
                          return {mul(g, sqrt_grad_factor(x))};
                        });
}

template <typename T>
Var<T> exp(const Var<T>& x) {
  return make_result<T>(kernels::map(x.value(), [](T v) { return std::exp(v); }), {x}, "exp",
                        [x](const Var<T>& g, const std::vector<bool>&) -> Grads<T> {
                          return {mul(g, exp(x))};
                        });
}

template <typename T>
Var<T> log(const Var<T>& x) {
  auto value = kernels::map(x.value(), [](T v) {
    if (!(v > T{0})) throw std::domain_error("log of non-positive value");
    return std::log(v);
  });
  return make_result<T>(std::move(value), {x}, "log",
                        [x](const Var<T>& g, const std::vector<bool>&) -> Grads<T> { return {div(g, x)}; });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  auto value = kernels::map(x.value(), [](T v) {
    return v >= T{0} ? T{1} / (T{1} + std::exp(-v)) : std::exp(v) / (T{1} + std::exp(v));
  });
  return make_result<T>(std::move(value), {x}, "sigmoid",
                        [x](const Var<T>& g, const std::vector<bool>&) -> Grads<T> {
                          auto s = sigmoid(x);
                          return {mul(g, mul(s, add_scalar(neg(s), 1.0)))};
                        });
}

template <typename T>
Var<T> tanh(const Var<T>& x) {
  return make_result<T>(kernels::map(x.value(), [](T v) { return std::tanh(v); }), {x}, "tanh",
                        [x](const Var<T>& g, const std::vector<bool>&) -> Grads<T> {
                          auto t = tanh(x);
                          return {mul(g, add_scalar(neg(square(t)), 1.0))};
                        });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& x, double slope) {
  const T s = static_cast<T>(slope);
  // Branch-free forms; max(v, s*v) equals the leaky map for 0 <= s <= 1.
  const bool small = slope >= 0.0 && slope <= 1.0;
  auto value = small ? kernels::map(x.value(), [s](T v) { return std::max(v, v * s); })
                     : kernels::map(x.value(), [s](T v) { return v > T{0} ? v : v * s; });
  return make_result<T>(std::move(value), {x},
                        "leaky_relu", [x, s](const Var<T>& g, const std::vector<bool>&) -> Grads<T> {
                          const T rise = T{1} - s;
                          auto mask = kernels::map(x.value(), [s, rise](T v) { return s + rise * T(v > T{0}); });
                          return {mul(g, constant(std::move(mask)))};
                        });
}

template <typename T>
Var<T> clamp(const Var<T>& x, double lo, double hi) {
  if (!(lo <= hi)) throw std::invalid_argument("clamp bounds out of order");
  const T l = static_cast<T>(lo), h = static_cast<T>(hi);
  return make_result<T>(kernels::map(x.value(), [l, h](T v) { return std::min(std::max(v, l), h); }), {x},
                        "clamp", [x, l, h](const Var<T>& g, const std::vector<bool>&) -> Grads<T> {
                          auto mask = kernels::map(x.value(), [l, h](T v) { return v >= l && v <= h ? T{1} : T{0}; });
                          return {mul(g, constant(std::move(mask)))};
                        });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  return make_result<T>(kernels::sum_to(x.value(), Shape{1}), {x}, "sum",
                        [x](const Var<T>& g, const std::vector<bool>&) -> Grads<T> {
                          return {broadcast_to(g, x.shape())};
                        });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

template <typename T>
Var<T> sum_to(const Var<T>& x, const Shape& shape) {
  if (x.shape() == shape) return x;
  return make_result<T>(kernels::sum_to(x.value(), shape), {x}, "sum_to",
                        [x](const Var<T>& g, const std::vector<bool>&) -> Grads<T> {
                          return {broadcast_to(g, x.shape())};
                        });
}

template <typename T>
Var<T> broadcast_to(const Var<T>& x, const Shape& shape) {
  if (x.shape() == shape) return x;
  return make_result<T>(kernels::broadcast_to(x.value(), shape), {x}, "broadcast_to",
                        [x](const Var<T>& g, const std::vector<bool>&) -> Grads<T> {
                          return {sum_to(g, x.shape())};
                        });
}

template <typename T>
Var<T> reshape(const Var<T>& x, const Shape& shape) {
  if (x.shape() == shape) return x;
  return make_result<T>(x.value().reshaped(shape), {x}, "reshape",
                        [x](const Var<T>& g, const std::vector<bool>&) -> Grads<T> {
                          return {reshape(g, x.shape())};
                        });
}

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  return make_result<T>(kernels::matmul(a.value(), b.value()), {a, b}, "matmul",
                        [a, b](const Var<T>& g, const std::vector<bool>& need) -> Grads<T> {
                          Grads<T> out(2);
                          if (need[0]) out[0] = matmul(g, transpose(b));
                          if (need[1]) out[1] = matmul(transpose(a), g);
                          return out;
                        });
}

template <typename T>
Var<T> transpose(const Var<T>& x) {
  return make_result<T>(kernels::transpose(x.value()), {x}, "transpose",
                        [](const Var<T>& g, const std::vector<bool>&) -> Grads<T> { return {transpose(g)}; });
}

template <typename T>
Var<T> dense(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  if (x.shape().size() != 2 || weight.shape().size() != 2 || x.shape()[1] != weight.shape()[1]) {
    throw ShapeError("dense: input " + to_string(x.shape()) + " incompatible with weight " +
                     to_string(weight.shape()));
  }
  auto y = matmul(x, transpose(weight));
  if (!bias.defined()) return y;
  if (bias.shape() != Shape{weight.shape()[0]}) {
    throw ShapeError("dense: bias shape " + to_string(bias.shape()) + " for weight " + to_string(weight.shape()));
  }
  return add(y, bias);
}

namespace {

template <typename T>
Var<T> add_channel_bias(const Var<T>& y, const Var<T>& bias) {
  if (!bias.defined()) return y;
  if (bias.shape() != Shape{y.shape()[1]}) {
    throw ShapeError("bias shape " + to_string(bias.shape()) + " does not match " + std::to_string(y.shape()[1]) +
                     " output channels");
  }
  return add(y, reshape(bias, Shape{y.shape()[1], 1, 1}));
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias, ConvGeometry geo) {
  auto value = kernels::conv2d(input.value(), weight.value(), geo);
  auto y = make_result<T>(
      std::move(value), {input, weight}, "conv2d",
      [input, weight, geo](const Var<T>& g, const std::vector<bool>& need) -> Grads<T> {
        Grads<T> out(2);
        if (need[0]) out[0] = conv2d_input_grad(g, weight, geo, input.shape()[2], input.shape()[3]);
        if (need[1]) out[1] = conv2d_weight_grad(input, g, geo, weight.shape()[2]);
        return out;
      });
  return add_channel_bias(y, bias);
}

template <typename T>
Var<T> conv2d_input_grad(const Var<T>& grad_out, const Var<T>& weight, ConvGeometry geo,
                         std::size_t input_h, std::size_t input_w) {
  auto value = kernels::conv2d_input_grad(grad_out.value(), weight.value(), geo, input_h, input_w);
  return make_result<T>(std::move(value), {grad_out, weight}, "conv2d_input_grad",
                        [grad_out, weight, geo](const Var<T>& g, const std::vector<bool>& need) -> Grads<T> {
                          Grads<T> out(2);
                          if (need[0]) out[0] = conv2d(g, weight, Var<T>{}, geo);
                          if (need[1]) out[1] = conv2d_weight_grad(g, grad_out, geo, weight.shape()[2]);
                          return out;
                        });
}

template <typename T>
Var<T> conv2d_weight_grad(const Var<T>& input, const Var<T>& grad_out, ConvGeometry geo,
                          std::size_t kernel) {
  auto value = kernels::conv2d_weight_grad(input.value(), grad_out.value(), geo, kernel);
  return make_result<T>(std::move(value), {input, grad_out}, "conv2d_weight_grad",
                        [input, grad_out, geo](const Var<T>& g, const std::vector<bool>& need) -> Grads<T> {
                          Grads<T> out(2);
                          if (need[0])
                            out[0] = conv2d_input_grad(grad_out, g, geo, input.shape()[2], input.shape()[3]);
                          if (need[1]) out[1] = conv2d(input, g, Var<T>{}, geo);
                          return out;
                        });
}

template <typename T>
Var<T> conv_transpose2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias,
                        ConvGeometry geo, std::size_t output_h, std::size_t output_w) {
  return add_channel_bias(conv2d_input_grad(input, weight, geo, output_h, output_w), bias);
}

template <typename T>
Var<T> upsample_nearest2x(const Var<T>& x) {
  return make_result<T>(kernels::upsample_nearest2x(x.value()), {x}, "upsample_nearest2x",
                        [](const Var<T>& g, const std::vector<bool>&) -> Grads<T> {
                          return {scale(avgpool2x(g), 4.0)};
                        });
}

template <typename T>
Var<T> avgpool2x(const Var<T>& x) {
  return make_result<T>(kernels::avgpool2x(x.value()), {x}, "avgpool2x",
                        [](const Var<T>& g, const std::vector<bool>&) -> Grads<T> {
                          return {scale(upsample_nearest2x(g), 0.25)};
                        });
}

template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  return make_result<T>(kernels::concat_channels(a.value(), b.value()), {a, b}, "concat_channels",
                        [a, b](const Var<T>& g, const std::vector<bool>& need) -> Grads<T> {
                          Grads<T> out(2);
                          const std::size_t ca = a.shape()[1], cb = b.shape()[1];
                          if (need[0]) out[0] = slice_channels(g, 0, ca);
                          if (need[1]) out[1] = slice_channels(g, ca, cb);
                          return out;
                        });
}

template <typename T>
Var<T> slice_channels(const Var<T>& x, std::size_t begin, std::size_t count) {
  return make_result<T>(kernels::slice_channels(x.value(), begin, count), {x}, "slice_channels",
                        [x, begin](const Var<T>& g, const std::vector<bool>&) -> Grads<T> {
                          return {pad_channels(g, begin, x.shape()[1])};
                        });
}

template <typename T>
Var<T> pad_channels(const Var<T>& x, std::size_t begin, std::size_t total) {
  return make_result<T>(kernels::pad_channels(x.value(), begin, total), {x}, "pad_channels",
                        [x, begin](const Var<T>& g, const std::vector<bool>&) -> Grads<T> {
                          return {slice_channels(g, begin, x.shape()[1])};
                        });
}

template <typename T>
Var<T> pixelwise_feature_norm(const Var<T>& x) {
  require_rank4(x, "pixelwise_feature_norm");
  const Shape& s = x.shape();
  auto mean_sq = scale(sum_to(square(x), Shape{s[0], 1, s[2], s[3]}), 1.0 / static_cast<double>(s[1]));
  return div(x, sqrt(add_scalar(mean_sq, kPixelNormEpsilon)));
}

template <typename T>
Var<T> minibatch_stddev_feature(const Var<T>& x) {
  require_rank4(x, "minibatch_stddev_feature");
  const Shape& s = x.shape();
  const Shape per_feature{1, s[1], s[2], s[3]};
  const double inv_n = 1.0 / static_cast<double>(s[0]);
  // Shifting by the first sample (a constant; variance is shift invariant)
  // makes the deviations of identical samples exactly zero.
  auto first = kernels::slice_batch(x.value(), 0);
  auto shifted = sub(x, constant(std::move(first)));
  auto mu = scale(sum_to(shifted, per_feature), inv_n);
  auto var = scale(sum_to(square(sub(shifted, mu)), per_feature), inv_n);
  const double floor = static_cast<double>(std::sqrt(static_cast<T>(kStddevEpsilon)));
  auto sd = add_scalar(sqrt(add_scalar(var, kStddevEpsilon)), -floor);
  auto feature = broadcast_to(reshape(mean(sd), Shape{1, 1, 1, 1}), Shape{s[0], 1, s[2], s[3]});
  return concat_channels(x, feature);
}

template <typename T>
Var<T> log_softmax(const Var<T>& logits) {
  if (logits.shape().size() != 2) throw ShapeError("log_softmax expects [N, K], got " + to_string(logits.shape()));
  const std::size_t n = logits.shape()[0], k = logits.shape()[1];
  Tensor<T> row_max(Shape{n, 1});
  for (std::size_t i = 0; i < n; ++i) {
    T m = logits.value()[i * k];
    for (std::size_t j = 1; j < k; ++j) m = std::max(m, logits.value()[i * k + j]);
    row_max[i] = m;
  }
  auto shifted = sub(logits, constant(std::move(row_max)));
  auto lse = log(sum_to(exp(shifted), Shape{n, 1}));
  return sub(shifted, lse);
}

#define PGF_INSTANTIATE(T)                                                                           \
  template Var<T> add(const Var<T>&, const Var<T>&);                                                 \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                                 \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                                 \
  template Var<T> div(const Var<T>&, const Var<T>&);                                                 \
  template Var<T> neg(const Var<T>&);                                                                \
  template Var<T> scale(const Var<T>&, double);                                                      \
  template Var<T> add_scalar(const Var<T>&, double);                                                 \
  template Var<T> square(const Var<T>&);                                                             \
  template Var<T> sqrt(const Var<T>&);                                                               \
  template Var<T> exp(const Var<T>&);                                                                \
  template Var<T> log(const Var<T>&);                                                                \
  template Var<T> sigmoid(const Var<T>&);                                                            \
  template Var<T> clamp(const Var<T>&, double, double);                                              \
  template Var<T> tanh(const Var<T>&);                                                               \
  template Var<T> leaky_relu(const Var<T>&, double);                                                 \
  template Var<T> sum(const Var<T>&);                                                                \
  template Var<T> mean(const Var<T>&);                                                               \
  template Var<T> sum_to(const Var<T>&, const Shape&);                                               \
  template Var<T> broadcast_to(const Var<T>&, const Shape&);                                         \
  template Var<T> reshape(const Var<T>&, const Shape&);                                              \
  template Var<T> matmul(const Var<T>&, const Var<T>&);                                              \
  template Var<T> transpose(const Var<T>&);                                                          \
  template Var<T> dense(const Var<T>&, const Var<T>&, const Var<T>&);                                \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, ConvGeometry);                 \
  template Var<T> conv2d_input_grad(const Var<T>&, const Var<T>&, ConvGeometry, std::size_t,         \
                                    std::size_t);                                                    \
  template Var<T> conv2d_weight_grad(const Var<T>&, const Var<T>&, ConvGeometry, std::size_t);       \
  template Var<T> conv_transpose2d(const Var<T>&, const Var<T>&, const Var<T>&, ConvGeometry,        \
                                   std::size_t, std::size_t);                                        \
  template Var<T> upsample_nearest2x(const Var<T>&);                                                 \
  template Var<T> avgpool2x(const Var<T>&);                                                          \
  template Var<T> concat_channels(const Var<T>&, const Var<T>&);                                     \
  template Var<T> slice_channels(const Var<T>&, std::size_t, std::size_t);                           \
  template Var<T> pad_channels(const Var<T>&, std::size_t, std::size_t);                             \
  template Var<T> pixelwise_feature_norm(const Var<T>&);                                             \
  template Var<T> minibatch_stddev_feature(const Var<T>&);                                           \
  template Var<T> log_softmax(const Var<T>&);

PGF_INSTANTIATE(float)
PGF_INSTANTIATE(double)
#undef PGF_INSTANTIATE

}  // namespace pgf::ad
