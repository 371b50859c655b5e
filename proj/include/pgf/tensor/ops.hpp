#pragma once

#include "pgf/tensor/autograd.hpp"

// Differentiable operations. Every backward is itself expressed with these
// ops, so gradients taken with create_graph can be differentiated once more.
//
// Binary elementwise ops broadcast numpy-style (shapes right-aligned, size-1
// dimensions stretch). Image tensors are NCHW.
namespace pgf::ad {

inline constexpr double kLeakySlope = 0.2;
inline constexpr double kPixelNormEpsilon = 1e-8;
inline constexpr double kStddevEpsilon = 1e-8;

Shape broadcast_shape(const Shape& a, const Shape& b);

template <typename T> Var<T> constant(Tensor<T> value) { return Var<T>(std::move(value)); }
template <typename T> Var<T> zeros_like(const Var<T>& x) { return Var<T>(Tensor<T>(x.shape())); }

template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> div(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> neg(const Var<T>& x);
template <typename T> Var<T> scale(const Var<T>& x, double factor);
template <typename T> Var<T> add_scalar(const Var<T>& x, double offset);

template <typename T> Var<T> square(const Var<T>& x);
// Gradient at 0 is taken as 0 so that norms of all-zero vectors stay finite.
template <typename T> Var<T> sqrt(const Var<T>& x);
template <typename T> Var<T> exp(const Var<T>& x);
// Requires strictly positive input.
template <typename T> Var<T> log(const Var<T>& x);
template <typename T> Var<T> sigmoid(const Var<T>& x);
template <typename T> Var<T> tanh(const Var<T>& x);
template <typename T> Var<T> leaky_relu(const Var<T>& x, double slope = kLeakySlope);
// Gradient passes where lo <= x <= hi and is zero outside.
template <typename T> Var<T> clamp(const Var<T>& x, double lo, double hi);

// Reductions run sequentially in row-major order.
template <typename T> Var<T> sum(const Var<T>& x);
template <typename T> Var<T> mean(const Var<T>& x);
// Sums broadcast dimensions away so the result has `shape`.
template <typename T> Var<T> sum_to(const Var<T>& x, const Shape& shape);
template <typename T> Var<T> broadcast_to(const Var<T>& x, const Shape& shape);
template <typename T> Var<T> reshape(const Var<T>& x, const Shape& shape);

// 2-D only.
template <typename T> Var<T> matmul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> transpose(const Var<T>& x);
// x: [N, in], weight: [out, in], bias: [out] (may be undefined).
template <typename T> Var<T> dense(const Var<T>& x, const Var<T>& weight, const Var<T>& bias);

struct ConvGeometry {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

// input [N,C,H,W], weight [O,C,K,K], bias [O] (may be undefined).
// Output side is floor((H + 2*padding - K)/stride) + 1.
template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias, ConvGeometry geo = {});
// Adjoint of conv2d with respect to its input (a transposed convolution).
// `input_hw` is the spatial size of the conv2d input being recovered.
template <typename T>
Var<T> conv2d_input_grad(const Var<T>& grad_out, const Var<T>& weight, ConvGeometry geo,
                         std::size_t input_h, std::size_t input_w);
// Adjoint of conv2d with respect to its weight.
template <typename T>
Var<T> conv2d_weight_grad(const Var<T>& input, const Var<T>& grad_out, ConvGeometry geo,
                          std::size_t kernel);
// Transposed convolution used as an upsampling layer; weight [C_in, C_out, K, K].
template <typename T>
Var<T> conv_transpose2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias,
                        ConvGeometry geo, std::size_t output_h, std::size_t output_w);

template <typename T> Var<T> upsample_nearest2x(const Var<T>& x);
// Requires even H and W.
template <typename T> Var<T> avgpool2x(const Var<T>& x);

template <typename T> Var<T> concat_channels(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> slice_channels(const Var<T>& x, std::size_t begin, std::size_t count);
// Places x at channel offset `begin` of a zero tensor with `total` channels.
template <typename T> Var<T> pad_channels(const Var<T>& x, std::size_t begin, std::size_t total);

// x / sqrt(mean_c(x^2) + 1e-8) per pixel.
template <typename T> Var<T> pixelwise_feature_norm(const Var<T>& x);
// Appends one channel holding the batch-wide mean of per-feature standard
// deviations. The stddev is sqrt(var + eps) - sqrt(eps), so a batch of
// identical images maps to exactly zero while the gradient stays finite.
template <typename T> Var<T> minibatch_stddev_feature(const Var<T>& x);

// log-softmax over the last axis of a [N, K] tensor.
template <typename T> Var<T> log_softmax(const Var<T>& logits);

template <typename T> Var<T> operator+(const Var<T>& a, const Var<T>& b) { return add(a, b); }
template <typename T> Var<T> operator-(const Var<T>& a, const Var<T>& b) { return sub(a, b); }
template <typename T> Var<T> operator*(const Var<T>& a, const Var<T>& b) { return mul(a, b); }
template <typename T> Var<T> operator/(const Var<T>& a, const Var<T>& b) { return div(a, b); }
template <typename T> Var<T> operator-(const Var<T>& x) { return neg(x); }

}  // namespace pgf::ad
