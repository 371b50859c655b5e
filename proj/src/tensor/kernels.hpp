#pragma once

// Non-differentiable array kernels backing the ops in ops.cpp.

#include <array>
#include <cstddef>
#include <vector>

#include "pgf/tensor/ops.hpp"
#include "pgf/tensor/tensor.hpp"

namespace pgf::kernels {

template <typename T, typename F>
Tensor<T> map(const Tensor<T>& x, F f) {
  Tensor<T> out(x.shape());
  auto src = x.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return out;
}

// Strides of `shape` right-aligned onto an output of rank `rank`, with zero
// stride on broadcast dimensions.
std::vector<std::size_t> broadcast_strides(const Shape& shape, const Shape& out);

// Walks a dense row-major iteration space of `shape` after merging adjacent
// dimensions that every operand traverses contiguously. For each innermost
// row, calls fn(out_offset, operand_offsets, row_length, operand_inner_strides).
template <std::size_t K, typename Fn>
void for_each_row(const Shape& shape, std::array<std::vector<std::size_t>, K> strides, Fn fn) {
  Shape dims;
  std::array<std::vector<std::size_t>, K> st;
  for (std::size_t d = 0; d < shape.size(); ++d) {
    if (shape[d] == 1) continue;
    bool merge = !dims.empty();
    for (std::size_t k = 0; k < K && merge; ++k) merge = st[k].back() == strides[k][d] * shape[d];
    if (merge) {
      dims.back() *= shape[d];
      for (std::size_t k = 0; k < K; ++k) st[k].back() = strides[k][d];
    } else {
      dims.push_back(shape[d]);
      for (std::size_t k = 0; k < K; ++k) st[k].push_back(strides[k][d]);
    }
  }
  if (dims.empty()) {
    dims.push_back(1);
    for (std::size_t k = 0; k < K; ++k) st[k].push_back(0);
  }
  const std::size_t rank = dims.size();
  const std::size_t len = dims.back();
  std::array<std::size_t, K> inner{}, off{};
  for (std::size_t k = 0; k < K; ++k) inner[k] = st[k].back();
  std::size_t rows = 1;
  for (std::size_t d = 0; d + 1 < rank; ++d) rows *= dims[d];
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    fn(r * len, off.data(), len, inner.data());
    for (std::size_t d = rank - 1; d-- > 0;) {
      if (++idx[d] < dims[d]) {
        for (std::size_t k = 0; k < K; ++k) off[k] += st[k][d];
        break;
      }
      for (std::size_t k = 0; k < K; ++k) off[k] -= st[k][d] * (dims[d] - 1);
      idx[d] = 0;
    }
  }
}

template <typename T, typename F>
Tensor<T> zip(const Tensor<T>& a, const Tensor<T>& b, F f) {
  if (a.shape() == b.shape()) {
    Tensor<T> out(a.shape());
    auto pa = a.data(), pb = b.data();
    auto po = out.data();
    for (std::size_t i = 0; i < po.size(); ++i) po[i] = f(pa[i], pb[i]);
    return out;
  }
  const Shape shape = ad::broadcast_shape(a.shape(), b.shape());
  Tensor<T> out(shape);
  auto po = out.data();
  if (b.size() == 1 && shape == a.shape()) {
    const T bv = b[0];
    auto pa = a.data();
    for (std::size_t i = 0; i < po.size(); ++i) po[i] = f(pa[i], bv);
    return out;
  }
  if (a.size() == 1 && shape == b.shape()) {
    const T av = a[0];
    auto pb = b.data();
    for (std::size_t i = 0; i < po.size(); ++i) po[i] = f(av, pb[i]);
    return out;
  }
  const auto sa = broadcast_strides(a.shape(), shape);
  const auto sb = broadcast_strides(b.shape(), shape);
  auto pa = a.data(), pb = b.data();
  for_each_row<2>(shape, {sa, sb}, [&](std::size_t out_off, const std::size_t* off, std::size_t len,
                                    const std::size_t* inner) {
    const T* ra = pa.data() + off[0];
    const T* rb = pb.data() + off[1];
    T* ro = po.data() + out_off;
    const std::size_t ia = inner[0], ib = inner[1];
    if (ia == 1 && ib == 0) {
      const T bv = *rb;
      for (std::size_t j = 0; j < len; ++j) ro[j] = f(ra[j], bv);
    } else if (ia == 0 && ib == 1) {
      const T av = *ra;
      for (std::size_t j = 0; j < len; ++j) ro[j] = f(av, rb[j]);
    } else {
      for (std::size_t j = 0; j < len; ++j) ro[j] = f(ra[j * ia], rb[j * ib]);
    }
  });
  return out;
}

template <typename T> Tensor<T> sum_to(const Tensor<T>& x, const Shape& shape);
template <typename T> Tensor<T> broadcast_to(const Tensor<T>& x, const Shape& shape);
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> transpose(const Tensor<T>& x);

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, ad::ConvGeometry geo);
template <typename T>
Tensor<T> conv2d_input_grad(const Tensor<T>& g, const Tensor<T>& w, ad::ConvGeometry geo,
                            std::size_t h, std::size_t wd);
template <typename T>
Tensor<T> conv2d_weight_grad(const Tensor<T>& x, const Tensor<T>& g, ad::ConvGeometry geo,
                             std::size_t k);

template <typename T> Tensor<T> upsample_nearest2x(const Tensor<T>& x);
template <typename T> Tensor<T> avgpool2x(const Tensor<T>& x);
template <typename T> Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::size_t begin, std::size_t count);
template <typename T>
Tensor<T> pad_channels(const Tensor<T>& x, std::size_t begin, std::size_t total);

template <typename T>
Tensor<T> slice_batch(const Tensor<T>& x, std::size_t index) {
  Shape shape = x.shape();
  const std::size_t per = x.size() / shape[0];
  shape[0] = 1;
  std::vector<T> data(x.data().begin() + index * per, x.data().begin() + (index + 1) * per);
  return Tensor<T>(std::move(shape), std::move(data));
}

}  // namespace pgf::kernels
