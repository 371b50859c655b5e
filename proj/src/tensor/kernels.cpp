#include "kernels.hpp"

#include <Eigen/Core>

namespace pgf::kernels {

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const RowMatrix<T>>;
template <typename T>
using MutMap = Eigen::Map<RowMatrix<T>>;

struct ConvDims {
  std::size_t n, c, h, w, o, k, oh, ow;
  std::size_t stride, pad;
  std::size_t patch() const { return c * k * k; }
  std::size_t cols() const { return n * oh * ow; }
};

void require_rank4(const Shape& s, const char* what) {
  if (s.size() != 4) throw ShapeError(std::string(what) + " must be rank-4 NCHW, got " + to_string(s));
}

ConvDims conv_dims(const Shape& x, const Shape& w, ad::ConvGeometry geo) {
  require_rank4(x, "conv2d input");
  require_rank4(w, "conv2d weight");
  if (geo.stride < 1) throw ShapeError("conv2d stride must be >= 1");
  if (w[2] != w[3]) throw ShapeError("conv2d kernel must be square, got " + to_string(w));
  if (w[1] != x[1]) {
    throw ShapeError("conv2d channel mismatch: input " + to_string(x) + " weight " + to_string(w));
  }
  const std::size_t k = w[2];
  if (x[2] + 2 * geo.padding < k || x[3] + 2 * geo.padding < k) {
    throw ShapeError("conv2d kernel " + std::to_string(k) + " does not fit input " + to_string(x) +
                     " with padding " + std::to_string(geo.padding));
  }
  ConvDims d{x[0], x[1], x[2], x[3], w[0], k, 0, 0, geo.stride, geo.padding};
  d.oh = (d.h + 2 * d.pad - k) / d.stride + 1;
  d.ow = (d.w + 2 * d.pad - k) / d.stride + 1;
  return d;
}

// Output columns ox whose input column ox*s - p + kj lies inside [0, w).
struct ColumnRange {
  std::size_t lo, hi;
};

inline ColumnRange valid_range(std::size_t out, std::size_t in, std::size_t stride, std::size_t pad,
                               std::size_t offset) {
  // need 0 <= o*stride + offset - pad < in
  std::size_t lo = 0;
  if (offset < pad) lo = (pad - offset + stride - 1) / stride;
  std::size_t hi = 0;
  if (in + pad > offset) hi = std::min(out, (in + pad - offset - 1) / stride + 1);
  return {std::min(lo, hi), hi};
}

// One sample: cols[(c*K + ki)*K + kj][oy*OW + ox] = x[n][c][oy*s - p + ki][ox*s - p + kj].
// Padding positions are never written, so a zeroed buffer can be reused across samples.
template <typename T>
void im2col(const T* plane0, const ConvDims& d, T* cols) {
  const std::size_t p = d.oh * d.ow;
  for (std::size_t c = 0; c < d.c; ++c) {
    const T* plane = plane0 + c * d.h * d.w;
    for (std::size_t ki = 0; ki < d.k; ++ki) {
      const ColumnRange ry = valid_range(d.oh, d.h, d.stride, d.pad, ki);
      for (std::size_t kj = 0; kj < d.k; ++kj) {
        const ColumnRange rx = valid_range(d.ow, d.w, d.stride, d.pad, kj);
        T* dst = cols + ((c * d.k + ki) * d.k + kj) * p;
        for (std::size_t oy = ry.lo; oy < ry.hi; ++oy) {
          const T* src = plane + (oy * d.stride + ki - d.pad) * d.w + kj - d.pad;
          T* out = dst + oy * d.ow;
          if (d.stride == 1) {
            std::copy(src + rx.lo, src + rx.hi, out + rx.lo);
          } else {
            for (std::size_t ox = rx.lo; ox < rx.hi; ++ox) out[ox] = src[ox * d.stride];
          }
        }
      }
    }
  }
}

// Adjoint of im2col for one sample: accumulates into plane0.
template <typename T>
void col2im(const T* cols, const ConvDims& d, T* plane0) {
  const std::size_t p = d.oh * d.ow;
  for (std::size_t c = 0; c < d.c; ++c) {
    T* plane = plane0 + c * d.h * d.w;
    for (std::size_t ki = 0; ki < d.k; ++ki) {
      const ColumnRange ry = valid_range(d.oh, d.h, d.stride, d.pad, ki);
      for (std::size_t kj = 0; kj < d.k; ++kj) {
        const ColumnRange rx = valid_range(d.ow, d.w, d.stride, d.pad, kj);
        const T* src = cols + ((c * d.k + ki) * d.k + kj) * p;
        for (std::size_t oy = ry.lo; oy < ry.hi; ++oy) {
          T* dst = plane + (oy * d.stride + ki - d.pad) * d.w + kj - d.pad;
          const T* in = src + oy * d.ow;
          for (std::size_t ox = rx.lo; ox < rx.hi; ++ox) dst[ox * d.stride] += in[ox];
        }
      }
    }
  }
}

// 1x1 stride-1 unpadded convolutions need no column buffer.
bool is_pointwise(const ConvDims& d) { return d.k == 1 && d.stride == 1 && d.pad == 0; }

// Stride-1 convolutions skip the column buffer: the padded input is laid out
// with row width Wp = W + 2p, so every kernel tap (ki, kj) reads a contiguous
// window at offset ki*Wp + kj and the output is produced on an OH x Wp grid
// whose last k-1 columns per row are discarded.
bool use_shifted(const ConvDims& d) { return d.stride == 1 && d.k > 1; }

template <typename T>
using StridedMap = Eigen::Map<const RowMatrix<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using MutStridedMap = Eigen::Map<RowMatrix<T>, 0, Eigen::OuterStride<>>;

struct ShiftedLayout {
  std::size_t wp, hp, plane, grid;  // plane includes k slack so the last taps stay in bounds
  explicit ShiftedLayout(const ConvDims& d)
      : wp(d.w + 2 * d.pad), hp(d.h + 2 * d.pad), plane(hp * wp + d.k), grid(d.oh * wp) {}
};

// [O, C*K*K] -> K*K contiguous [O, C] blocks (transposed to [C, O] if requested).
template <typename T>
std::vector<T> split_taps(const Tensor<T>& w, const ConvDims& d, bool transposed) {
  const std::size_t kk = d.k * d.k;
  std::vector<T> out(kk * d.o * d.c);
  auto pw = w.data();
  for (std::size_t o = 0; o < d.o; ++o)
    for (std::size_t c = 0; c < d.c; ++c)
      for (std::size_t t = 0; t < kk; ++t) {
        const T v = pw[(o * d.c + c) * kk + t];
        out[t * d.o * d.c + (transposed ? c * d.o + o : o * d.c + c)] = v;
      }
  return out;
}

template <typename T>
void pad_sample(const T* x, const ConvDims& d, const ShiftedLayout& L, T* xpad) {
  for (std::size_t c = 0; c < d.c; ++c)
    for (std::size_t y = 0; y < d.h; ++y)
      std::copy_n(x + (c * d.h + y) * d.w, d.w, xpad + c * L.plane + (y + d.pad) * L.wp + d.pad);
}


}  // namespace

std::vector<std::size_t> broadcast_strides(const Shape& shape, const Shape& out) {
  const std::size_t rank = out.size();
  std::vector<std::size_t> strides(rank, 0);
  std::size_t stride = 1;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    const std::size_t src_dim = shape.size() - 1 - i;
    const std::size_t dst_dim = rank - 1 - i;
    strides[dst_dim] = shape[src_dim] == 1 ? 0 : stride;
    stride *= shape[src_dim];
  }
  return strides;
}

template <typename T>
Tensor<T> sum_to(const Tensor<T>& x, const Shape& shape) {
  if (x.shape() == shape) return x;
  if (ad::broadcast_shape(shape, x.shape()) != x.shape()) {
    throw ShapeError("cannot sum " + to_string(x.shape()) + " to " + to_string(shape));
  }
  Tensor<T> out(shape);
  auto po = out.data();
  auto px = x.data();
  if (out.size() == 1) {
    T acc{0};
    for (T v : px) acc += v;
    po[0] = acc;
    return out;
  }
  const Shape& xs = x.shape();
  std::array<std::vector<std::size_t>, 1> so{broadcast_strides(shape, xs)};
  for_each_row(xs, so, [&](std::size_t in_off, const std::size_t* off, std::size_t len, const std::size_t* inner) {
    const T* src = px.data() + in_off;
    T* dst = po.data() + off[0];
    if (inner[0] == 0) {
      T acc = *dst;
      for (std::size_t j = 0; j < len; ++j) acc += src[j];
      *dst = acc;
    } else {
      for (std::size_t j = 0; j < len; ++j) dst[j * inner[0]] += src[j];
    }
  });
  return out;
}

template <typename T>
Tensor<T> broadcast_to(const Tensor<T>& x, const Shape& shape) {
  if (x.shape() == shape) return x;
  if (ad::broadcast_shape(x.shape(), shape) != shape) {
    throw ShapeError("cannot broadcast " + to_string(x.shape()) + " to " + to_string(shape));
  }
  Tensor<T> out(shape);
  auto po = out.data();
  auto px = x.data();
  if (x.size() == 1) {
    std::fill(po.begin(), po.end(), px[0]);
    return out;
  }
  std::array<std::vector<std::size_t>, 1> sx{broadcast_strides(x.shape(), shape)};
  for_each_row(shape, sx, [&](std::size_t out_off, const std::size_t* off, std::size_t len, const std::size_t* inner) {
    const T* src = px.data() + off[0];
    T* dst = po.data() + out_off;
    if (inner[0] == 0) {
      std::fill_n(dst, len, *src);
    } else {
      for (std::size_t j = 0; j < len; ++j) dst[j] = src[j * inner[0]];
    }
  });
  return out;
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul shape mismatch: " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  Tensor<T> out(Shape{a.dim(0), b.dim(1)});
  MutMap<T>(out.data().data(), a.dim(0), b.dim(1)).noalias() =
      ConstMap<T>(a.data().data(), a.dim(0), a.dim(1)) * ConstMap<T>(b.data().data(), b.dim(0), b.dim(1));
  return out;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
  if (x.rank() != 2) throw ShapeError("transpose expects rank 2, got " + to_string(x.shape()));
  Tensor<T> out(Shape{x.dim(1), x.dim(0)});
  MutMap<T>(out.data().data(), x.dim(1), x.dim(0)) =
      ConstMap<T>(x.data().data(), x.dim(0), x.dim(1)).transpose();
  return out;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, ad::ConvGeometry geo) {
  const ConvDims d = conv_dims(x.shape(), w.shape(), geo);
  const std::size_t p = d.oh * d.ow;
  Tensor<T> out(Shape{d.n, d.o, d.oh, d.ow});
  const auto px = x.data();
  auto po = out.data();
  const ConstMap<T> wm(w.data().data(), d.o, d.patch());
  if (use_shifted(d)) {
    const ShiftedLayout L(d);
    const auto taps = split_taps(w, d, false);
    std::vector<T> xpad(d.c * L.plane, T{0});
    RowMatrix<T> grid(d.o, L.grid);
    for (std::size_t n = 0; n < d.n; ++n) {
      pad_sample(px.data() + n * d.c * d.h * d.w, d, L, xpad.data());
      grid.setZero();
      for (std::size_t ki = 0; ki < d.k; ++ki)
        for (std::size_t kj = 0; kj < d.k; ++kj) {
          const ConstMap<T> wt(taps.data() + (ki * d.k + kj) * d.o * d.c, d.o, d.c);
          grid.noalias() += wt * StridedMap<T>(xpad.data() + ki * L.wp + kj, d.c, L.grid, Eigen::OuterStride<>(L.plane));
        }
      T* yn = po.data() + n * d.o * p;
      for (std::size_t o = 0; o < d.o; ++o)
        for (std::size_t y = 0; y < d.oh; ++y) std::copy_n(grid.data() + o * L.grid + y * L.wp, d.ow, yn + o * p + y * d.ow);
    }
    return out;
  }
  std::vector<T> cols(is_pointwise(d) ? 0 : d.patch() * p);
  for (std::size_t n = 0; n < d.n; ++n) {
    const T* xn = px.data() + n * d.c * d.h * d.w;
    const T* src = xn;
    if (!is_pointwise(d)) {
      im2col(xn, d, cols.data());
      src = cols.data();
    }
    MutMap<T>(po.data() + n * d.o * p, d.o, p).noalias() = wm * ConstMap<T>(src, d.patch(), p);
  }
  return out;
}

template <typename T>
Tensor<T> conv2d_input_grad(const Tensor<T>& g, const Tensor<T>& w, ad::ConvGeometry geo,
                            std::size_t h, std::size_t wd) {
  require_rank4(g.shape(), "conv2d_input_grad gradient");
  require_rank4(w.shape(), "conv2d_input_grad weight");
  const ConvDims d = conv_dims(Shape{g.dim(0), w.dim(1), h, wd}, w.shape(), geo);
  if (g.dim(1) != d.o || g.dim(2) != d.oh || g.dim(3) != d.ow) {
    throw ShapeError("conv2d_input_grad: gradient " + to_string(g.shape()) + " does not match output of " +
                     to_string(Shape{d.n, d.c, h, wd}) + " with weight " + to_string(w.shape()));
  }
  const std::size_t p = d.oh * d.ow;
  Tensor<T> out(Shape{d.n, d.c, d.h, d.w});
  const auto pg = g.data();
  auto po = out.data();
  const auto wt = ConstMap<T>(w.data().data(), d.o, d.patch()).transpose();
  if (use_shifted(d)) {
    const ShiftedLayout L(d);
    const auto taps = split_taps(w, d, true);
    std::vector<T> xpad(d.c * L.plane);
    RowMatrix<T> grid = RowMatrix<T>::Zero(d.o, L.grid);  // junk columns stay zero
    for (std::size_t n = 0; n < d.n; ++n) {
      const T* gn = pg.data() + n * d.o * p;
      for (std::size_t o = 0; o < d.o; ++o)
        for (std::size_t y = 0; y < d.oh; ++y) std::copy_n(gn + o * p + y * d.ow, d.ow, grid.data() + o * L.grid + y * L.wp);
      std::fill(xpad.begin(), xpad.end(), T{0});
      for (std::size_t ki = 0; ki < d.k; ++ki)
        for (std::size_t kj = 0; kj < d.k; ++kj) {
          const ConstMap<T> tap(taps.data() + (ki * d.k + kj) * d.o * d.c, d.c, d.o);
          MutStridedMap<T>(xpad.data() + ki * L.wp + kj, d.c, L.grid, Eigen::OuterStride<>(L.plane)).noalias() +=
              tap * grid;
        }
      T* xn = po.data() + n * d.c * d.h * d.w;
      for (std::size_t c = 0; c < d.c; ++c)
        for (std::size_t y = 0; y < d.h; ++y)
          std::copy_n(xpad.data() + c * L.plane + (y + d.pad) * L.wp + d.pad, d.w, xn + (c * d.h + y) * d.w);
    }
    return out;
  }
  std::vector<T> cols(is_pointwise(d) ? 0 : d.patch() * p);
  for (std::size_t n = 0; n < d.n; ++n) {
    const ConstMap<T> gn(pg.data() + n * d.o * p, d.o, p);
    T* xn = po.data() + n * d.c * d.h * d.w;
    if (is_pointwise(d)) {
      MutMap<T>(xn, d.c, p).noalias() = wt * gn;
    } else {
      MutMap<T>(cols.data(), d.patch(), p).noalias() = wt * gn;
      col2im(cols.data(), d, xn);
    }
  }
  return out;
}

template <typename T>
Tensor<T> conv2d_weight_grad(const Tensor<T>& x, const Tensor<T>& g, ad::ConvGeometry geo,
                             std::size_t k) {
  require_rank4(x.shape(), "conv2d_weight_grad input");
  require_rank4(g.shape(), "conv2d_weight_grad gradient");
  const ConvDims d = conv_dims(x.shape(), Shape{g.dim(1), x.dim(1), k, k}, geo);
  if (g.dim(0) != d.n || g.dim(2) != d.oh || g.dim(3) != d.ow) {
    throw ShapeError("conv2d_weight_grad: gradient " + to_string(g.shape()) + " does not match input " +
                     to_string(x.shape()));
  }
  const std::size_t p = d.oh * d.ow;
  Tensor<T> out(Shape{d.o, d.c, k, k});
  MutMap<T> acc(out.data().data(), d.o, d.patch());
  const auto px = x.data();
  const auto pg = g.data();
  if (use_shifted(d)) {
    const ShiftedLayout L(d);
    const std::size_t kk = d.k * d.k;
    std::vector<RowMatrix<T>> taps(kk, RowMatrix<T>::Zero(d.o, d.c));
    std::vector<T> xpad(d.c * L.plane, T{0});
    RowMatrix<T> grid = RowMatrix<T>::Zero(d.o, L.grid);
    for (std::size_t n = 0; n < d.n; ++n) {
      pad_sample(px.data() + n * d.c * d.h * d.w, d, L, xpad.data());
      const T* gn = pg.data() + n * d.o * p;
      for (std::size_t o = 0; o < d.o; ++o)
        for (std::size_t y = 0; y < d.oh; ++y) std::copy_n(gn + o * p + y * d.ow, d.ow, grid.data() + o * L.grid + y * L.wp);
      for (std::size_t ki = 0; ki < d.k; ++ki)
        for (std::size_t kj = 0; kj < d.k; ++kj)
          taps[ki * d.k + kj].noalias() +=
              grid * StridedMap<T>(xpad.data() + ki * L.wp + kj, d.c, L.grid, Eigen::OuterStride<>(L.plane)).transpose();
    }
    auto po = out.data();
    for (std::size_t o = 0; o < d.o; ++o)
      for (std::size_t c = 0; c < d.c; ++c)
        for (std::size_t t = 0; t < kk; ++t) po[(o * d.c + c) * kk + t] = taps[t](o, c);
    return out;
  }
  std::vector<T> cols(is_pointwise(d) ? 0 : d.patch() * p);
  for (std::size_t n = 0; n < d.n; ++n) {
    const T* xn = px.data() + n * d.c * d.h * d.w;
    const T* src = xn;
    if (!is_pointwise(d)) {
      im2col(xn, d, cols.data());
      src = cols.data();
    }
    acc.noalias() += ConstMap<T>(pg.data() + n * d.o * p, d.o, p) * ConstMap<T>(src, d.patch(), p).transpose();
  }
  return out;
}

template <typename T>
Tensor<T> upsample_nearest2x(const Tensor<T>& x) {
  require_rank4(x.shape(), "upsample_nearest2x input");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor<T> out(Shape{n, c, 2 * h, 2 * w});
  auto px = x.data();
  auto po = out.data();
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const T* src = px.data() + plane * h * w;
    T* dst = po.data() + plane * 4 * h * w;
    for (std::size_t y = 0; y < 2 * h; ++y)
      for (std::size_t xx = 0; xx < 2 * w; ++xx) dst[y * 2 * w + xx] = src[(y / 2) * w + xx / 2];
  }
  return out;
}

template <typename T>
Tensor<T> avgpool2x(const Tensor<T>& x) {
  require_rank4(x.shape(), "avgpool2x input");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % 2 || w % 2) throw ShapeError("avgpool2x needs even spatial size, got " + to_string(x.shape()));
  Tensor<T> out(Shape{n, c, h / 2, w / 2});
  auto px = x.data();
  auto po = out.data();
  const T quarter = T(0.25);
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const T* src = px.data() + plane * h * w;
    T* dst = po.data() + plane * (h / 2) * (w / 2);
    for (std::size_t y = 0; y < h / 2; ++y) {
      for (std::size_t xx = 0; xx < w / 2; ++xx) {
        const T* a = src + 2 * y * w + 2 * xx;
        dst[y * (w / 2) + xx] = ((a[0] + a[1]) + (a[w] + a[w + 1])) * quarter;
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank4(a.shape(), "concat_channels lhs");
  require_rank4(b.shape(), "concat_channels rhs");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw ShapeError("concat_channels mismatch: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), p = a.dim(2) * a.dim(3);
  Tensor<T> out(Shape{n, ca + cb, a.dim(2), a.dim(3)});
  auto po = out.data();
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(a.data().data() + i * ca * p, ca * p, po.data() + i * (ca + cb) * p);
    std::copy_n(b.data().data() + i * cb * p, cb * p, po.data() + i * (ca + cb) * p + ca * p);
  }
  return out;
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::size_t begin, std::size_t count) {
  require_rank4(x.shape(), "slice_channels input");
  if (count == 0 || begin + count > x.dim(1)) {
    throw ShapeError("slice_channels [" + std::to_string(begin) + ", +" + std::to_string(count) +
                     ") out of range for " + to_string(x.shape()));
  }
  const std::size_t n = x.dim(0), c = x.dim(1), p = x.dim(2) * x.dim(3);
  Tensor<T> out(Shape{n, count, x.dim(2), x.dim(3)});
  for (std::size_t i = 0; i < n; ++i)
    std::copy_n(x.data().data() + (i * c + begin) * p, count * p, out.data().data() + i * count * p);
  return out;
}

template <typename T>
Tensor<T> pad_channels(const Tensor<T>& x, std::size_t begin, std::size_t total) {
  require_rank4(x.shape(), "pad_channels input");
  const std::size_t n = x.dim(0), c = x.dim(1), p = x.dim(2) * x.dim(3);
  if (begin + c > total) throw ShapeError("pad_channels: channels do not fit");
  Tensor<T> out(Shape{n, total, x.dim(2), x.dim(3)});
  for (std::size_t i = 0; i < n; ++i)
    std::copy_n(x.data().data() + i * c * p, c * p, out.data().data() + (i * total + begin) * p);
  return out;
}

#define PGF_INSTANTIATE(T)                                                                        \
  template Tensor<T> sum_to(const Tensor<T>&, const Shape&);                                      \
  template Tensor<T> broadcast_to(const Tensor<T>&, const Shape&);                                \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> transpose(const Tensor<T>&);                                                 \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, ad::ConvGeometry);                \
  template Tensor<T> conv2d_input_grad(const Tensor<T>&, const Tensor<T>&, ad::ConvGeometry,      \
                                       std::size_t, std::size_t);                                 \
  template Tensor<T> conv2d_weight_grad(const Tensor<T>&, const Tensor<T>&, ad::ConvGeometry,     \
                                        std::size_t);                                             \
  template Tensor<T> upsample_nearest2x(const Tensor<T>&);                                        \
  template Tensor<T> avgpool2x(const Tensor<T>&);                                                 \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> slice_channels(const Tensor<T>&, std::size_t, std::size_t);                  \
  template Tensor<T> pad_channels(const Tensor<T>&, std::size_t, std::size_t);

PGF_INSTANTIATE(float)
PGF_INSTANTIATE(double)
#undef PGF_INSTANTIATE

}  // namespace pgf::kernels
