#include "pgf/metrics/laplacian.hpp"

#include <array>
#include <cmath>
#include <string>

namespace pgf::metrics {

namespace {

constexpr std::array<double, 5> kTaps = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};
constexpr std::array<int, 4> kOffsets = {-2, -1, 1, 2};

std::size_t mirror(long i, std::size_t n) {
  if (n == 1) return 0;
  const long period = 2 * static_cast<long>(n) - 2;
  i %= period;
  if (i < 0) i += period;
  return static_cast<std::size_t>(i < static_cast<long>(n) ? i : period - i);
}

void check_image(const Plane& img) {
  if (img.rank() != 3 || img.size() == 0) throw MetricError("expected a [C, H, W] image, got " + to_string(img.shape()));
}

}  // namespace

// Written as centre + sum of weighted differences, so constants pass through
// bit-exactly and constant images have all-zero detail bands.
Plane binomial_blur(const Plane& img, double gain) {
  check_image(img);
  const std::size_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
  const double g = std::sqrt(gain);  // split evenly over the two passes
  Plane tmp(img.shape()), out(img.shape());
  for (std::size_t c = 0; c < C; ++c) {
    const double* src = img.data().data() + c * H * W;
    double* t = tmp.data().data() + c * H * W;
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        const double mid = src[y * W + x];
        double d = 0;
        for (int k : kOffsets) d += kTaps[k + 2] * (src[y * W + mirror(static_cast<long>(x) + k, W)] - mid);
        const double s = mid + d;
        t[y * W + x] = g * s;
      }
    double* o = out.data().data() + c * H * W;
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        const double mid = t[y * W + x];
        double d = 0;
        for (int k : kOffsets) d += kTaps[k + 2] * (t[mirror(static_cast<long>(y) + k, H) * W + x] - mid);
        const double s = mid + d;
        o[y * W + x] = g * s;
      }
  }
  return out;
}

Plane pyr_down(const Plane& img) {
  check_image(img);
  const std::size_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
  if (H % 2 || W % 2) throw MetricError("pyr_down needs even sides, got " + to_string(img.shape()));
  const auto b = binomial_blur(img);
  Plane out(Shape{C, H / 2, W / 2});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < H / 2; ++y)
      for (std::size_t x = 0; x < W / 2; ++x) out[(c * (H / 2) + y) * (W / 2) + x] = b[(c * H + 2 * y) * W + 2 * x];
  return out;
}

Plane pyr_up(const Plane& img) {
  check_image(img);
  const std::size_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
  Plane z(Shape{C, 2 * H, 2 * W});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) z[(c * 2 * H + 2 * y) * 2 * W + 2 * x] = img[(c * H + y) * W + x];
  return binomial_blur(z, 4.0);
}

std::size_t LaplacianPyramid::side(std::size_t i) const {
  if (i < levels.size()) return levels[i].dim(1);
  if (i == levels.size()) return residual.dim(1);
  throw MetricError("pyramid has no level " + std::to_string(i));
}

const Plane& LaplacianPyramid::at_resolution(std::size_t resolution) const {
  for (const auto& l : levels)
    if (l.dim(1) == resolution) return l;
  if (residual.rank() == 3 && residual.dim(1) == resolution) return residual;
  throw MetricError("pyramid has no level of side " + std::to_string(resolution));
}

LaplacianPyramid laplacian_pyramid(const Plane& img, std::size_t levels) {
  check_image(img);
  const std::size_t div = std::size_t{1} << levels;
  if (img.dim(1) % div || img.dim(2) % div) {
    throw MetricError("image " + to_string(img.shape()) + " is not divisible by 2^" + std::to_string(levels));
  }
  LaplacianPyramid pyr;
  Plane g = img;
  for (std::size_t i = 0; i < levels; ++i) {
    Plane next = pyr_down(g);
    const Plane up = pyr_up(next);
    for (std::size_t k = 0; k < g.size(); ++k) g[k] -= up[k];
    pyr.levels.push_back(std::move(g));
    g = std::move(next);
  }
  pyr.residual = std::move(g);
  return pyr;
}

Plane reconstruct(const LaplacianPyramid& pyr) {
  Plane img = pyr.residual;
  for (std::size_t i = pyr.levels.size(); i-- > 0;) {
    Plane up = pyr_up(img);
    const auto& d = pyr.levels[i];
    if (up.shape() != d.shape()) throw MetricError("pyramid levels do not halve consistently");
    for (std::size_t k = 0; k < up.size(); ++k) up[k] += d[k];
    img = std::move(up);
  }
  return img;
}

}  // namespace pgf::metrics
