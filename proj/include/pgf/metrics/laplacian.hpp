#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "pgf/tensor/tensor.hpp"

namespace pgf::metrics {

struct MetricError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Images are [C, H, W] doubles.
using Plane = Tensor<double>;

// 5-tap binomial [1 4 6 4 1]/16, separable, mirror boundary (edge not repeated).
Plane binomial_blur(const Plane& img, double gain = 1.0);
// blur, then keep even rows and columns.
Plane pyr_down(const Plane& img);
// zero-insert to (2H, 2W), then blur with gain 4.
Plane pyr_up(const Plane& img);

// levels[0] is the finest detail band; each level is twice the side of the next,
// and `residual` is half the side of the last level.
struct LaplacianPyramid {
  std::vector<Plane> levels;
  Plane residual;

  // Side of detail level i, or of the residual when i == levels.size().
  std::size_t side(std::size_t i) const;
  // The band whose side equals `resolution` (a detail level or the residual).
  const Plane& at_resolution(std::size_t resolution) const;
};

// Throws MetricError unless H and W are divisible by 2^levels.
LaplacianPyramid laplacian_pyramid(const Plane& img, std::size_t levels);
Plane reconstruct(const LaplacianPyramid& pyr);

}  // namespace pgf::metrics
