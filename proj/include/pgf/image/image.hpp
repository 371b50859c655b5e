#pragma once

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "pgf/tensor/tensor.hpp"

namespace pgf::image {

struct ImageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Interleaved HWC float image with samples in [0, 1].
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 3;
  std::vector<float> pixels;

  Image() = default;
  Image(std::size_t w, std::size_t h, std::size_t c = 3, float fill = 0.0f)
      : width(w), height(h), channels(c), pixels(w * h * c, fill) {}

  float& at(std::size_t x, std::size_t y, std::size_t c) { return pixels[(y * width + x) * channels + c]; }
  float at(std::size_t x, std::size_t y, std::size_t c) const { return pixels[(y * width + x) * channels + c]; }
  bool empty() const { return pixels.empty(); }
  bool operator==(const Image&) const = default;
};

// PNG (8/16-bit; gray, gray+alpha, RGB, RGBA, palette) or JPEG, chosen by
// content. Always returns 3 channels; alpha is dropped.
Image read_image(const std::filesystem::path& path);
// Reads only the header.
std::pair<std::size_t, std::size_t> image_size(const std::filesystem::path& path);

// Lossless; bit_depth 8 or 16. Samples are clamped to [0, 1] and rounded.
void write_png(const std::filesystem::path& path, const Image& img, int bit_depth = 8);
void write_jpeg(const std::filesystem::path& path, const Image& img, int quality = 95);

// Round-trips through an integer sample grid of the given depth.
Image quantize(const Image& img, int bit_depth);

// [0,1] HWC image <-> [3, H, W] tensor in [-1, 1].
template <typename T>
Tensor<T> to_tensor(const Image& img);
template <typename T>
Image from_tensor(const Tensor<T>& chw);

// Tiles [N, 3, R, R] (values in [-1, 1]) into a grid with `cols` columns.
template <typename T>
Image tile_grid(const Tensor<T>& batch, std::size_t cols);

}  // namespace pgf::image
