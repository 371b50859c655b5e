#pragma once

#include <cstddef>

#include "pgf/data/records.hpp"
#include "pgf/image/image.hpp"

namespace pgf::data {

using image::Image;

Image crop(const Image& img, std::size_t x0, std::size_t y0, std::size_t w, std::size_t h);

// Square window at offsets floor((W-size)/2), floor((H-size)/2). Too-small
// images are rejected (DataError), never padded.
Image center_crop(const Image& img, std::size_t size);

// 2x2 box mean; sides must be even.
Image box_downsample(const Image& img);

// Bilinear resample to w x h with pixel-center alignment.
Image resize_bilinear(const Image& img, std::size_t w, std::size_t h);

// Element e in 0..7: rotate e%4 quarter turns counter-clockwise, then mirror
// left-right when e >= 4. Odd rotations swap width and height.
Image dihedral(const Image& img, int element);
Image flip_horizontal(const Image& img);
Image rotate90(const Image& img);  // counter-clockwise

// Hue is shifted on the unit circle; saturation is shifted additively and clamped.
Image hsv_jitter(const Image& img, double hue_shift, double sat_shift);

// Mirror-reflected index into [0, n) without repeating the edge sample.
std::size_t reflect_index(long long i, std::size_t n);

// Inverse-mapped warp: out(x, y) samples img at A * (x - c, y - c) + c + t, with
// reflect padding and bilinear interpolation. `a` is row-major 2x2.
Image warp_affine(const Image& img, const double (&a)[4], double tx, double ty);
Image rotate(const Image& img, double degrees);

}  // namespace pgf::data
