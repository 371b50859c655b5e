#include "pgf/data/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace pgf::data {

namespace {

std::string dims(const Image& img) { return std::to_string(img.width) + "x" + std::to_string(img.height); }

// Bilinear sample at continuous pixel coordinates (pixel centers at integers).
void sample_reflect(const Image& img, double x, double y, float* out) {
  const double fx = std::floor(x), fy = std::floor(y);
  const double wx = x - fx, wy = y - fy;
  const auto x0 = reflect_index(static_cast<long long>(fx), img.width);
  const auto x1 = reflect_index(static_cast<long long>(fx) + 1, img.width);
  const auto y0 = reflect_index(static_cast<long long>(fy), img.height);
  const auto y1 = reflect_index(static_cast<long long>(fy) + 1, img.height);
  for (std::size_t c = 0; c < img.channels; ++c) {
    const double top = (1 - wx) * img.at(x0, y0, c) + wx * img.at(x1, y0, c);
    const double bot = (1 - wx) * img.at(x0, y1, c) + wx * img.at(x1, y1, c);
    out[c] = static_cast<float>((1 - wy) * top + wy * bot);
  }
}

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
  const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
  const double d = mx - mn;
  v = mx;
  s = mx > 0 ? d / mx : 0.0;
  if (d <= 0) {
    h = 0;
  } else if (mx == r) {
    h = std::fmod((g - b) / d, 6.0);
  } else if (mx == g) {
    h = (b - r) / d + 2.0;
  } else {
    h = (r - g) / d + 4.0;
  }
  h /= 6.0;
  if (h < 0) h += 1.0;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
  const double hh = h * 6.0;
  const int sector = static_cast<int>(std::floor(hh)) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (sector) {
    case 0: r = v, g = t, b = p; break;
    case 1: r = q, g = v, b = p; break;
    case 2: r = p, g = v, b = t; break;
    case 3: r = p, g = q, b = v; break;
    case 4: r = t, g = p, b = v; break;
    default: r = v, g = p, b = q; break;
  }
}

}  // namespace

Image crop(const Image& img, std::size_t x0, std::size_t y0, std::size_t w, std::size_t h) {
  if (x0 + w > img.width || y0 + h > img.height || w == 0 || h == 0) {
    throw DataError("crop window outside " + dims(img) + " image");
  }
  Image out(w, h, img.channels);
  const std::size_t row = w * img.channels;
  for (std::size_t y = 0; y < h; ++y) {
    const float* src = &img.pixels[((y0 + y) * img.width + x0) * img.channels];
    std::copy(src, src + row, &out.pixels[y * row]);
  }
  return out;
}

Image center_crop(const Image& img, std::size_t size) {
  if (size == 0) throw DataError("crop size must be >= 1");
  if (img.width < size || img.height < size) {
    throw DataError(dims(img) + " image is smaller than the " + std::to_string(size) + "x" +
                    std::to_string(size) + " crop");
  }
  return crop(img, (img.width - size) / 2, (img.height - size) / 2, size, size);
}

Image box_downsample(const Image& img) {
  if (img.width % 2 || img.height % 2) throw DataError("box_downsample needs even sides, got " + dims(img));
  Image out(img.width / 2, img.height / 2, img.channels);
  for (std::size_t y = 0; y < out.height; ++y) {
    for (std::size_t x = 0; x < out.width; ++x) {
      for (std::size_t c = 0; c < img.channels; ++c) {
        const double s = double(img.at(2 * x, 2 * y, c)) + img.at(2 * x + 1, 2 * y, c) + img.at(2 * x, 2 * y + 1, c) +
                         img.at(2 * x + 1, 2 * y + 1, c);
        out.at(x, y, c) = static_cast<float>(s / 4);
      }
    }
  }
  return out;
}

Image resize_bilinear(const Image& img, std::size_t w, std::size_t h) {
  if (w == 0 || h == 0) throw DataError("resize target must be non-empty");
  Image out(w, h, img.channels);
  const double sx = double(img.width) / w, sy = double(img.height) / h;
  for (std::size_t y = 0; y < h; ++y) {
    const double yy = std::clamp((y + 0.5) * sy - 0.5, 0.0, double(img.height - 1));
    for (std::size_t x = 0; x < w; ++x) {
      const double xx = std::clamp((x + 0.5) * sx - 0.5, 0.0, double(img.width - 1));
      sample_reflect(img, xx, yy, &out.at(x, y, 0));
    }
  }
  return out;
}

Image flip_horizontal(const Image& img) {
  Image out(img.width, img.height, img.channels);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < img.channels; ++c) out.at(img.width - 1 - x, y, c) = img.at(x, y, c);
  return out;
}

Image rotate90(const Image& img) {
  Image out(img.height, img.width, img.channels);
  for (std::size_t v = 0; v < out.height; ++v)
    for (std::size_t u = 0; u < out.width; ++u)
      for (std::size_t c = 0; c < img.channels; ++c) out.at(u, v, c) = img.at(img.width - 1 - v, u, c);
  return out;
}

Image dihedral(const Image& img, int element) {
  if (element < 0 || element > 7) throw DataError("dihedral element must be in 0..7");
  Image out = img;
  for (int i = 0; i < element % 4; ++i) out = rotate90(out);
  if (element >= 4) out = flip_horizontal(out);
  return out;
}

Image hsv_jitter(const Image& img, double hue_shift, double sat_shift) {
  if (img.channels != 3) throw DataError("hsv_jitter needs an RGB image");
  Image out = img;
  for (std::size_t i = 0; i < img.pixels.size(); i += 3) {
    double h, s, v, r, g, b;
    rgb_to_hsv(img.pixels[i], img.pixels[i + 1], img.pixels[i + 2], h, s, v);
    h = std::fmod(h + hue_shift, 1.0);
    if (h < 0) h += 1.0;
    s = std::clamp(s + sat_shift, 0.0, 1.0);
    hsv_to_rgb(h, s, v, r, g, b);
    out.pixels[i] = static_cast<float>(std::clamp(r, 0.0, 1.0));
    out.pixels[i + 1] = static_cast<float>(std::clamp(g, 0.0, 1.0));
    out.pixels[i + 2] = static_cast<float>(std::clamp(b, 0.0, 1.0));
  }
  return out;
}

std::size_t reflect_index(long long i, std::size_t n) {
  if (n == 1) return 0;
  const long long period = 2 * static_cast<long long>(n) - 2;
  i %= period;
  if (i < 0) i += period;
  return static_cast<std::size_t>(i < static_cast<long long>(n) ? i : period - i);
}

Image warp_affine(const Image& img, const double (&a)[4], double tx, double ty) {
  Image out(img.width, img.height, img.channels);
  const double cx = (img.width - 1) / 2.0, cy = (img.height - 1) / 2.0;
  for (std::size_t y = 0; y < img.height; ++y) {
    const double dy = y - cy;
    for (std::size_t x = 0; x < img.width; ++x) {
      const double dx = x - cx;
      sample_reflect(img, a[0] * dx + a[1] * dy + cx + tx, a[2] * dx + a[3] * dy + cy + ty, &out.at(x, y, 0));
    }
  }
  return out;
}

Image rotate(const Image& img, double degrees) {
  const double t = degrees * std::numbers::pi / 180.0;
  const double a[4] = {std::cos(t), std::sin(t), -std::sin(t), std::cos(t)};
  return warp_affine(img, a, 0.0, 0.0);
}

}  // namespace pgf::data
