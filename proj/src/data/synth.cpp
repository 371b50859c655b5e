#include "pgf/data/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "parallel.hpp"
#include "pgf/tensor/random.hpp"

namespace pgf::data {

namespace fs = std::filesystem;
using image::Image;

namespace {

using Rgb = std::array<double, 3>;

struct Palette {
  Rgb land_a, land_b, bank, water;
};

const std::array<Palette, kPaletteCount> kPalettes = {{
    {{0.20, 0.36, 0.14}, {0.36, 0.46, 0.22}, {0.52, 0.48, 0.34}, {0.10, 0.22, 0.36}},  // temperate
    {{0.64, 0.54, 0.38}, {0.50, 0.40, 0.27}, {0.74, 0.66, 0.50}, {0.18, 0.34, 0.42}},  // arid
    {{0.28, 0.34, 0.18}, {0.44, 0.37, 0.24}, {0.56, 0.50, 0.36}, {0.50, 0.41, 0.27}},  // silty
}};

const std::array<std::string, kPaletteCount> kNames = {"Temperate", "Arid", "Silty"};

// Smooth lattice noise in [0, 1] with `cells` cells per side.
class ValueNoise {
 public:
  ValueNoise(Rng& rng, std::size_t cells) : n_(cells + 1), v_(n_ * n_) {
    for (auto& x : v_) x = rng.uniform();
  }
  double at(double u, double v) const {  // u, v in [0, 1]
    const double x = u * (n_ - 1), y = v * (n_ - 1);
    const auto x0 = std::min<std::size_t>(static_cast<std::size_t>(x), n_ - 2);
    const auto y0 = std::min<std::size_t>(static_cast<std::size_t>(y), n_ - 2);
    const double fx = smooth(x - x0), fy = smooth(y - y0);
    const double a = v_[y0 * n_ + x0], b = v_[y0 * n_ + x0 + 1];
    const double c = v_[(y0 + 1) * n_ + x0], d = v_[(y0 + 1) * n_ + x0 + 1];
    return (1 - fy) * ((1 - fx) * a + fx * b) + fy * ((1 - fx) * c + fx * d);
  }

 private:
  static double smooth(double t) { return t * t * (3 - 2 * t); }
  std::size_t n_;
  std::vector<double> v_;
};

}  // namespace

const std::string& palette_name(int palette) {
  if (palette < 0 || palette >= kPaletteCount) throw DataError("palette must be in 0..2");
  return kNames[palette];
}

int palette_from_river(const std::string& river) {
  for (int p = 0; p < kPaletteCount; ++p) {
    if (river == "Synth" + kNames[p]) return p;
  }
  return -1;
}

double SynthRiver::coverage() const {
  if (mask.empty()) return 0.0;
  return double(std::count(mask.begin(), mask.end(), std::uint8_t{1})) / mask.size();
}

SynthRiver synth_river(std::uint64_t seed, std::size_t resolution, const SynthOptions& options) {
  if (resolution < 4 || (resolution & (resolution - 1))) throw DataError("synth resolution must be a power of two >= 4");
  if (!(0 < options.width_min && options.width_min <= options.width_max)) throw DataError("bad river width range");
  if (options.palette && (*options.palette < 0 || *options.palette >= kPaletteCount)) {
    throw DataError("palette must be in 0..2");
  }
  const auto R = resolution;
  const double side = static_cast<double>(R);
  Rng rng(seed);

  SynthRiver out;
  const int drawn = static_cast<int>(rng.below(kPaletteCount));
  out.palette = options.palette.value_or(drawn);
  out.vertical = rng.below(2) == 1;

  // Centre line along the flow axis t, with 2-4 sinusoids.
  const int terms = 2 + static_cast<int>(rng.below(3));
  struct Wave {
    double amp, freq, phase;
  };
  std::vector<Wave> waves;
  for (int k = 0; k < terms; ++k) {
    const double amp = rng.uniform(0.3, 1.0) * options.amplitude_max * side / std::sqrt(k + 1.0);
    waves.push_back({amp, rng.uniform(0.4, 2.5), rng.uniform(0.0, 2 * std::numbers::pi)});
  }
  const double base = side * (0.5 + rng.uniform(-0.1, 0.1));
  const double width = side * rng.uniform(options.width_min, options.width_max);
  const double wobble = rng.uniform(0.0, 0.3), wobble_freq = rng.uniform(0.5, 2.0);
  const double wobble_phase = rng.uniform(0.0, 2 * std::numbers::pi);

  auto centre = [&](double t) {
    double c = base;
    for (const auto& w : waves) c += w.amp * std::sin(2 * std::numbers::pi * w.freq * t / side + w.phase);
    return std::clamp(c, 0.0, side - 1);
  };
  auto half_width = [&](double t) {
    return 0.5 * width * (1 + wobble * std::sin(2 * std::numbers::pi * wobble_freq * t / side + wobble_phase));
  };

  // Band rows per column cover the centre line's sweep over the column, so
  // neighbouring columns always share the row at their common edge.
  std::vector<std::uint8_t> band(R * R, 0);  // [t][s]
  for (std::size_t t = 0; t < R; ++t) {
    double lo = side, hi = -1;
    for (double dt : {-0.5, 0.0, 0.5}) {
      const double c = centre(t + dt), h = half_width(t + dt);
      lo = std::min(lo, c - h);
      hi = std::max(hi, c + h);
    }
    const auto s0 = static_cast<long>(std::ceil(lo - 0.5)), s1 = static_cast<long>(std::floor(hi + 0.5));
    for (long s = std::max(0L, s0); s <= std::min<long>(R - 1, s1); ++s) band[t * R + s] = 1;
  }

  const auto& pal = kPalettes[out.palette];
  ValueNoise coarse(rng, 4), fine(rng, std::max<std::size_t>(4, R / 4)), ripple(rng, std::max<std::size_t>(4, R / 2));
  const double grain_amp = 0.03;
  out.image = Image(R, R, 3);
  out.mask.assign(R * R, 0);
  for (std::size_t y = 0; y < R; ++y) {
    for (std::size_t x = 0; x < R; ++x) {
      const auto t = out.vertical ? y : x, s = out.vertical ? x : y;
      const bool water = band[t * R + s] != 0;
      bool bank = false;
      if (!water) {
        for (long d : {-1L, 1L}) {
          const long ss = static_cast<long>(s) + d;
          if (ss >= 0 && ss < static_cast<long>(R) && band[t * R + ss]) bank = true;
        }
      }
      const double u = (x + 0.5) / side, v = (y + 0.5) / side;
      const double mix = std::clamp(0.65 * coarse.at(u, v) + 0.35 * fine.at(u, v), 0.0, 1.0);
      const double grain = grain_amp * (ripple.at(u, v) - 0.5) * 2;
      for (int c = 0; c < 3; ++c) {
        double val;
        if (water) {
          val = pal.water[c] * (0.9 + 0.2 * ripple.at(v, u));
        } else {
          val = pal.land_a[c] * (1 - mix) + pal.land_b[c] * mix + grain;
          if (bank) val = 0.5 * val + 0.5 * pal.bank[c];
        }
        out.image.at(x, y, c) = static_cast<float>(std::clamp(val, 0.0, 1.0));
      }
      out.mask[y * R + x] = water ? 1 : 0;
    }
  }
  return out;
}

std::vector<ImageRecord> synth_corpus(const fs::path& out_dir, std::size_t count, std::size_t resolution,
                                      std::uint64_t seed, std::size_t threads) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw DataError("cannot create " + out_dir.string());
  std::vector<ImageRecord> records(count);
  const std::size_t digits = std::max<std::size_t>(4, std::to_string(count ? count - 1 : 0).size());
  detail::parallel_for(count, threads, [&](std::size_t i) {
    const auto river = synth_river(Rng::derive(seed, i), resolution);
    ImageRecord rec;
    rec.river = "Synth" + palette_name(river.palette);
    rec.year = 2024;
    rec.index = i;
    rec.index_digits = digits;
    rec.extension = ".png";
    rec.width = rec.height = resolution;
    rec.path = out_dir / format_filename(rec);
    image::write_png(rec.path, river.image, 8);
    records[i] = std::move(rec);
  });
  write_manifest(out_dir / "manifest.csv", records);
  return records;
}

}  // namespace pgf::data
