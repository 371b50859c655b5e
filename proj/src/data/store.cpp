#include "pgf/data/store.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>

#include "parallel.hpp"
#include "pgf/data/transforms.hpp"

namespace pgf::data {

namespace fs = std::filesystem;
using image::Image;

namespace {

constexpr double k16 = 65535.0;

bool power_of_two(std::size_t n) { return n && !(n & (n - 1)); }

void check_range(std::size_t max_res, std::size_t min_res) {
  if (!power_of_two(max_res) || !power_of_two(min_res) || min_res > max_res) {
    throw DataError("resolutions must be powers of two with min <= max, got " + std::to_string(min_res) + ".." +
                    std::to_string(max_res));
  }
}

std::vector<std::uint32_t> to_u16(const Image& img) {
  std::vector<std::uint32_t> q(img.pixels.size());
  for (std::size_t i = 0; i < q.size(); ++i) {
    q[i] = static_cast<std::uint32_t>(std::lround(std::clamp(double(img.pixels[i]), 0.0, 1.0) * k16));
  }
  return q;
}

Image from_u16(const std::vector<std::uint32_t>& q, std::size_t side, std::size_t channels) {
  Image out(side, side, channels);
  for (std::size_t i = 0; i < q.size(); ++i) out.pixels[i] = static_cast<float>(q[i] / k16);
  return out;
}

Image load(const ImageRecord& rec) {
  try {
    return image::read_image(rec.path);
  } catch (const image::ImageError& e) {
    throw DataError(e.what());
  }
}

}  // namespace

PyramidMode parse_pyramid_mode(const std::string& s) {
  if (s == "downsample") return PyramidMode::downsample;
  if (s == "crop") return PyramidMode::crop;
  throw DataError("unknown pyramid mode '" + s + "' (downsample|crop)");
}

std::string to_string(PyramidMode m) { return m == PyramidMode::crop ? "crop" : "downsample"; }

std::vector<std::size_t> ResolutionStore::resolutions() const {
  std::vector<std::size_t> out;
  for (const auto& [r, n] : counts) out.push_back(r);
  return out;
}

std::vector<fs::path> ResolutionStore::files(std::size_t resolution) const {
  std::vector<fs::path> out;
  const auto dir = root / std::to_string(resolution);
  if (!fs::is_directory(dir)) throw DataError("store has no resolution " + std::to_string(resolution));
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

ResolutionStore ResolutionStore::open(const fs::path& root) {
  if (!fs::is_directory(root)) throw DataError("no resolution store at " + root.string());
  ResolutionStore s;
  s.root = root;
  for (const auto& e : fs::directory_iterator(root)) {
    if (!e.is_directory()) continue;
    const auto name = e.path().filename().string();
    if (name.empty() || !std::all_of(name.begin(), name.end(), [](char c) { return c >= '0' && c <= '9'; })) continue;
    const auto r = std::stoul(name);
    if (!power_of_two(r) || std::to_string(r) != name) continue;
    s.counts[r] = 0;
  }
  for (auto& [r, n] : s.counts) n = s.files(r).size();
  return s;
}

void ResolutionStore::verify() const {
  std::optional<std::size_t> expected;
  for (const auto& [r, n] : counts) {
    if (expected && *expected != n) {
      throw DataError("folder " + std::to_string(r) + " holds " + std::to_string(n) + " images, expected " +
                      std::to_string(*expected));
    }
    expected = n;
    for (const auto& f : files(r)) {
      const auto img = image::read_image(f);
      if (img.width != r || img.height != r || img.channels != 3) {
        throw DataError(f.string() + " is " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                        ", expected " + std::to_string(r) + "x" + std::to_string(r));
      }
    }
  }
}

std::vector<Image> box_pyramid(const Image& top, std::size_t min_resolution) {
  if (top.width != top.height) throw DataError("box_pyramid needs a square image");
  check_range(top.width, min_resolution);
  std::vector<Image> out;
  auto q = to_u16(top);
  std::size_t side = top.width;
  const std::size_t ch = top.channels;
  out.push_back(from_u16(q, side, ch));
  while (side > min_resolution) {
    const std::size_t half = side / 2;
    std::vector<std::uint32_t> next(half * half * ch);
    for (std::size_t y = 0; y < half; ++y) {
      for (std::size_t x = 0; x < half; ++x) {
        for (std::size_t c = 0; c < ch; ++c) {
          auto at = [&](std::size_t xx, std::size_t yy) { return q[(yy * side + xx) * ch + c]; };
          const auto s = at(2 * x, 2 * y) + at(2 * x + 1, 2 * y) + at(2 * x, 2 * y + 1) + at(2 * x + 1, 2 * y + 1);
          next[(y * half + x) * ch + c] = (s + 2) / 4;
        }
      }
    }
    q = std::move(next);
    side = half;
    out.push_back(from_u16(q, side, ch));
  }
  return out;
}

std::vector<Image> crop_pyramid(const Image& src, std::size_t max_resolution, std::size_t min_resolution) {
  check_range(max_resolution, min_resolution);
  std::vector<Image> out;
  for (std::size_t r = max_resolution; r >= min_resolution; r /= 2) {
    out.push_back(image::quantize(center_crop(src, r), 16));
  }
  return out;
}

std::string store_name(const ImageRecord& rec) {
  return rec.stem() + "_" + (rec.variant.empty() ? std::string("orig") : rec.variant) + ".png";
}

ResolutionStore build_resolution_store(const std::vector<ImageRecord>& manifest, const fs::path& root,
                                       const StoreOptions& options) {
  check_range(options.max_resolution, options.min_resolution);
  const auto max_res = options.max_resolution;
  std::set<std::string> names;
  for (const auto& rec : manifest) {
    if (rec.width < max_res || rec.height < max_res) {
      throw DataError(rec.path.string() + " is " + std::to_string(rec.width) + "x" + std::to_string(rec.height) +
                      ", smaller than the " + std::to_string(max_res) + " crop");
    }
    if (!names.insert(store_name(rec)).second) throw DataError("duplicate store entry " + store_name(rec));
  }

  std::vector<std::size_t> levels;
  for (std::size_t r = max_res; r >= options.min_resolution; r /= 2) levels.push_back(r);
  for (auto r : levels) {
    std::error_code ec;
    const auto dir = root / std::to_string(r);
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw DataError("cannot create " + dir.string());
  }

  detail::parallel_for(manifest.size(), options.threads, [&](std::size_t i) {
    const auto& rec = manifest[i];
    const auto src = load(rec);
    if (src.width < max_res || src.height < max_res) {
      throw DataError(rec.path.string() + " decodes smaller than the " + std::to_string(max_res) + " crop");
    }
    const auto pyr = options.mode == PyramidMode::downsample ? box_pyramid(center_crop(src, max_res),
                                                                           options.min_resolution)
                                                             : crop_pyramid(src, max_res, options.min_resolution);
    for (std::size_t l = 0; l < levels.size(); ++l) {
      image::write_png(root / std::to_string(levels[l]) / store_name(rec), pyr[l], 16);
    }
  });
  write_manifest(root / "manifest.csv", manifest);
  return ResolutionStore::open(root);
}

train::InMemorySource load_source(const ResolutionStore& store, const std::vector<std::size_t>& resolutions) {
  train::InMemorySource out;
  const auto wanted = resolutions.empty() ? store.resolutions() : resolutions;
  for (auto r : wanted) {
    for (const auto& f : store.files(r)) {
      const auto img = image::read_image(f);
      if (img.width != r || img.height != r) throw DataError(f.string() + " has the wrong size for folder " + std::to_string(r));
      out.add(r, image::to_tensor<float>(img));
    }
  }
  return out;
}

train::InMemorySource pyramid_source(const std::vector<Image>& images, std::size_t min_resolution) {
  train::InMemorySource out;
  for (const auto& img : images) {
    for (const auto& level : box_pyramid(img, min_resolution)) out.add(level.width, image::to_tensor<float>(level));
  }
  return out;
}

}  // namespace pgf::data
