#include "pgf/data/augment.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "parallel.hpp"
#include "pgf/data/transforms.hpp"
#include "pgf/tensor/random.hpp"

namespace pgf::data {

namespace fs = std::filesystem;
using image::Image;

namespace {

Image random_crop(const Image& img, const AugmentRanges& r, Rng& rng) {
  const double f = rng.uniform(r.crop_min, r.crop_max);
  const auto w = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(f * img.width)));
  const auto h = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(f * img.height)));
  const auto x0 = rng.below(img.width - w + 1);
  const auto y0 = rng.below(img.height - h + 1);
  return resize_bilinear(crop(img, x0, y0, w, h), img.width, img.height);
}

Image gaussian_noise(const Image& img, const AugmentRanges& r, Rng& rng) {
  const double sigma = rng.uniform(r.noise_min, r.noise_max);
  Image out = img;
  for (auto& v : out.pixels) v = static_cast<float>(std::clamp(v + sigma * rng.normal(), 0.0, 1.0));
  return out;
}

Image random_affine(const Image& img, const AugmentRanges& r, Rng& rng) {
  const double shx = rng.uniform(-r.shear, r.shear), shy = rng.uniform(-r.shear, r.shear);
  const double tx = rng.uniform(-r.translate, r.translate) * img.width;
  const double ty = rng.uniform(-r.translate, r.translate) * img.height;
  const double a[4] = {1.0, shx, shy, 1.0};
  return warp_affine(img, a, tx, ty);
}

Image apply(const TransformStep& step, const Image& img, const AugmentRanges& r, Rng& rng) {
  switch (step.kind) {
    case TransformKind::random_crop:
      return random_crop(img, r, rng);
    case TransformKind::hue_saturation: {
      const double dh = rng.uniform(-r.hue, r.hue);
      return hsv_jitter(img, dh, rng.uniform(-r.saturation, r.saturation));
    }
    case TransformKind::dihedral: {
      // Quarter turns would change a non-square image's shape.
      const bool square = img.width == img.height;
      const int e = square ? static_cast<int>(rng.below(8)) : 2 * static_cast<int>(rng.below(4));
      return dihedral(img, e);
    }
    case TransformKind::gaussian_noise:
      return gaussian_noise(img, r, rng);
    case TransformKind::affine:
      return random_affine(img, r, rng);
    case TransformKind::random_rotation:
      return rotate(img, rng.uniform(-r.rotation_degrees, r.rotation_degrees));
  }
  throw DataError("unknown transform");
}

}  // namespace

AugmentSpec AugmentSpec::defaults(std::uint64_t seed) {
  AugmentSpec s;
  s.seed = seed;
  s.steps = {{TransformKind::random_crop, "crop1"},    {TransformKind::random_crop, "crop2"},
             {TransformKind::hue_saturation, "hsv"},   {TransformKind::dihedral, "dihedral"},
             {TransformKind::gaussian_noise, "noise"}, {TransformKind::affine, "affine"},
             {TransformKind::random_rotation, "rot1"}, {TransformKind::random_rotation, "rot2"},
             {TransformKind::random_rotation, "rot3"}};
  return s;
}

void AugmentSpec::validate() const {
  std::set<std::string> seen;
  for (const auto& s : steps) {
    if (s.variant.empty() || s.variant.find_first_of("_./\\") != std::string::npos) {
      throw DataError("variant name '" + s.variant + "' must be non-empty without '_', '.', or slashes");
    }
    if (!seen.insert(s.variant).second) throw DataError("duplicate variant name '" + s.variant + "'");
  }
  const auto& r = ranges;
  if (!(0 < r.crop_min && r.crop_min <= r.crop_max && r.crop_max <= 1)) throw DataError("crop range outside (0, 1]");
  if (!(0 <= r.noise_min && r.noise_min <= r.noise_max)) throw DataError("bad noise range");
  if (r.hue < 0 || r.saturation < 0 || r.shear < 0 || r.translate < 0 || r.rotation_degrees < 0) {
    throw DataError("augmentation ranges must be non-negative");
  }
}

std::vector<Augmented> augment(const Image& img, const AugmentSpec& spec, std::uint64_t stream) {
  spec.validate();
  if (img.empty()) throw DataError("cannot augment an empty image");
  const auto base = Rng::derive(spec.seed, stream);
  std::vector<Augmented> out;
  out.reserve(spec.steps.size());
  for (std::size_t i = 0; i < spec.steps.size(); ++i) {
    Rng rng(Rng::derive(base, i));
    out.push_back({spec.steps[i].variant, apply(spec.steps[i], img, spec.ranges, rng)});
  }
  return out;
}

std::uint64_t stream_for(const std::string& stem) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : stem) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

AugmentResult augment_corpus(const std::vector<ImageRecord>& inputs, const fs::path& out_dir,
                             const AugmentSpec& spec, std::size_t threads) {
  spec.validate();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw DataError("cannot create " + out_dir.string());
  std::set<std::string> stems;
  for (const auto& r : inputs) {
    if (!stems.insert(r.stem()).second) throw DataError("duplicate input image " + r.stem());
  }

  const std::size_t per = spec.steps.size() + 1;
  std::vector<ImageRecord> records(inputs.size() * per);
  detail::parallel_for(inputs.size(), threads, [&](std::size_t i) {
    const auto& src = inputs[i];
    Image img;
    try {
      img = image::read_image(src.path);
    } catch (const image::ImageError& e) {
      throw DataError(e.what());
    }
    auto emit = [&](std::size_t slot, const std::string& variant, const Image& im) {
      ImageRecord rec = src;
      rec.variant = variant;
      rec.extension = ".png";
      rec.width = im.width;
      rec.height = im.height;
      rec.path = out_dir / format_filename(rec);
      image::write_png(rec.path, im, 8);
      records[i * per + slot] = std::move(rec);
    };
    emit(0, "", img);
    auto outs = augment(img, spec, stream_for(src.stem()));
    for (std::size_t k = 0; k < outs.size(); ++k) emit(k + 1, outs[k].variant, outs[k].image);
  });
  std::sort(records.begin(), records.end(),
            [](const ImageRecord& a, const ImageRecord& b) { return a.path.filename() < b.path.filename(); });
  AugmentResult res{std::move(records), out_dir / "manifest.csv"};
  write_manifest(res.manifest, res.records);
  return res;
}

}  // namespace pgf::data
