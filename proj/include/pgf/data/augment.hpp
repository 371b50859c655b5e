#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pgf/data/records.hpp"
#include "pgf/image/image.hpp"

namespace pgf::data {

enum class TransformKind { random_crop, hue_saturation, dihedral, gaussian_noise, affine, random_rotation };

struct TransformStep {
  TransformKind kind;
  std::string variant;  // file-name suffix, unique within a spec
};

struct AugmentRanges {
  double crop_min = 0.80, crop_max = 0.95;  // fraction of each side kept
  double hue = 0.1;                         // +-, fraction of the hue circle
  double saturation = 0.2;                  // +-, additive
  double noise_min = 0.01, noise_max = 0.05;  // sigma, fraction of [0, 1]
  double shear = 0.1;                       // +-, per axis
  double translate = 0.1;                   // +-, fraction of the side
  double rotation_degrees = 25.0;           // +-
};

struct AugmentSpec {
  std::vector<TransformStep> steps;
  AugmentRanges ranges;
  std::uint64_t seed = 0;

  // crop1, crop2, hsv, dihedral, noise, affine, rot1, rot2, rot3.
  static AugmentSpec defaults(std::uint64_t seed = 0);
  void validate() const;
};

struct Augmented {
  std::string variant;
  image::Image image;
};

// One output per step, each the size of the input. Step i draws from a stream
// derived from (seed, stream, i), so outputs do not depend on call order.
std::vector<Augmented> augment(const image::Image& img, const AugmentSpec& spec, std::uint64_t stream = 0);

// Stable per-image stream id.
std::uint64_t stream_for(const std::string& stem);

struct AugmentResult {
  std::vector<ImageRecord> records;  // originals and variants, sorted by name
  std::filesystem::path manifest;
};

// Writes, for every input, "<stem>.png" (the original, losslessly) plus one
// "<stem>_<variant>.png" per step, and out_dir/manifest.csv listing them all.
AugmentResult augment_corpus(const std::vector<ImageRecord>& inputs, const std::filesystem::path& out_dir,
                             const AugmentSpec& spec, std::size_t threads = 1);

}  // namespace pgf::data
