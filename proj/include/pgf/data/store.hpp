#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <vector>

#include "pgf/data/records.hpp"
#include "pgf/image/image.hpp"
#include "pgf/train/trainer.hpp"

namespace pgf::data {

enum class PyramidMode {
  downsample,  // repeated 2x2 box means of the largest center crop
  crop,        // center crop of the source at every resolution
};

PyramidMode parse_pyramid_mode(const std::string& s);
std::string to_string(PyramidMode m);

// Folders <root>/<R>/ holding R x R RGB images named "<stem>_<variant>.png"
// (variant "orig" for an unaugmented source).
struct ResolutionStore {
  std::filesystem::path root;
  std::map<std::size_t, std::size_t> counts;

  std::vector<std::size_t> resolutions() const;
  bool has(std::size_t resolution) const { return counts.count(resolution) != 0; }
  std::vector<std::filesystem::path> files(std::size_t resolution) const;  // sorted by name

  // Scans numeric sub-folders; throws DataError when root is missing.
  static ResolutionStore open(const std::filesystem::path& root);
  // Decodes every file: equal counts across folders and R x R x 3 everywhere.
  void verify() const;
};

struct StoreOptions {
  std::size_t max_resolution = 1024;
  std::size_t min_resolution = 4;
  PyramidMode mode = PyramidMode::downsample;
  std::size_t threads = 1;
};

// 16-bit levels max, max/2, ..., min. Downsample levels are exact integer
// means: next = floor((a + b + c + d + 2) / 4) on the 16-bit samples.
std::vector<image::Image> box_pyramid(const image::Image& top, std::size_t min_resolution);
std::vector<image::Image> crop_pyramid(const image::Image& src, std::size_t max_resolution,
                                       std::size_t min_resolution);

std::string store_name(const ImageRecord& rec);

// Throws DataError for an unwritable root or an image smaller than max_resolution.
ResolutionStore build_resolution_store(const std::vector<ImageRecord>& manifest, const std::filesystem::path& root,
                                       const StoreOptions& options);

// Whole store (selected resolutions, or all) decoded into memory.
train::InMemorySource load_source(const ResolutionStore& store, const std::vector<std::size_t>& resolutions = {});
// Downsample pyramids of in-memory square images, without touching disk.
train::InMemorySource pyramid_source(const std::vector<image::Image>& images, std::size_t min_resolution = 4);

}  // namespace pgf::data
