#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pgf/metrics/laplacian.hpp"

namespace pgf::metrics {

struct ChannelStats {
  std::vector<double> mean, stddev;
};

// count x dim, row-major. A descriptor is a patch flattened channel-major:
// index = c * side^2 + dy * side + dx.
struct PatchDescriptorSet {
  std::size_t count = 0, dim = 0, channels = 0, patch_side = 0;
  std::vector<double> data;
  ChannelStats stats;  // what was used to normalize `data`

  const double* row(std::size_t i) const { return data.data() + i * dim; }
};

struct DescriptorConfig {
  std::size_t patches_per_image = 128;
  std::size_t patch_side = 7;
};

// Patch corners are uniform per image from a stream derived from (seed, image
// index). Normalized with the set's own per-channel statistics.
PatchDescriptorSet extract_descriptors(const std::vector<Plane>& images, const DescriptorConfig& config,
                                       std::uint64_t seed);
// Same, but normalized with given statistics (e.g. those of the real set).
PatchDescriptorSet extract_descriptors(const std::vector<Plane>& images, const DescriptorConfig& config,
                                       std::uint64_t seed, const ChannelStats& normalize_with);

// From a raw (unnormalized) set of the given layout.
ChannelStats channel_stats(const std::vector<double>& data, std::size_t count, std::size_t channels,
                           std::size_t patch_side);

// n unit vectors of length dim, row-major, Gaussian-then-normalized from `seed`.
std::vector<double> projection_directions(std::size_t dim, std::size_t n, std::uint64_t seed);

// Mean over directions of mean |sort(A v) - sort(B v)|. The larger set is
// subsampled (seeded) to the size of the smaller; symmetric in A and B.
double sliced_wasserstein(const PatchDescriptorSet& a, const PatchDescriptorSet& b, std::size_t n_projections = 512,
                          std::uint64_t seed = 0);
// Per-direction scores, in direction order.
std::vector<double> sliced_wasserstein_per_direction(const PatchDescriptorSet& a, const PatchDescriptorSet& b,
                                                     std::size_t n_projections, std::uint64_t seed);

struct SwdConfig {
  DescriptorConfig descriptors;
  std::size_t n_projections = 512;
  std::uint64_t seed = 1;
};

struct SwdReport {
  std::map<std::size_t, double> scores;
  std::map<std::size_t, std::size_t> patch_side;  // after clamping to tiny levels
  std::size_t n_real = 0, n_fake = 0, n_projections = 0;
  std::uint64_t seed = 0;

  // resolution,score,n_real,n_fake,n_projections,seed
  std::string to_csv() const;
};

// Images share one square size S. For each requested resolution r the score
// is taken at the Laplacian band of side r (the Gaussian residual for the
// smallest). Patches are min(patch_side, r) wide. Descriptors of both sets
// are normalized with the real set's statistics.
SwdReport swd_report(const std::vector<Plane>& real, const std::vector<Plane>& fake,
                     const std::vector<std::size_t>& resolutions, const SwdConfig& config);

// All images of a directory (or, for a resolution store, of its largest or
// the requested folder) as [3, S, S] planes in [-1, 1].
std::vector<Plane> load_planes(const std::filesystem::path& dir, std::size_t resolution = 0,
                               std::size_t limit = 0);

}  // namespace pgf::metrics
