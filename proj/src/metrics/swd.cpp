#include "pgf/metrics/swd.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "pgf/data/store.hpp"
#include "pgf/image/image.hpp"
#include "pgf/tensor/random.hpp"

namespace pgf::metrics {

namespace fs = std::filesystem;

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMat>;

// Directions are processed in fixed-size blocks so per-direction results never
// depend on how many directions or workers there are.
constexpr std::size_t kDirectionBlock = 32;
constexpr std::uint64_t kSubsampleStream = 0xD1CE;

struct RawSet {
  std::size_t count = 0, dim = 0, channels = 0, side = 0;
  std::vector<double> data;
};

RawSet extract_raw(const std::vector<Plane>& images, const DescriptorConfig& cfg, std::uint64_t seed) {
  if (images.empty()) throw MetricError("no images to extract descriptors from");
  if (cfg.patch_side == 0 || cfg.patches_per_image == 0) throw MetricError("patch side and count must be >= 1");
  const auto& first = images.front();
  if (first.rank() != 3) throw MetricError("expected [C, H, W] images");
  RawSet s;
  s.channels = first.dim(0);
  s.side = cfg.patch_side;
  s.dim = s.channels * s.side * s.side;
  s.count = images.size() * cfg.patches_per_image;
  s.data.resize(s.count * s.dim);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& img = images[i];
    if (img.shape() != first.shape()) {
      throw MetricError("images differ in shape: " + to_string(img.shape()) + " vs " + to_string(first.shape()));
    }
    const std::size_t H = img.dim(1), W = img.dim(2);
    if (H < s.side || W < s.side) {
      throw MetricError("level " + std::to_string(W) + "x" + std::to_string(H) + " is smaller than the " +
                        std::to_string(s.side) + "-pixel patch");
    }
    Rng rng(Rng::derive(seed, i));
    for (std::size_t p = 0; p < cfg.patches_per_image; ++p) {
      const auto y0 = rng.below(H - s.side + 1), x0 = rng.below(W - s.side + 1);
      double* out = s.data.data() + (i * cfg.patches_per_image + p) * s.dim;
      for (std::size_t c = 0; c < s.channels; ++c)
        for (std::size_t dy = 0; dy < s.side; ++dy)
          for (std::size_t dx = 0; dx < s.side; ++dx)
            *out++ = img[(c * H + y0 + dy) * W + x0 + dx];
    }
  }
  return s;
}

PatchDescriptorSet normalize(RawSet raw, const ChannelStats& stats) {
  if (stats.mean.size() != raw.channels || stats.stddev.size() != raw.channels) {
    throw MetricError("normalization statistics have the wrong channel count");
  }
  const std::size_t per = raw.side * raw.side;
  for (std::size_t r = 0; r < raw.count; ++r) {
    double* row = raw.data.data() + r * raw.dim;
    for (std::size_t c = 0; c < raw.channels; ++c) {
      const double m = stats.mean[c], sd = stats.stddev[c];
      for (std::size_t k = 0; k < per; ++k) row[c * per + k] = (row[c * per + k] - m) / sd;
    }
  }
  PatchDescriptorSet s;
  s.count = raw.count;
  s.dim = raw.dim;
  s.channels = raw.channels;
  s.patch_side = raw.side;
  s.data = std::move(raw.data);
  s.stats = stats;
  return s;
}

// Rows of `set` chosen by a seeded partial shuffle, kept in index order.
RowMat subsample(const PatchDescriptorSet& set, std::size_t n, std::uint64_t seed) {
  const ConstRowMap all(set.data.data(), set.count, set.dim);
  if (n == set.count) return all;
  std::vector<std::size_t> idx(set.count);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(Rng::derive(seed, kSubsampleStream));
  for (std::size_t i = 0; i < n; ++i) std::swap(idx[i], idx[i + rng.below(set.count - i)]);
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  RowMat out(n, set.dim);
  for (std::size_t i = 0; i < n; ++i) out.row(i) = all.row(idx[i]);
  return out;
}

}  // namespace

ChannelStats channel_stats(const std::vector<double>& data, std::size_t count, std::size_t channels,
                           std::size_t patch_side) {
  const std::size_t per = patch_side * patch_side, dim = channels * per;
  if (data.size() != count * dim || count == 0) throw MetricError("descriptor data has the wrong size");
  ChannelStats st;
  st.mean.assign(channels, 0.0);
  st.stddev.assign(channels, 0.0);
  const double n = double(count) * per;
  for (std::size_t c = 0; c < channels; ++c) {
    double sum = 0;
    for (std::size_t r = 0; r < count; ++r)
      for (std::size_t k = 0; k < per; ++k) sum += data[r * dim + c * per + k];
    const double m = sum / n;
    double ss = 0;
    for (std::size_t r = 0; r < count; ++r)
      for (std::size_t k = 0; k < per; ++k) {
        const double d = data[r * dim + c * per + k] - m;
        ss += d * d;
      }
    st.mean[c] = m;
    const double sd = std::sqrt(ss / n);
    st.stddev[c] = sd > 0 ? sd : 1.0;  // a constant channel is only centred
  }
  return st;
}

PatchDescriptorSet extract_descriptors(const std::vector<Plane>& images, const DescriptorConfig& config,
                                       std::uint64_t seed) {
  auto raw = extract_raw(images, config, seed);
  const auto stats = channel_stats(raw.data, raw.count, raw.channels, raw.side);
  return normalize(std::move(raw), stats);
}

PatchDescriptorSet extract_descriptors(const std::vector<Plane>& images, const DescriptorConfig& config,
                                       std::uint64_t seed, const ChannelStats& normalize_with) {
  return normalize(extract_raw(images, config, seed), normalize_with);
}

std::vector<double> projection_directions(std::size_t dim, std::size_t n, std::uint64_t seed) {
  if (dim == 0) throw MetricError("projection dimension must be >= 1");
  std::vector<double> dirs(dim * n);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    double* v = dirs.data() + i * dim;
    double norm2 = 0;
    do {
      norm2 = 0;
      for (std::size_t k = 0; k < dim; ++k) {
        v[k] = rng.normal();
        norm2 += v[k] * v[k];
      }
    } while (norm2 == 0);
    const double inv = 1.0 / std::sqrt(norm2);
    for (std::size_t k = 0; k < dim; ++k) v[k] *= inv;
  }
  return dirs;
}

std::vector<double> sliced_wasserstein_per_direction(const PatchDescriptorSet& a, const PatchDescriptorSet& b,
                                                     std::size_t n_projections, std::uint64_t seed) {
  if (a.count == 0 || b.count == 0) throw MetricError("sliced_wasserstein needs non-empty descriptor sets");
  if (a.dim != b.dim) {
    throw MetricError("descriptor dimensions differ: " + std::to_string(a.dim) + " vs " + std::to_string(b.dim));
  }
  if (n_projections == 0) throw MetricError("need at least one projection");
  const std::size_t n = std::min(a.count, b.count), d = a.dim;
  const RowMat A = subsample(a, n, seed), B = subsample(b, n, seed);
  const auto dirs = projection_directions(d, n_projections, seed);

  std::vector<double> scores(n_projections);
  std::vector<double> pa(n), pb(n);
  for (std::size_t start = 0; start < n_projections; start += kDirectionBlock) {
    const std::size_t k = std::min(kDirectionBlock, n_projections - start);
    RowMat block = RowMat::Zero(kDirectionBlock, d);
    block.topRows(k) = ConstRowMap(dirs.data() + start * d, k, d);
    const Eigen::MatrixXd PA = A * block.transpose(), PB = B * block.transpose();
    for (std::size_t j = 0; j < k; ++j) {
      for (std::size_t i = 0; i < n; ++i) {
        pa[i] = PA(i, j);
        pb[i] = PB(i, j);
      }
      std::sort(pa.begin(), pa.end());
      std::sort(pb.begin(), pb.end());
      double s = 0;
      for (std::size_t i = 0; i < n; ++i) s += std::abs(pa[i] - pb[i]);
      scores[start + j] = s / n;
    }
  }
  return scores;
}

double sliced_wasserstein(const PatchDescriptorSet& a, const PatchDescriptorSet& b, std::size_t n_projections,
                          std::uint64_t seed) {
  const auto per = sliced_wasserstein_per_direction(a, b, n_projections, seed);
  double s = 0;
  for (double v : per) s += v;
  return s / per.size();
}

std::string SwdReport::to_csv() const {
  std::ostringstream os;
  os << "resolution,score,n_real,n_fake,n_projections,seed\n";
  char buf[64];
  for (const auto& [r, score] : scores) {
    std::snprintf(buf, sizeof buf, "%.9g", score);
    os << r << ',' << buf << ',' << n_real << ',' << n_fake << ',' << n_projections << ',' << seed << '\n';
  }
  return os.str();
}

SwdReport swd_report(const std::vector<Plane>& real, const std::vector<Plane>& fake,
                     const std::vector<std::size_t>& resolutions, const SwdConfig& config) {
  if (real.empty() || fake.empty()) throw MetricError("swd_report needs real and fake images");
  if (resolutions.empty()) throw MetricError("no resolutions requested");
  const auto& shape = real.front().shape();
  if (shape.size() != 3 || shape[1] != shape[2]) throw MetricError("images must be square [C, S, S]");
  for (const auto& f : fake) {
    if (f.shape() != shape) {
      throw MetricError("fake image shape " + to_string(f.shape()) + " differs from real " + to_string(shape));
    }
  }
  const std::size_t S = shape[1];
  auto sorted = resolutions;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::size_t levels = 0;
  for (auto r : sorted) {
    if (r == 0 || r > S || S % r || ((S / r) & (S / r - 1))) {
      throw MetricError("resolution " + std::to_string(r) + " is not a power-of-two fraction of " + std::to_string(S));
    }
    levels = std::max<std::size_t>(levels, static_cast<std::size_t>(std::log2(double(S / r)) + 0.5));
  }

  auto pyramids = [&](const std::vector<Plane>& imgs) {
    std::vector<LaplacianPyramid> out;
    out.reserve(imgs.size());
    for (const auto& im : imgs) out.push_back(laplacian_pyramid(im, levels));
    return out;
  };
  const auto pr = pyramids(real), pf = pyramids(fake);

  SwdReport rep;
  rep.n_real = real.size();
  rep.n_fake = fake.size();
  rep.n_projections = config.n_projections;
  rep.seed = config.seed;
  for (auto r : sorted) {
    std::vector<Plane> br, bf;
    for (const auto& p : pr) br.push_back(p.at_resolution(r));
    for (const auto& p : pf) bf.push_back(p.at_resolution(r));
    auto dc = config.descriptors;
    dc.patch_side = std::min(dc.patch_side, r);
    const auto stream = Rng::derive(config.seed, r);
    const auto real_set = extract_descriptors(br, dc, stream);
    const auto fake_set = extract_descriptors(bf, dc, stream, real_set.stats);
    rep.scores[r] = sliced_wasserstein(real_set, fake_set, config.n_projections, stream);
    rep.patch_side[r] = dc.patch_side;
  }
  return rep;
}

std::vector<Plane> load_planes(const fs::path& dir, std::size_t resolution, std::size_t limit) {
  std::vector<fs::path> files;
  bool is_store = false;
  if (fs::is_directory(dir)) {
    for (const auto& e : fs::directory_iterator(dir)) {
      const auto name = e.path().filename().string();
      if (e.is_directory() && !name.empty() && std::all_of(name.begin(), name.end(), ::isdigit)) is_store = true;
    }
  } else {
    throw MetricError("not a directory: " + dir.string());
  }
  if (is_store) {
    const auto store = data::ResolutionStore::open(dir);
    const auto res = resolution ? resolution : store.resolutions().back();
    if (!store.has(res)) throw MetricError(dir.string() + " has no resolution " + std::to_string(res));
    files = store.files(res);
  } else {
    for (const auto& e : fs::directory_iterator(dir)) {
      auto ext = e.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
      if (e.is_regular_file() && (ext == ".png" || ext == ".jpg" || ext == ".jpeg")) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
  }
  if (limit && files.size() > limit) files.resize(limit);
  if (files.empty()) throw MetricError("no images in " + dir.string());
  std::vector<Plane> out;
  out.reserve(files.size());
  for (const auto& f : files) {
    const auto img = image::read_image(f);
    if (resolution && (img.width != resolution || img.height != resolution)) {
      throw MetricError(f.string() + " is not " + std::to_string(resolution) + "x" + std::to_string(resolution));
    }
    out.push_back(image::to_tensor<double>(img));
  }
  return out;
}

}  // namespace pgf::metrics
