#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pgf/data/records.hpp"
#include "pgf/image/image.hpp"

namespace pgf::data {

inline constexpr int kPaletteCount = 3;

// "Temperate", "Arid", "Silty": land and water colours differ per palette.
const std::string& palette_name(int palette);
int palette_from_river(const std::string& river);  // -1 if not a synthetic river name

struct SynthOptions {
  std::optional<int> palette;      // drawn from the seed when unset
  double width_min = 0.08;         // river width as a fraction of the side
  double width_max = 0.15;
  double amplitude_max = 0.12;     // per sinusoid, fraction of the side
};

struct SynthRiver {
  image::Image image;
  std::vector<std::uint8_t> mask;  // row-major, 1 = water
  int palette = 0;
  bool vertical = false;

  double coverage() const;
};

// Deterministic per (seed, resolution, options). The mask is a single
// 4-connected band spanning the frame from one edge to the opposite one.
SynthRiver synth_river(std::uint64_t seed, std::size_t resolution, const SynthOptions& options = {});

// Writes count images "Synth<Palette>_2024_<i>.png" plus manifest.csv.
std::vector<ImageRecord> synth_corpus(const std::filesystem::path& out_dir, std::size_t count, std::size_t resolution,
                                      std::uint64_t seed, std::size_t threads = 1);

}  // namespace pgf::data
