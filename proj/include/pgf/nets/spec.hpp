#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "pgf/tensor/tensor.hpp"

namespace pgf::nets {

enum class NetMode { progressive, dcgan_fixed };
enum class HeadKind { wgan_scalar, sigmoid };

std::string to_string(NetMode mode);
std::string to_string(HeadKind head);

struct StageConfig {
  std::size_t resolution = 4;  // 4 * 2^index
  std::size_t channels = 1;
  std::size_t index = 0;
};

struct NetworkSpec {
  std::size_t latent_dim = 512;
  std::size_t max_resolution = 1024;
  std::size_t channel_base = 256;
  std::size_t channel_max = 256;
  NetMode mode = NetMode::progressive;
  HeadKind head = HeadKind::wgan_scalar;
  bool equalized_lr = true;

  // Throws std::invalid_argument on a bad configuration.
  void validate() const;
  // Progressive: one stage per resolution 4..max. DCGAN: the single output stage.
  std::vector<StageConfig> stages() const;
  std::size_t num_stages() const { return stages().size(); }
  // True for a DCGAN asked to emit more than 64x64, the regime observed to diverge.
  bool experimental() const { return mode == NetMode::dcgan_fixed && max_resolution > 64; }

  static NetworkSpec dcgan(std::size_t resolution = 64);
};

bool is_power_of_two(std::size_t v);
std::size_t log2_exact(std::size_t v);

// Feature maps at `resolution`. Progressive: min(base, max) up to 32x32 and
// halved per doubling beyond that. DCGAN: base * 4 / resolution, capped.
std::size_t stage_channels(const NetworkSpec& spec, std::size_t resolution);

// Runtime weight multiplier sqrt(2 / fan_in); fan_in is the product of all
// dimensions but the first. Returns 1 when equalization is disabled.
double equalized_weight_scale(const Shape& weight_shape, bool enabled = true);

// Plain "key = value" lines; '#' starts a comment. Recognized keys:
// latent_dim, max_resolution, channel_base, channel_max, mode, head, equalized_lr.
NetworkSpec parse_network_spec(const std::string& text, NetworkSpec base = {});
NetworkSpec load_network_spec(const std::filesystem::path& path, NetworkSpec base = {});
std::string format_network_spec(const NetworkSpec& spec);

}  // namespace pgf::nets
