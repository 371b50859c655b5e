#include "pgf/nets/spec.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace pgf::nets {

std::string to_string(NetMode mode) { return mode == NetMode::progressive ? "progressive" : "dcgan-fixed"; }
std::string to_string(HeadKind head) { return head == HeadKind::wgan_scalar ? "wgan-scalar" : "sigmoid"; }

bool is_power_of_two(std::size_t v) { return v != 0 && (v & (v - 1)) == 0; }

std::size_t log2_exact(std::size_t v) {
  if (!is_power_of_two(v)) throw std::invalid_argument(std::to_string(v) + " is not a power of two");
  std::size_t k = 0;
  while ((std::size_t{1} << k) < v) ++k;
  return k;
}

void NetworkSpec::validate() const {
  if (latent_dim == 0) throw std::invalid_argument("latent_dim must be positive");
  if (channel_base == 0 || channel_max == 0) throw std::invalid_argument("channel counts must be positive");
  if (max_resolution < 4 || max_resolution > 1024 || !is_power_of_two(max_resolution)) {
    throw std::invalid_argument("max_resolution must be a power of two in [4, 1024], got " +
                                std::to_string(max_resolution));
  }
  if (mode == NetMode::dcgan_fixed && max_resolution < 8) {
    throw std::invalid_argument("dcgan-fixed mode needs an output resolution of at least 8");
  }
}

std::vector<StageConfig> NetworkSpec::stages() const {
  validate();
  std::vector<StageConfig> out;
  if (mode == NetMode::dcgan_fixed) {
    out.push_back({max_resolution, stage_channels(*this, max_resolution), 0});
    return out;
  }
  std::size_t index = 0;
  for (std::size_t r = 4; r <= max_resolution; r *= 2, ++index) {
    out.push_back({r, stage_channels(*this, r), index});
  }
  return out;
}

NetworkSpec NetworkSpec::dcgan(std::size_t resolution) {
  NetworkSpec s;
  s.mode = NetMode::dcgan_fixed;
  s.head = HeadKind::sigmoid;
  s.latent_dim = 100;
  s.max_resolution = resolution;
  return s;
}

std::size_t stage_channels(const NetworkSpec& spec, std::size_t resolution) {
  const std::size_t top = std::min(spec.channel_base, spec.channel_max);
  std::size_t c;
  if (spec.mode == NetMode::dcgan_fixed) {
    c = std::min(spec.channel_max, spec.channel_base * 4 / resolution);
  } else {
    c = resolution <= 32 ? top : top / (resolution / 32);
  }
  return std::max<std::size_t>(c, 1);
}

double equalized_weight_scale(const Shape& weight_shape, bool enabled) {
  if (weight_shape.size() < 2) throw std::invalid_argument("equalized_weight_scale needs rank >= 2");
  if (!enabled) return 1.0;
  std::size_t fan_in = 1;
  for (std::size_t i = 1; i < weight_shape.size(); ++i) fan_in *= weight_shape[i];
  return std::sqrt(2.0 / static_cast<double>(fan_in));
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t parse_count(const std::string& key, const std::string& value) {
  std::size_t pos = 0;
  long long v = 0;
  try {
    v = std::stoll(value, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != value.size() || v <= 0) throw std::invalid_argument(key + ": expected a positive integer, got '" + value + "'");
  return static_cast<std::size_t>(v);
}

}  // namespace

NetworkSpec parse_network_spec(const std::string& text, NetworkSpec spec) {
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("network spec line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "latent_dim") {
      spec.latent_dim = parse_count(key, value);
    } else if (key == "max_resolution") {
      spec.max_resolution = parse_count(key, value);
    } else if (key == "channel_base") {
      spec.channel_base = parse_count(key, value);
    } else if (key == "channel_max") {
      spec.channel_max = parse_count(key, value);
    } else if (key == "mode") {
      if (value == "progressive") spec.mode = NetMode::progressive;
      else if (value == "dcgan-fixed" || value == "dcgan") spec.mode = NetMode::dcgan_fixed;
      else throw std::invalid_argument("mode: expected progressive or dcgan-fixed, got '" + value + "'");
    } else if (key == "head") {
      if (value == "wgan-scalar" || value == "wgan") spec.head = HeadKind::wgan_scalar;
      else if (value == "sigmoid") spec.head = HeadKind::sigmoid;
      else throw std::invalid_argument("head: expected wgan-scalar or sigmoid, got '" + value + "'");
    } else if (key == "equalized_lr") {
      if (value == "true" || value == "1" || value == "on") spec.equalized_lr = true;
      else if (value == "false" || value == "0" || value == "off") spec.equalized_lr = false;
      else throw std::invalid_argument("equalized_lr: expected true or false");
    } else {
      throw std::invalid_argument("network spec line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
  }
  spec.validate();
  return spec;
}

NetworkSpec load_network_spec(const std::filesystem::path& path, NetworkSpec base) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open network spec " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_network_spec(ss.str(), base);
}

std::string format_network_spec(const NetworkSpec& spec) {
  std::ostringstream os;
  os << "latent_dim = " << spec.latent_dim << "\n"
     << "max_resolution = " << spec.max_resolution << "\n"
     << "channel_base = " << spec.channel_base << "\n"
     << "channel_max = " << spec.channel_max << "\n"
     << "mode = " << to_string(spec.mode) << "\n"
     << "head = " << to_string(spec.head) << "\n"
     << "equalized_lr = " << (spec.equalized_lr ? "true" : "false") << "\n";
  return os.str();
}

}  // namespace pgf::nets
