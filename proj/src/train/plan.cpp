#include "pgf/train/plan.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace pgf::train {

std::string to_string(LossKind kind) { return kind == LossKind::wgan_gp ? "wgan-gp" : "dcgan"; }

std::string to_string(Preset preset) {
  switch (preset) {
    case Preset::paper: return "paper";
    case Preset::desk: return "desk";
    case Preset::dcgan: return "dcgan";
  }
  return "?";
}

Preset parse_preset(const std::string& name) {
  if (name == "paper") return Preset::paper;
  if (name == "desk") return Preset::desk;
  if (name == "dcgan") return Preset::dcgan;
  throw std::invalid_argument("unknown preset '" + name + "' (expected paper, desk or dcgan)");
}

void TrainPlan::validate() const {
  if (stages.empty()) throw std::invalid_argument("plan has no stages");
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  if (checkpoint_interval == 0) throw std::invalid_argument("checkpoint interval must be positive");
  if (metrics_interval == 0) throw std::invalid_argument("metrics interval must be positive");
  if (critic_steps == 0) throw std::invalid_argument("critic steps must be positive");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw std::invalid_argument("learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("Adam betas must lie in [0, 1)");
  }
  if (gp_lambda < 0.0 || drift_epsilon < 0.0) throw std::invalid_argument("loss coefficients must be >= 0");
  for (const auto& s : stages) {
    if (s.iterations == 0) throw std::invalid_argument("stage budgets must be positive");
  }
  network.validate();
  if (network.mode == nets::NetMode::dcgan_fixed) {
    if (stages.size() != 1 || stages[0].resolution != network.max_resolution) {
      throw std::invalid_argument("a fixed-resolution plan needs exactly one stage at the network resolution");
    }
  } else {
    for (std::size_t i = 0; i < stages.size(); ++i) {
      if (stages[i].resolution != (std::size_t{4} << i)) {
        throw std::invalid_argument("stage resolutions must double from 4; stage " + std::to_string(i) + " is " +
                                    std::to_string(stages[i].resolution));
      }
    }
    if (stages.back().resolution != network.max_resolution) {
      throw std::invalid_argument("final stage resolution " + std::to_string(stages.back().resolution) +
                                  " differs from network resolution " + std::to_string(network.max_resolution));
    }
  }
  if (loss == LossKind::wgan_gp && network.head != nets::HeadKind::wgan_scalar) {
    throw std::invalid_argument("wgan-gp training needs a wgan-scalar discriminator head");
  }
  if (loss == LossKind::dcgan && network.head != nets::HeadKind::sigmoid) {
    throw std::invalid_argument("dcgan training needs a sigmoid discriminator head");
  }
}

std::size_t TrainPlan::total_iterations() const {
  std::size_t n = 0;
  for (const auto& s : stages) n += s.iterations;
  return n;
}

std::size_t TrainPlan::fade_iterations(std::size_t stage) const {
  if (stage == 0 || fade_images == 0) return 0;
  return std::min(stages.at(stage).iterations, (fade_images + batch_size - 1) / batch_size);
}

std::size_t TrainPlan::checkpoint_count() const {
  std::size_t n = 0;
  for (const auto& s : stages) n += (s.iterations + checkpoint_interval - 1) / checkpoint_interval;
  return n;
}

std::uint64_t TrainPlan::hash() const {
  // FNV-1a over the canonical text form.
  const std::string text = format_plan(*this);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

TrainPlan make_plan(Preset preset, const PlanOverrides& o) {
  TrainPlan plan;
  switch (preset) {
    case Preset::paper:
      plan.stages.push_back({4, 48000});
      for (std::size_t r = 8; r <= 512; r *= 2) plan.stages.push_back({r, 96000});
      plan.stages.push_back({1024, 500000});
      break;
    case Preset::desk:
      plan.stages = {{4, 2000}, {8, 3000}, {16, 3000}, {32, 4000}};
      plan.fade_images = 4000;
      plan.checkpoint_interval = 1000;
      plan.network.max_resolution = 32;
      plan.network.channel_base = 64;
      plan.network.channel_max = 64;
      break;
    case Preset::dcgan:
      plan.network = nets::NetworkSpec::dcgan(64);
      plan.stages = {{64, 1000}};
      plan.fade_images = 0;
      plan.checkpoint_interval = 500;
      plan.loss = LossKind::dcgan;
      plan.beta1 = 0.5;
      plan.beta2 = 0.999;
      plan.gp_lambda = 0.0;
      plan.drift_epsilon = 0.0;
      break;
  }
  if (o.stages) plan.stages = *o.stages;
  if (o.network) plan.network = *o.network;
  if (o.batch_size) plan.batch_size = *o.batch_size;
  if (o.fade_images) plan.fade_images = *o.fade_images;
  if (o.checkpoint_interval) plan.checkpoint_interval = *o.checkpoint_interval;
  if (o.metrics_interval) plan.metrics_interval = *o.metrics_interval;
  if (o.critic_steps) plan.critic_steps = *o.critic_steps;
  if (o.seed) plan.seed = *o.seed;
  if (o.lr) plan.lr = *o.lr;
  if (o.beta1) plan.beta1 = *o.beta1;
  if (o.beta2) plan.beta2 = *o.beta2;
  if (o.gp_lambda) plan.gp_lambda = *o.gp_lambda;
  if (o.drift_epsilon) plan.drift_epsilon = *o.drift_epsilon;
  plan.validate();
  return plan;
}

double alpha_schedule(std::size_t images_shown, std::size_t fade_images) {
  if (fade_images == 0) return 0.0;
  const double a = 1.0 - static_cast<double>(images_shown) / static_cast<double>(fade_images);
  return std::clamp(a, 0.0, 1.0);
}

std::vector<StagePlan> parse_stage_list(const std::string& text) {
  std::vector<StagePlan> out;
  std::istringstream is(text);
  std::string item;
  while (std::getline(is, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw std::invalid_argument("stage '" + item + "' is not resolution:iterations");
    try {
      std::size_t p1 = 0, p2 = 0;
      const std::string rs = item.substr(0, colon), is2 = item.substr(colon + 1);
      const unsigned long long r = std::stoull(rs, &p1), n = std::stoull(is2, &p2);
      if (p1 != rs.size() || p2 != is2.size()) throw std::invalid_argument("trailing characters");
      out.push_back({static_cast<std::size_t>(r), static_cast<std::size_t>(n)});
    } catch (const std::exception&) {
      throw std::invalid_argument("stage '" + item + "' is not resolution:iterations");
    }
  }
  if (out.empty()) throw std::invalid_argument("empty stage list");
  return out;
}

std::string format_plan(const TrainPlan& plan) {
  std::ostringstream os;
  os.precision(17);
  os << "stages =";
  for (const auto& s : plan.stages) os << ' ' << s.resolution << ':' << s.iterations;
  os << "\nfade_images = " << plan.fade_images << "\nbatch_size = " << plan.batch_size << "\nlr = " << plan.lr
     << "\nbeta1 = " << plan.beta1 << "\nbeta2 = " << plan.beta2 << "\nepsilon = " << plan.epsilon
     << "\ngp_lambda = " << plan.gp_lambda << "\ndrift_epsilon = " << plan.drift_epsilon
     << "\ncheckpoint_interval = " << plan.checkpoint_interval << "\nmetrics_interval = " << plan.metrics_interval
     << "\ncritic_steps = " << plan.critic_steps << "\nseed = " << plan.seed << "\nloss = " << to_string(plan.loss)
     << "\n"
     << nets::format_network_spec(plan.network);
  return os.str();
}

}  // namespace pgf::train
