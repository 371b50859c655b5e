#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pgf/nets/spec.hpp"

namespace pgf::train {

enum class LossKind { wgan_gp, dcgan };
enum class Preset { paper, desk, dcgan };

std::string to_string(LossKind kind);
std::string to_string(Preset preset);
Preset parse_preset(const std::string& name);

struct StagePlan {
  std::size_t resolution = 4;
  std::size_t iterations = 1;
};

struct TrainPlan {
  std::vector<StagePlan> stages;
  std::size_t fade_images = 40000;
  std::size_t batch_size = 16;
  double lr = 0.001;
  double beta1 = 0.0;
  double beta2 = 0.99;
  double epsilon = 1e-8;
  double gp_lambda = 10.0;
  double drift_epsilon = 0.001;
  std::size_t checkpoint_interval = 48000;
  std::size_t metrics_interval = 100;
  std::size_t critic_steps = 1;  // discriminator updates per generator update
  std::uint64_t seed = 1;
  LossKind loss = LossKind::wgan_gp;
  nets::NetworkSpec network;

  // Throws std::invalid_argument when an invariant is violated.
  void validate() const;
  std::size_t total_iterations() const;
  // Iterations of stage `s` spent fading in (0 for stage 0 or fade_images == 0).
  std::size_t fade_iterations(std::size_t stage) const;
  // ceil(budget / interval) per stage.
  std::size_t checkpoint_count() const;
  // Stable across runs and builds; identifies the schedule a checkpoint belongs to.
  std::uint64_t hash() const;
};

struct PlanOverrides {
  std::optional<std::size_t> batch_size;
  std::optional<std::size_t> fade_images;
  std::optional<std::size_t> checkpoint_interval;
  std::optional<std::size_t> metrics_interval;
  std::optional<std::size_t> critic_steps;
  std::optional<std::uint64_t> seed;
  std::optional<double> lr, beta1, beta2;
  std::optional<double> gp_lambda, drift_epsilon;
  std::optional<std::vector<StagePlan>> stages;
  std::optional<nets::NetworkSpec> network;
};

// paper: 4:48k, 8..512: 96k each, 1024: 500k. desk: 4:2k, 8:3k, 16:3k, 32:4k
// with 4,000 fade images. dcgan: fixed 64x64 for 1,000 iterations.
TrainPlan make_plan(Preset preset, const PlanOverrides& overrides = {});

// max(1 - shown / fade_images, 0); 0 when fading is disabled.
double alpha_schedule(std::size_t images_shown, std::size_t fade_images);

// "4:2000,8:3000" -> stages.
std::vector<StagePlan> parse_stage_list(const std::string& text);
std::string format_plan(const TrainPlan& plan);

}  // namespace pgf::train
