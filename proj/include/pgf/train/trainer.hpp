#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pgf/nets/networks.hpp"
#include "pgf/tensor/adam.hpp"
#include "pgf/tensor/random.hpp"
#include "pgf/train/plan.hpp"

namespace pgf::train {

// Training images by resolution; each image is [3, R, R] in [-1, 1].
class ImageSource {
 public:
  virtual ~ImageSource() = default;
  virtual bool has_resolution(std::size_t resolution) const = 0;
  virtual std::size_t count(std::size_t resolution) const = 0;
  virtual const Tensor<float>& image(std::size_t resolution, std::size_t index) const = 0;
};

class InMemorySource : public ImageSource {
 public:
  void add(std::size_t resolution, Tensor<float> image);
  bool has_resolution(std::size_t resolution) const override;
  std::size_t count(std::size_t resolution) const override;
  const Tensor<float>& image(std::size_t resolution, std::size_t index) const override;

 private:
  std::map<std::size_t, std::vector<Tensor<float>>> images_;
};

struct MetricsRecord {
  std::size_t iteration = 0;  // completed iterations, counted over all stages
  std::size_t stage = 0;
  double alpha = 0.0;
  double d_loss = 0.0;
  double g_loss = 0.0;
  std::optional<double> gp;  // absent for the DCGAN objective
  double wall_time = 0.0;    // seconds since this process started training

  std::string to_json() const;
  static MetricsRecord from_json(const std::string& line);
};

struct TrainingDiverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainerOptions {
  std::filesystem::path out_dir;  // metrics.jsonl, checkpoints/, sample grids
  bool write_checkpoints = true;
  bool write_samples = true;
  bool write_metrics = true;
  // Stop (without a final checkpoint) once this many total iterations are done.
  std::optional<std::size_t> stop_after_iteration;
  // Called after every iteration, not only on logging intervals.
  std::function<void(const MetricsRecord&)> on_iteration;
  std::function<void(const std::filesystem::path&)> on_checkpoint;
};

struct CheckpointInfo {
  std::filesystem::path path;
  std::size_t stage = 0;
  std::size_t stage_iteration = 0;
  std::size_t iteration = 0;
  double alpha = 0.0;
};

template <typename T>
class Trainer {
 public:
  Trainer(TrainPlan plan, const ImageSource& data, TrainerOptions options);
  // Continues from a checkpoint directory; throws if its plan hash differs from `plan`'s.
  Trainer(TrainPlan plan, const ImageSource& data, TrainerOptions options, const std::filesystem::path& checkpoint);

  // Trains until the plan is exhausted (or stop_after_iteration); returns the
  // last checkpoint written, which on success is the end of the final stage.
  std::optional<CheckpointInfo> run();

  CheckpointInfo save_checkpoint();

  const TrainPlan& plan() const { return plan_; }
  const nets::Generator<T>& generator() const { return *g_; }
  const nets::Discriminator<T>& discriminator() const { return *d_; }
  std::size_t stage() const { return stage_; }
  std::size_t stage_iteration() const { return stage_iter_; }
  std::size_t iteration() const { return iter_; }
  double current_alpha() const;
  bool finished() const;
  const std::vector<CheckpointInfo>& checkpoints() const { return checkpoints_; }

  // Fixed-seed sample images at the current stage and fade, [n, 3, R, R].
  Tensor<T> samples(std::size_t n, std::uint64_t seed) const;
  // Same latents, independent of training progress; used for sample grids.
  Tensor<T> grid_samples() const { return samples(64, Rng::derive(plan_.seed, 0x5A3B1E)); }

 private:
  void check_data() const;
  void begin_stage();
  MetricsRecord step(double alpha);
  ad::Var<T> real_batch(std::size_t resolution, double alpha);
  ad::Var<T> latents();
  void log(const MetricsRecord& rec);
  void write_sample_grid() const;
  void load_checkpoint(const std::filesystem::path& dir);

  TrainPlan plan_;
  const ImageSource& data_;
  TrainerOptions options_;
  std::unique_ptr<nets::Generator<T>> g_;
  std::unique_ptr<nets::Discriminator<T>> d_;
  ad::AdamState<T> g_adam_, d_adam_;
  std::vector<nets::NamedParam<T>> g_params_, d_params_;
  Rng rng_;
  std::size_t stage_ = 0, stage_iter_ = 0, iter_ = 0;
  std::vector<CheckpointInfo> checkpoints_;
  std::chrono::steady_clock::time_point start_;
  std::unique_ptr<std::ofstream> metrics_;
};

// Reads the plan stored with a checkpoint.
TrainPlan checkpoint_plan(const std::filesystem::path& checkpoint);
std::string plan_to_json(const TrainPlan& plan);
TrainPlan plan_from_json(const std::string& text);

extern template class Trainer<float>;
extern template class Trainer<double>;

}  // namespace pgf::train
