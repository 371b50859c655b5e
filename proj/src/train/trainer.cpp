#include "pgf/train/trainer.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <iomanip>
#include <sstream>

#include "pgf/image/image.hpp"
#include "pgf/tensor/serialize.hpp"
#include "pgf/train/losses.hpp"

namespace pgf::train {

namespace fs = std::filesystem;
using ad::Var;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Image sources

void InMemorySource::add(std::size_t resolution, Tensor<float> image) {
  if (image.shape() != Shape{3, resolution, resolution}) {
    throw ShapeError("image at resolution " + std::to_string(resolution) + " has shape " + pgf::to_string(image.shape()));
  }
  images_[resolution].push_back(std::move(image));
}

bool InMemorySource::has_resolution(std::size_t resolution) const {
  auto it = images_.find(resolution);
  return it != images_.end() && !it->second.empty();
}

std::size_t InMemorySource::count(std::size_t resolution) const {
  auto it = images_.find(resolution);
  return it == images_.end() ? 0 : it->second.size();
}

const Tensor<float>& InMemorySource::image(std::size_t resolution, std::size_t index) const {
  return images_.at(resolution).at(index);
}

// ---------------------------------------------------------------------------
// Metrics

std::string MetricsRecord::to_json() const {
  json j{{"iteration", iteration}, {"stage", stage},   {"alpha", alpha},        {"d_loss", d_loss},
         {"g_loss", g_loss},       {"gp", nullptr},    {"wall_time", wall_time}};
  if (gp) j["gp"] = *gp;
  return j.dump();
}

MetricsRecord MetricsRecord::from_json(const std::string& line) {
  const json j = json::parse(line);
  MetricsRecord r;
  r.iteration = j.at("iteration").get<std::size_t>();
  r.stage = j.at("stage").get<std::size_t>();
  r.alpha = j.at("alpha").get<double>();
  r.d_loss = j.at("d_loss").get<double>();
  r.g_loss = j.at("g_loss").get<double>();
  if (!j.at("gp").is_null()) r.gp = j.at("gp").get<double>();
  r.wall_time = j.at("wall_time").get<double>();
  return r;
}

// ---------------------------------------------------------------------------
// Plan (de)serialization

std::string plan_to_json(const TrainPlan& p) {
  json stages = json::array();
  for (const auto& s : p.stages) stages.push_back({s.resolution, s.iterations});
  json j{{"stages", stages},
         {"fade_images", p.fade_images},
         {"batch_size", p.batch_size},
         {"lr", p.lr},
         {"beta1", p.beta1},
         {"beta2", p.beta2},
         {"epsilon", p.epsilon},
         {"gp_lambda", p.gp_lambda},
         {"drift_epsilon", p.drift_epsilon},
         {"checkpoint_interval", p.checkpoint_interval},
         {"metrics_interval", p.metrics_interval},
         {"critic_steps", p.critic_steps},
         {"seed", p.seed},
         {"loss", to_string(p.loss)},
         {"network", nets::format_network_spec(p.network)}};
  return j.dump(2);
}

TrainPlan plan_from_json(const std::string& text) {
  const json j = json::parse(text);
  TrainPlan p;
  for (const auto& s : j.at("stages")) p.stages.push_back({s.at(0).get<std::size_t>(), s.at(1).get<std::size_t>()});
  p.fade_images = j.at("fade_images").get<std::size_t>();
  p.batch_size = j.at("batch_size").get<std::size_t>();
  p.lr = j.at("lr").get<double>();
  p.beta1 = j.at("beta1").get<double>();
  p.beta2 = j.at("beta2").get<double>();
  p.epsilon = j.at("epsilon").get<double>();
  p.gp_lambda = j.at("gp_lambda").get<double>();
  p.drift_epsilon = j.at("drift_epsilon").get<double>();
  p.checkpoint_interval = j.at("checkpoint_interval").get<std::size_t>();
  p.metrics_interval = j.at("metrics_interval").get<std::size_t>();
  p.critic_steps = j.at("critic_steps").get<std::size_t>();
  p.seed = j.at("seed").get<std::uint64_t>();
  p.loss = j.at("loss").get<std::string>() == "dcgan" ? LossKind::dcgan : LossKind::wgan_gp;
  p.network = nets::parse_network_spec(j.at("network").get<std::string>());
  p.validate();
  return p;
}

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  os << text;
  if (!os) throw std::runtime_error("cannot write " + path.string());
}

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

std::string padded(std::size_t v, int width) {
  std::ostringstream os;
  os << std::setw(width) << std::setfill('0') << v;
  return os.str();
}

json adam_json(const ad::AdamConfig& c, std::int64_t step) {
  return {{"lr", c.lr}, {"beta1", c.beta1}, {"beta2", c.beta2}, {"epsilon", c.epsilon}, {"step", step}};
}

template <typename T>
bool finite(const Var<T>& v) {
  return v.defined() && v.value().all_finite();
}

}  // namespace

TrainPlan checkpoint_plan(const fs::path& checkpoint) { return plan_from_json(read_file(checkpoint / "plan.json")); }

// ---------------------------------------------------------------------------
// Trainer

template <typename T>
Trainer<T>::Trainer(TrainPlan plan, const ImageSource& data, TrainerOptions options)
    : plan_(std::move(plan)), data_(data), options_(std::move(options)), rng_(plan_.seed) {
  plan_.validate();
  check_data();
  g_ = std::make_unique<nets::Generator<T>>(plan_.network, Rng::derive(plan_.seed, 1), 1);
  d_ = std::make_unique<nets::Discriminator<T>>(plan_.network, Rng::derive(plan_.seed, 2), 1);
  begin_stage();
}

template <typename T>
Trainer<T>::Trainer(TrainPlan plan, const ImageSource& data, TrainerOptions options, const fs::path& checkpoint)
    : plan_(std::move(plan)), data_(data), options_(std::move(options)), rng_(plan_.seed) {
  plan_.validate();
  check_data();
  load_checkpoint(checkpoint);
}

template <typename T>
void Trainer<T>::check_data() const {
  for (const auto& s : plan_.stages) {
    if (!data_.has_resolution(s.resolution) || data_.count(s.resolution) == 0) {
      throw DataError("dataset has no images at resolution " + std::to_string(s.resolution));
    }
    const Shape expect{3, s.resolution, s.resolution};
    if (data_.image(s.resolution, 0).shape() != expect) {
      throw DataError("dataset images at resolution " + std::to_string(s.resolution) + " have shape " +
                      pgf::to_string(data_.image(s.resolution, 0).shape()));
    }
  }
}

template <typename T>
void Trainer<T>::begin_stage() {
  while (g_->built_stages() < stage_ + 1) g_->grow();
  while (d_->built_stages() < stage_ + 1) d_->grow();
  const bool with_prev = stage_ > 0;
  g_params_ = g_->stage_parameters(stage_, with_prev);
  d_params_ = d_->stage_parameters(stage_, with_prev);
  const ad::AdamConfig cfg{plan_.lr, plan_.beta1, plan_.beta2, plan_.epsilon};
  const auto gv = nets::vars_of(g_params_);
  const auto dv = nets::vars_of(d_params_);
  g_adam_ = ad::AdamState<T>(cfg, gv);
  d_adam_ = ad::AdamState<T>(cfg, dv);
}

template <typename T>
double Trainer<T>::current_alpha() const {
  if (stage_ == 0 || finished()) return 0.0;
  return alpha_schedule(stage_iter_ * plan_.batch_size, plan_.fade_images);
}

template <typename T>
bool Trainer<T>::finished() const {
  return stage_ + 1 == plan_.stages.size() && stage_iter_ == plan_.stages.back().iterations;
}

template <typename T>
Var<T> Trainer<T>::latents() {
  return Var<T>(rng_.normal_tensor<T>({plan_.batch_size, plan_.network.latent_dim}));
}

template <typename T>
Var<T> Trainer<T>::real_batch(std::size_t resolution, double alpha) {
  const std::size_t b = plan_.batch_size, n = data_.count(resolution);
  const std::size_t per = 3 * resolution * resolution;
  Tensor<T> batch(Shape{b, 3, resolution, resolution});
  auto dst = batch.data();
  for (std::size_t i = 0; i < b; ++i) {
    const auto src = data_.image(resolution, rng_.below(n)).data();
    for (std::size_t j = 0; j < per; ++j) dst[i * per + j] = static_cast<T>(src[j]);
  }
  Var<T> x(std::move(batch));
  if (alpha > 0.0) {
    // Match the generator's blend: the low-resolution view, shown upsampled.
    ad::NoGradGuard ng;
    auto low = ad::upsample_nearest2x(ad::avgpool2x(x));
    x = Var<T>(ad::add(ad::scale(low, alpha), ad::scale(x, 1.0 - alpha)).value());
  }
  return x;
}

template <typename T>
MetricsRecord Trainer<T>::step(double alpha) {
  const nets::FadeState fade{alpha, alpha > 0.0};
  const std::size_t res = plan_.stages[stage_].resolution;
  const auto dv = nets::vars_of(d_params_);
  const auto gv = nets::vars_of(g_params_);
  const auto dn = nets::names_of(d_params_);
  const auto gn = nets::names_of(g_params_);
  MetricsRecord rec;
  rec.stage = stage_;
  rec.alpha = alpha;

  auto diverged = [&](const std::string& what) {
    return TrainingDiverged(what + " at iteration " + std::to_string(iter_ + 1) + " (stage " +
                            std::to_string(stage_) + ")");
  };

  try {
    for (std::size_t k = 0; k < plan_.critic_steps; ++k) {
      auto real = real_batch(res, alpha);
      Var<T> fake;
      {
        ad::NoGradGuard ng;
        fake = Var<T>(g_->forward(latents(), stage_, fade).value());
      }
      Var<T> loss;
      if (plan_.loss == LossKind::wgan_gp) {
        Critic<T> critic = [&](const Var<T>& x) { return d_->forward(x, stage_, fade); };
        auto l = d_loss_wgan_gp(critic, real, fake, plan_.gp_lambda, plan_.drift_epsilon, rng_);
        loss = l.total;
        if (l.penalty.defined()) {
          if (!finite(l.penalty)) throw diverged("non-finite gradient penalty");
          rec.gp = static_cast<double>(l.penalty.item());
        }
      } else {
        loss = dcgan_losses(*d_, stage_, real, fake).d_loss;
      }
      if (!finite(loss)) throw diverged("non-finite discriminator loss");
      rec.d_loss = static_cast<double>(loss.item());
      auto grads = ad::grad(loss, dv).values();
      ad::adam_step<T>(dv, grads, d_adam_, dn);
    }

    d_->set_trainable(false);
    struct Restore {
      const nets::Discriminator<T>& d;
      ~Restore() { d.set_trainable(true); }
    } restore{*d_};
    auto fake = g_->forward(latents(), stage_, fade);
    Var<T> g_loss = plan_.loss == LossKind::wgan_gp ? g_loss_wgan(d_->forward(fake, stage_, fade))
                                                     : g_loss_dcgan(d_->forward(fake, stage_, fade));
    if (!finite(g_loss)) throw diverged("non-finite generator loss");
    rec.g_loss = static_cast<double>(g_loss.item());
    auto grads = ad::grad(g_loss, gv).values();
    ad::adam_step<T>(gv, grads, g_adam_, gn);
  } catch (const std::domain_error& e) {
    throw diverged(e.what());
  }
  return rec;
}

template <typename T>
void Trainer<T>::log(const MetricsRecord& rec) {
  if (options_.on_iteration) options_.on_iteration(rec);
  if (!options_.write_metrics || rec.iteration % plan_.metrics_interval != 0) return;
  if (!metrics_) {
    fs::create_directories(options_.out_dir);
    metrics_ = std::make_unique<std::ofstream>(options_.out_dir / "metrics.jsonl", std::ios::app);
  }
  *metrics_ << rec.to_json() << '\n';
  metrics_->flush();
}

template <typename T>
std::optional<CheckpointInfo> Trainer<T>::run() {
  start_ = std::chrono::steady_clock::now();
  std::optional<CheckpointInfo> last;
  if (!checkpoints_.empty()) last = checkpoints_.back();
  while (!finished()) {
    if (options_.stop_after_iteration && iter_ >= *options_.stop_after_iteration) return last;
    if (stage_iter_ == plan_.stages[stage_].iterations) {
      ++stage_;
      stage_iter_ = 0;
      begin_stage();
    }
    MetricsRecord rec = step(current_alpha());
    ++stage_iter_;
    ++iter_;
    rec.iteration = iter_;
    rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    log(rec);
    const bool stage_end = stage_iter_ == plan_.stages[stage_].iterations;
    if (options_.write_checkpoints && (stage_iter_ % plan_.checkpoint_interval == 0 || stage_end)) {
      last = save_checkpoint();
    }
  }
  return last;
}

template <typename T>
Tensor<T> Trainer<T>::samples(std::size_t n, std::uint64_t seed) const {
  Rng rng(seed);
  const std::size_t res = plan_.stages[stage_].resolution;
  const double alpha = current_alpha();
  Tensor<T> out(Shape{n, 3, res, res});
  const std::size_t per = 3 * res * res;
  ad::NoGradGuard ng;
  for (std::size_t start = 0; start < n; start += 16) {
    const std::size_t b = std::min<std::size_t>(16, n - start);
    Var<T> z(rng.normal_tensor<T>({b, plan_.network.latent_dim}));
    auto y = g_->forward(z, stage_, {alpha, alpha > 0.0}).value();
    std::copy_n(y.data().data(), b * per, out.data().data() + start * per);
  }
  return out;
}

template <typename T>
void Trainer<T>::write_sample_grid() const {
  const auto img = image::tile_grid(grid_samples(), 8);
  image::write_png(options_.out_dir / ("samples_" + std::to_string(stage_) + "_" + std::to_string(iter_) + ".png"),
                   img, 8);
}

template <typename T>
CheckpointInfo Trainer<T>::save_checkpoint() {
  const fs::path root = options_.out_dir / "checkpoints";
  const std::string name = "ckpt_" + padded(iter_, 8);
  const fs::path tmp = root / (name + ".partial");
  const fs::path dir = root / name;
  fs::remove_all(tmp);
  fs::create_directories(tmp);

  json manifest;
  manifest["format"] = 1;
  manifest["dtype"] = sizeof(T) == 4 ? "f32" : "f64";
  manifest["stage"] = stage_;
  manifest["stage_iteration"] = stage_iter_;
  manifest["iteration"] = iter_;
  manifest["alpha"] = current_alpha();
  manifest["plan_hash"] = hex(plan_.hash());
  manifest["rng_state"] = rng_.state();
  manifest["adam"] = {{"g", adam_json(g_adam_.config, g_adam_.step)}, {"d", adam_json(d_adam_.config, d_adam_.step)}};
  json gnames = json::array(), dnames = json::array();
  for (const auto& p : g_->parameters()) {
    io::save_tensor(tmp / (p.name + ".tnsr"), p.var.value());
    gnames.push_back(p.name);
  }
  for (const auto& p : d_->parameters()) {
    io::save_tensor(tmp / (p.name + ".tnsr"), p.var.value());
    dnames.push_back(p.name);
  }
  manifest["generator"] = gnames;
  manifest["discriminator"] = dnames;
  json gadam = json::array(), dadam = json::array();
  for (std::size_t i = 0; i < g_params_.size(); ++i) {
    io::save_tensor(tmp / ("adam." + g_params_[i].name + ".m.tnsr"), g_adam_.m[i]);
    io::save_tensor(tmp / ("adam." + g_params_[i].name + ".v.tnsr"), g_adam_.v[i]);
    gadam.push_back(g_params_[i].name);
  }
  for (std::size_t i = 0; i < d_params_.size(); ++i) {
    io::save_tensor(tmp / ("adam." + d_params_[i].name + ".m.tnsr"), d_adam_.m[i]);
    io::save_tensor(tmp / ("adam." + d_params_[i].name + ".v.tnsr"), d_adam_.v[i]);
    dadam.push_back(d_params_[i].name);
  }
  manifest["adam"]["g"]["params"] = gadam;
  manifest["adam"]["d"]["params"] = dadam;
  write_file(tmp / "manifest.json", manifest.dump(2));
  write_file(tmp / "plan.json", plan_to_json(plan_));
  fs::remove_all(dir);
  fs::rename(tmp, dir);

  CheckpointInfo info{dir, stage_, stage_iter_, iter_, current_alpha()};
  checkpoints_.push_back(info);
  if (options_.write_samples) write_sample_grid();
  if (options_.on_checkpoint) options_.on_checkpoint(dir);
  return info;
}

template <typename T>
void Trainer<T>::load_checkpoint(const fs::path& dir) {
  const json m = json::parse(read_file(dir / "manifest.json"));
  if (m.at("plan_hash").get<std::string>() != hex(plan_.hash())) {
    throw std::invalid_argument("checkpoint " + dir.string() + " was written by a different plan");
  }
  stage_ = m.at("stage").get<std::size_t>();
  stage_iter_ = m.at("stage_iteration").get<std::size_t>();
  iter_ = m.at("iteration").get<std::size_t>();
  if (stage_ >= plan_.stages.size() || stage_iter_ > plan_.stages[stage_].iterations) {
    throw std::invalid_argument("checkpoint position lies outside the plan");
  }
  g_ = std::make_unique<nets::Generator<T>>(plan_.network, Rng::derive(plan_.seed, 1), stage_ + 1);
  d_ = std::make_unique<nets::Discriminator<T>>(plan_.network, Rng::derive(plan_.seed, 2), stage_ + 1);
  auto restore = [&](const std::vector<nets::NamedParam<T>>& params) {
    for (const auto& p : params) {
      auto value = io::load_tensor<T>(dir / (p.name + ".tnsr"));
      if (value.shape() != p.var.shape()) throw std::invalid_argument("checkpoint tensor " + p.name + " has the wrong shape");
      Var<T> leaf = p.var;
      leaf.mutable_value() = std::move(value);
    }
  };
  restore(g_->parameters());
  restore(d_->parameters());
  begin_stage();
  auto load_adam = [&](ad::AdamState<T>& state, const std::vector<nets::NamedParam<T>>& params, const json& j) {
    const auto names = j.at("params").get<std::vector<std::string>>();
    if (names.size() != params.size()) throw std::invalid_argument("checkpoint optimizer state does not match");
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (names[i] != params[i].name) throw std::invalid_argument("checkpoint optimizer state does not match");
      state.m[i] = io::load_tensor<T>(dir / ("adam." + names[i] + ".m.tnsr"));
      state.v[i] = io::load_tensor<T>(dir / ("adam." + names[i] + ".v.tnsr"));
    }
    state.step = j.at("step").get<std::int64_t>();
  };
  load_adam(g_adam_, g_params_, m.at("adam").at("g"));
  load_adam(d_adam_, d_params_, m.at("adam").at("d"));
  rng_.restore(m.at("rng_state").get<std::string>());
  checkpoints_.push_back({dir, stage_, stage_iter_, iter_, current_alpha()});

  // Drop log lines from beyond the checkpoint so the log stays monotone.
  const fs::path log_path = options_.out_dir / "metrics.jsonl";
  if (options_.write_metrics && fs::exists(log_path)) {
    std::ifstream is(log_path);
    std::string line, kept;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      if (MetricsRecord::from_json(line).iteration <= iter_) kept += line + "\n";
    }
    is.close();
    write_file(log_path, kept);
  }
}

template class Trainer<float>;
template class Trainer<double>;

}  // namespace pgf::train
