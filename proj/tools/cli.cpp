#include "cli.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <thread>

#include "pgf/data/augment.hpp"
#include "pgf/data/records.hpp"
#include "pgf/data/store.hpp"
#include "pgf/data/synth.hpp"
#include "pgf/data/transforms.hpp"
#include "pgf/image/image.hpp"
#include "pgf/metrics/inception.hpp"
#include "pgf/metrics/swd.hpp"
#include "pgf/survey/http.hpp"
#include "pgf/survey/survey.hpp"
#include "pgf/train/trainer.hpp"

namespace pgf::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// Bad flag combinations found after parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::atomic<bool> g_interrupted{false};
extern "C" void on_signal(int) { g_interrupted = true; }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::size_t default_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

bool is_store(const fs::path& dir) {
  if (!fs::is_directory(dir)) return false;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (e.is_directory() && !name.empty() && std::all_of(name.begin(), name.end(), ::isdigit)) return true;
  }
  return false;
}

// A directory is scanned; a .csv is read as a manifest.
std::vector<data::ImageRecord> load_inputs(const fs::path& input) {
  if (fs::is_regular_file(input) && input.extension() == ".csv") return data::read_manifest(input);
  if (!fs::is_directory(input)) throw data::DataError("input not found: " + input.string());
  auto scan = data::scan_directory(input);
  for (const auto& r : scan.rejected) std::cerr << "warning: skipped " << r << "\n";
  if (scan.records.empty()) throw data::DataError("no usable images in " + input.string());
  return scan.records;
}

// Square crop of the largest centred square, then brought to `side`.
image::Image fit_square(const image::Image& img, std::size_t side) {
  auto sq = data::center_crop(img, std::min(img.width, img.height));
  while (sq.width >= 2 * side && sq.width % 2 == 0) sq = data::box_downsample(sq);
  if (sq.width != side) sq = data::resize_bilinear(sq, side, side);
  return sq;
}

std::vector<image::Image> read_dir_images(const fs::path& dir, std::size_t side, std::size_t limit) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (e.is_regular_file() && (ext == ".png" || ext == ".jpg" || ext == ".jpeg")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (limit && files.size() > limit) files.resize(limit);
  if (files.empty()) throw data::DataError("no images in " + dir.string());
  std::vector<image::Image> out;
  for (const auto& f : files) out.push_back(fit_square(image::read_image(f), side));
  return out;
}

std::vector<std::size_t> stage_resolutions(const train::TrainPlan& plan) {
  std::vector<std::size_t> r;
  for (const auto& s : plan.stages) r.push_back(s.resolution);
  return r;
}

struct TrainArgs {
  std::string preset = "desk";
  fs::path out, data, from_checkpoint;
  std::size_t synth_count = 500;
  std::string stages, precision = "float";
  std::optional<std::size_t> batch, fade_images, checkpoint_interval, metrics_interval, channels, stop_after;
  std::optional<double> lr;
  std::uint64_t seed = 1;
  bool quiet = false;
};

train::TrainPlan build_plan(const TrainArgs& a) {
  train::Preset preset;
  try {
    preset = train::parse_preset(a.preset);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  train::PlanOverrides o;
  o.seed = a.seed;
  o.batch_size = a.batch;
  o.fade_images = a.fade_images;
  o.checkpoint_interval = a.checkpoint_interval;
  o.metrics_interval = a.metrics_interval;
  o.lr = a.lr;
  auto network = train::make_plan(preset).network;
  if (!a.stages.empty()) {
    try {
      o.stages = train::parse_stage_list(a.stages);
    } catch (const std::exception& e) {
      throw UsageError(std::string("--stages: ") + e.what());
    }
    if (network.mode == nets::NetMode::progressive) network.max_resolution = o.stages->back().resolution;
  }
  if (a.channels) network.channel_base = network.channel_max = *a.channels;
  o.network = network;
  try {
    return train::make_plan(preset, o);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

train::InMemorySource training_source(const train::TrainPlan& plan, const TrainArgs& a, std::size_t threads) {
  const auto res = stage_resolutions(plan);
  const std::size_t top = *std::max_element(res.begin(), res.end());
  const std::size_t bottom = *std::min_element(res.begin(), res.end());
  if (!a.data.empty()) {
    if (is_store(a.data)) return data::load_source(data::ResolutionStore::open(a.data), res);
    if (!fs::is_directory(a.data)) throw data::DataError("training data not found: " + a.data.string());
    return data::pyramid_source(read_dir_images(a.data, top, 0), bottom);
  }
  // No data given: a procedural corpus rendered in memory.
  std::vector<image::Image> imgs(a.synth_count);
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < imgs.size(); i += threads) {
        imgs[i] = data::synth_river(Rng::derive(a.seed, 0x5EED0000 + i), top).image;
      }
    });
  }
  for (auto& th : pool) th.join();
  return data::pyramid_source(imgs, bottom);
}

template <typename T>
int train_with(const train::TrainPlan& plan, const train::ImageSource& src, const TrainArgs& a) {
  train::TrainerOptions opt;
  opt.out_dir = a.out;
  opt.stop_after_iteration = a.stop_after;
  if (!a.quiet) {
    opt.on_iteration = [&](const train::MetricsRecord& m) {
      if (m.iteration % plan.metrics_interval == 0) {
        std::cerr << "iter " << m.iteration << " stage " << m.stage << " alpha " << m.alpha << " d " << m.d_loss
                  << " g " << m.g_loss << "\n";
      }
    };
    opt.on_checkpoint = [](const fs::path& p) { std::cerr << "checkpoint " << p.string() << "\n"; };
  }
  std::unique_ptr<train::Trainer<T>> tr;
  if (a.from_checkpoint.empty()) {
    tr = std::make_unique<train::Trainer<T>>(plan, src, opt);
  } else {
    tr = std::make_unique<train::Trainer<T>>(plan, src, opt, a.from_checkpoint);
  }
  const auto last = tr->run();
  std::cout << "iterations " << tr->iteration() << " of " << plan.total_iterations() << "\n";
  if (last) std::cout << "last checkpoint " << last->path.string() << "\n";
  return kExitOk;
}

// A placeholder source so a generator can be restored without the data.
train::InMemorySource blank_source(const train::TrainPlan& plan) {
  train::InMemorySource src;
  for (auto r : stage_resolutions(plan)) src.add(r, Tensor<float>(Shape{3, r, r}));
  return src;
}

template <typename T>
void write_samples(const fs::path& checkpoint, std::size_t count, std::uint64_t seed, std::size_t cols,
                   const fs::path& out, const fs::path& grid) {
  const auto plan = train::checkpoint_plan(checkpoint);
  const auto src = blank_source(plan);
  train::TrainerOptions opt;
  opt.write_checkpoints = opt.write_samples = opt.write_metrics = false;
  train::Trainer<T> tr(plan, src, opt, checkpoint);
  const auto batch = tr.samples(count, seed);
  fs::create_directories(out);
  const std::size_t per = batch.size() / count;
  const std::size_t r = batch.shape()[2];
  for (std::size_t i = 0; i < count; ++i) {
    Tensor<T> one(Shape{3, r, r});
    std::copy_n(batch.data().begin() + i * per, per, one.data().begin());
    char name[32];
    std::snprintf(name, sizeof name, "sample_%05zu.png", i);
    image::write_png(out / name, image::from_tensor(one));
  }
  std::cout << "wrote " << count << " samples at " << r << "x" << r << " to " << out.string() << "\n";
  if (!grid.empty()) {
    if (grid.has_parent_path()) fs::create_directories(grid.parent_path());
    image::write_png(grid, image::tile_grid(batch, cols));
    std::cout << "wrote " << grid.string() << "\n";
  }
}

std::vector<Tensor<float>> classifier_inputs(const fs::path& dir, std::size_t side, std::size_t limit) {
  std::vector<Tensor<float>> out;
  for (const auto& img : read_dir_images(dir, side, limit)) out.push_back(image::to_tensor<float>(img));
  return out;
}

void print_matrix(const survey::Aggregate& agg, bool as_json) {
  const auto& m = agg.matrix;
  if (as_json) {
    std::cout << json{{"tp", m.tp}, {"fn", m.fn}, {"fp", m.fp}, {"tn", m.tn}, {"total", m.total()},
                      {"accuracy", m.accuracy()}, {"skipped", agg.skipped}}
                     .dump()
              << "\n";
    return;
  }
  std::cout << std::left << std::setw(12) << "truth\\guess" << std::right << std::setw(8) << "real" << std::setw(8)
            << "fake" << "\n"
            << std::left << std::setw(12) << "real" << std::right << std::setw(8) << m.tp << std::setw(8) << m.fn
            << "\n"
            << std::left << std::setw(12) << "fake" << std::right << std::setw(8) << m.fp << std::setw(8) << m.tn
            << "\n"
            << "total " << m.total() << "  accuracy " << fmt("%.4f", m.accuracy()) << "\n";
  if (agg.skipped) std::cout << "skipped " << agg.skipped << " corrupt records\n";
}

}  // namespace

fs::path home_dir() {
  const char* env = std::getenv("PROGAN_FORGE_HOME");
  return env && *env ? fs::path(env) : fs::path("forge");
}

int run(const std::vector<std::string>& argv_in) {
  const fs::path home = home_dir();
  CLI::App app{"progan-forge: progressive GAN toolkit for synthetic river imagery"};
  app.name(argv_in.empty() ? "progan-forge" : fs::path(argv_in[0]).filename().string());
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.footer("Default output root: $PROGAN_FORGE_HOME (currently " + home.string() + ")");

  std::size_t threads = default_threads();
  auto add_threads = [&](CLI::App* sub) {
    sub->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  };

  // prepare
  auto* prepare = app.add_subcommand("prepare", "Scan a corpus, center-crop and build the resolution store");
  fs::path prep_in, prep_out = home / "store";
  std::size_t prep_max = 1024, prep_min = 4;
  std::string prep_mode = "downsample";
  prepare->add_option("--input", prep_in, "Image directory or manifest CSV")->required();
  prepare->add_option("--out", prep_out, "Store root");
  prepare->add_option("--max-resolution", prep_max, "Largest store resolution (power of two)");
  prepare->add_option("--min-resolution", prep_min, "Smallest store resolution");
  prepare->add_option("--mode", prep_mode, "Lower resolutions: downsample or crop")
      ->check(CLI::IsMember({"downsample", "crop"}));
  add_threads(prepare);

  // augment
  auto* aug = app.add_subcommand("augment", "Expand a corpus tenfold with the augmentation suite");
  fs::path aug_in, aug_out = home / "augmented";
  std::uint64_t aug_seed = 1;
  data::AugmentRanges ranges;
  aug->add_option("--input", aug_in, "Image directory or manifest CSV")->required();
  aug->add_option("--out", aug_out, "Output directory");
  aug->add_option("--seed", aug_seed, "Augmentation seed");
  aug->add_option("--crop-min", ranges.crop_min, "Smallest kept side fraction for random crops");
  aug->add_option("--crop-max", ranges.crop_max, "Largest kept side fraction for random crops");
  aug->add_option("--hue", ranges.hue, "Hue shift range, fraction of the circle");
  aug->add_option("--saturation", ranges.saturation, "Saturation shift range");
  aug->add_option("--noise-min", ranges.noise_min, "Smallest Gaussian noise sigma");
  aug->add_option("--noise-max", ranges.noise_max, "Largest Gaussian noise sigma");
  aug->add_option("--shear", ranges.shear, "Affine shear range");
  aug->add_option("--translate", ranges.translate, "Affine translation range, fraction of the side");
  aug->add_option("--rotation", ranges.rotation_degrees, "Random rotation range in degrees");
  add_threads(aug);

  // synth
  auto* synth = app.add_subcommand("synth", "Render a procedural river corpus");
  fs::path synth_out = home / "synth";
  std::size_t synth_count = 200, synth_res = 256;
  std::uint64_t synth_seed = 1;
  synth->add_option("--out", synth_out, "Output directory");
  synth->add_option("--count", synth_count, "Number of images")->check(CLI::PositiveNumber);
  synth->add_option("--resolution", synth_res, "Side length (power of two)");
  synth->add_option("--seed", synth_seed, "Corpus seed");
  add_threads(synth);

  // train
  auto* train = app.add_subcommand("train", "Train a generator/discriminator pair");
  TrainArgs ta;
  ta.out = home / "run";
  train->add_option("--preset", ta.preset, "paper, desk or dcgan")->check(CLI::IsMember({"paper", "desk", "dcgan"}));
  train->add_option("--out", ta.out, "Run directory (metrics, checkpoints, sample grids)");
  train->add_option("--data", ta.data, "Resolution store or image directory; synthetic rivers when empty");
  train->add_option("--synth-count", ta.synth_count, "Synthetic images when --data is empty");
  train->add_option("--from-checkpoint", ta.from_checkpoint, "Resume from this checkpoint directory");
  train->add_option("--seed", ta.seed, "Run seed");
  train->add_option("--stages", ta.stages, "Override stages, e.g. 4:2000,8:3000");
  train->add_option("--batch", ta.batch, "Minibatch size (preset default)");
  train->add_option("--fade-images", ta.fade_images, "Images per fade-in (preset default)");
  train->add_option("--checkpoint-interval", ta.checkpoint_interval, "Iterations per checkpoint (preset default)");
  train->add_option("--metrics-interval", ta.metrics_interval, "Iterations per progress line (preset default)");
  train->add_option("--channels", ta.channels, "Channels per layer (preset default)");
  train->add_option("--lr", ta.lr, "Adam learning rate (preset default)");
  train->add_option("--stop-after", ta.stop_after, "Stop after this global iteration");
  train->add_option("--precision", ta.precision, "float or double")->check(CLI::IsMember({"float", "double"}));
  train->add_flag("--quiet", ta.quiet, "No progress lines");
  add_threads(train);

  // sample
  auto* sample = app.add_subcommand("sample", "Write generator samples from a checkpoint");
  fs::path smp_ckpt, smp_out = home / "samples", smp_grid = home / "sample_grid.png";
  std::size_t smp_count = 64, smp_cols = 8;
  std::uint64_t smp_seed = 1;
  std::string smp_precision = "float";
  sample->add_option("--checkpoint", smp_ckpt, "Checkpoint directory")->required();
  sample->add_option("--out", smp_out, "Output directory");
  sample->add_option("--count", smp_count, "Number of samples")->check(CLI::PositiveNumber);
  sample->add_option("--seed", smp_seed, "Latent seed");
  sample->add_option("--grid", smp_grid, "Grid image path (empty: no grid)");
  sample->add_option("--grid-cols", smp_cols, "Grid columns")->check(CLI::PositiveNumber);
  sample->add_option("--precision", smp_precision, "float or double")->check(CLI::IsMember({"float", "double"}));

  // swd
  auto* swd = app.add_subcommand("swd", "Sliced Wasserstein distance per pyramid level, as CSV");
  fs::path swd_real, swd_fake, swd_out;
  std::vector<std::size_t> swd_res;
  std::size_t swd_real_limit = 0, swd_fake_limit = 0;
  metrics::SwdConfig swd_cfg;
  swd->add_option("--real", swd_real, "Real images: directory or resolution store")->required();
  swd->add_option("--fake", swd_fake, "Generated images: directory")->required();
  swd->add_option("--resolutions", swd_res, "Levels to score (default: every level down to 4)");
  swd->add_option("--real-limit", swd_real_limit, "Use at most this many real images (0: all)");
  swd->add_option("--fake-limit", swd_fake_limit, "Use at most this many fake images (0: all)");
  swd->add_option("--descriptors", swd_cfg.descriptors.patches_per_image, "Patches per image per level");
  swd->add_option("--patch", swd_cfg.descriptors.patch_side, "Patch side");
  swd->add_option("--projections", swd_cfg.n_projections, "Random directions");
  swd->add_option("--seed", swd_cfg.seed, "Sampling seed");
  swd->add_option("--out", swd_out, "CSV path (default: stdout)");

  // iscore
  auto* isc = app.add_subcommand("iscore", "Inception score from a probability CSV or a classifier");
  fs::path is_probs, is_images, is_classifier, is_save, is_write_probs;
  std::size_t is_splits = 1, is_limit = 0;
  metrics::ClassifierTraining is_train;
  isc->add_option("--probs", is_probs, "Probability matrix CSV (img_id,p0,p1,...)");
  isc->add_option("--images", is_images, "Image directory to classify");
  isc->add_option("--classifier", is_classifier, "Saved classifier directory (default: train the bundled one)");
  isc->add_option("--save-classifier", is_save, "Save the bundled classifier here");
  isc->add_option("--write-probs", is_write_probs, "Also write the probability matrix to this CSV");
  isc->add_option("--splits", is_splits, "Score splits")->check(CLI::PositiveNumber);
  isc->add_option("--limit", is_limit, "Use at most this many images (0: all)");
  isc->add_option("--classifier-resolution", is_train.resolution, "Bundled classifier input side");
  isc->add_option("--classifier-steps", is_train.steps, "Bundled classifier training steps");
  isc->add_option("--classifier-seed", is_train.seed, "Bundled classifier seed");

  // survey
  auto* sv = app.add_subcommand("survey", "Real-vs-fake human survey");
  sv->require_subcommand(1);
  auto* serve = sv->add_subcommand("serve", "Run the survey HTTP service");
  fs::path sv_real, sv_fake, sv_log = home / "survey" / "answers.jsonl", sv_static;
  std::string sv_host = "127.0.0.1";
  int sv_port = 8080;
  std::uint64_t sv_seed = 1;
  std::size_t sv_per_label = 500;
  serve->add_option("--real", sv_real, "Directory of real images")->required();
  serve->add_option("--fake", sv_fake, "Directory of generated images")->required();
  serve->add_option("--log", sv_log, "Append-only answer log");
  serve->add_option("--host", sv_host, "Bind address");
  serve->add_option("--port", sv_port, "Port (0: any free port)")->check(CLI::Range(0, 65535));
  serve->add_option("--seed", sv_seed, "Pool and session sampling seed");
  serve->add_option("--per-label", sv_per_label, "Images per label in the pool (0: all)");
  serve->add_option("--static", sv_static, "Directory served at / (the survey front-end)");
  auto* report = sv->add_subcommand("report", "Confusion matrix from the answer log");
  fs::path rp_log = home / "survey" / "answers.jsonl", rp_images;
  bool rp_json = false;
  report->add_option("--log", rp_log, "Answer log");
  report->add_flag("--json", rp_json, "Print JSON");
  report->add_option("--per-image", rp_images, "Write per-image accuracy CSV here");

  std::vector<std::string> args(argv_in.size() > 1 ? argv_in.begin() + 1 : argv_in.end(), argv_in.end());
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*prepare) {
      auto records = load_inputs(prep_in);
      data::StoreOptions so;
      so.max_resolution = prep_max;
      so.min_resolution = prep_min;
      so.mode = data::parse_pyramid_mode(prep_mode);
      so.threads = threads;
      const auto store = data::build_resolution_store(records, prep_out, so);
      std::cout << "store " << prep_out.string() << ": " << store.resolutions().size() << " resolutions x "
                << store.counts.begin()->second << " images\n";
    } else if (*aug) {
      auto spec = data::AugmentSpec::defaults(aug_seed);
      spec.ranges = ranges;
      try {
        spec.validate();
      } catch (const std::exception& e) {
        throw UsageError(e.what());
      }
      const auto res = data::augment_corpus(load_inputs(aug_in), aug_out, spec, threads);
      std::cout << "wrote " << res.records.size() << " images and " << res.manifest.string() << "\n";
    } else if (*synth) {
      if (!nets::is_power_of_two(synth_res) || synth_res < 4) {
        throw UsageError("--resolution must be a power of two >= 4");
      }
      const auto recs = data::synth_corpus(synth_out, synth_count, synth_res, synth_seed, threads);
      std::cout << "wrote " << recs.size() << " images to " << synth_out.string() << "\n";
    } else if (*train) {
      train::TrainPlan plan;
      if (!ta.from_checkpoint.empty()) {
        plan = train::checkpoint_plan(ta.from_checkpoint);
      } else {
        plan = build_plan(ta);
      }
      if (plan.network.experimental()) std::cerr << "warning: DCGAN above 64x64 is known to diverge\n";
      std::cerr << train::format_plan(plan) << "\n";
      const auto src = training_source(plan, ta, threads);
      return ta.precision == "double" ? train_with<double>(plan, src, ta) : train_with<float>(plan, src, ta);
    } else if (*sample) {
      if (smp_precision == "double") {
        write_samples<double>(smp_ckpt, smp_count, smp_seed, smp_cols, smp_out, smp_grid);
      } else {
        write_samples<float>(smp_ckpt, smp_count, smp_seed, smp_cols, smp_out, smp_grid);
      }
    } else if (*swd) {
      const auto fake = metrics::load_planes(swd_fake, 0, swd_fake_limit);
      const std::size_t side = fake.front().shape()[2];
      const auto real = metrics::load_planes(swd_real, is_store(swd_real) ? side : 0, swd_real_limit);
      if (real.front().shape()[2] != side) {
        throw data::DataError("real images are " + std::to_string(real.front().shape()[2]) + "px, fake are " +
                              std::to_string(side) + "px");
      }
      if (swd_res.empty()) {
        for (std::size_t r = side; r >= 4; r /= 2) swd_res.push_back(r);
        std::reverse(swd_res.begin(), swd_res.end());
      }
      const auto rep = metrics::swd_report(real, fake, swd_res, swd_cfg);
      if (swd_out.empty()) {
        std::cout << rep.to_csv();
      } else {
        if (swd_out.has_parent_path()) fs::create_directories(swd_out.parent_path());
        std::ofstream(swd_out) << rep.to_csv();
        std::cout << "wrote " << swd_out.string() << "\n";
      }
    } else if (*isc) {
      if (is_probs.empty() == is_images.empty()) throw UsageError("give exactly one of --probs or --images");
      metrics::ProbMatrix probs;
      if (!is_probs.empty()) {
        probs = metrics::read_prob_csv(is_probs);
      } else {
        auto clf = is_classifier.empty() ? metrics::ReferenceClassifier::bundled(is_train)
                                         : metrics::ReferenceClassifier::load(is_classifier);
        if (!is_save.empty()) clf.save(is_save);
        probs = clf.classify(classifier_inputs(is_images, clf.resolution(), is_limit));
      }
      if (!is_write_probs.empty()) metrics::write_prob_csv(is_write_probs, probs);
      std::cout << "inception_score " << fmt("%.6f", metrics::inception_score(probs, is_splits)) << " (images "
                << probs.rows << ", classes " << probs.cols << ", splits " << is_splits << ")\n";
    } else if (*serve) {
      survey::SurveyService svc(survey::ImagePool::from_directories(sv_real, sv_fake, sv_seed, sv_per_label), sv_log,
                                sv_seed);
      survey::SurveyServer server(
          svc, sv_static.empty() ? std::nullopt : std::optional<fs::path>(sv_static));
      const int port = server.bind(sv_host, sv_port);
      if (port < 0) throw data::DataError("cannot bind " + sv_host + ":" + std::to_string(sv_port));
      std::cout << "survey listening on http://" << sv_host << ":" << port << " (pool " << svc.pool().count(survey::Label::real)
                << " real, " << svc.pool().count(survey::Label::fake) << " fake)\n"
                << std::flush;
      g_interrupted = false;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::thread th([&] { server.serve(); });
      while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      server.stop();
      th.join();
    } else if (*report) {
      const auto agg = survey::aggregate(rp_log);
      print_matrix(agg, rp_json);
      if (!rp_images.empty()) {
        std::ofstream out(rp_images);
        out << "image_id,shown,correct,accuracy\n";
        for (const auto& [id, st] : agg.images) {
          out << id << "," << st.shown << "," << st.correct << ","
              << (st.shown ? double(st.correct) / st.shown : 0.0) << "\n";
        }
      }
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n" << "Run with --help for usage.\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}

}  // namespace pgf::cli
