#include "pgf/metrics/inception.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "pgf/data/synth.hpp"
#include "pgf/image/image.hpp"
#include "pgf/tensor/adam.hpp"
#include "pgf/tensor/ops.hpp"
#include "pgf/tensor/random.hpp"
#include "pgf/tensor/serialize.hpp"

namespace pgf::metrics {

namespace fs = std::filesystem;
using ad::Var;

void ProbMatrix::validate(double tolerance) const {
  if (rows == 0 || cols == 0) throw MetricError("empty probability matrix");
  if (p.size() != rows * cols) throw MetricError("probability matrix has the wrong number of entries");
  if (!ids.empty() && ids.size() != rows) throw MetricError("probability matrix ids do not match its rows");
  for (std::size_t r = 0; r < rows; ++r) {
    long double s = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = at(r, c);
      if (!std::isfinite(v) || v < 0) {
        throw MetricError("row " + std::to_string(r) + " has an invalid probability " + std::to_string(v));
      }
      s += v;
    }
    if (std::abs(static_cast<double>(s) - 1.0) > tolerance) {
      throw MetricError("row " + std::to_string(r) + " sums to " + std::to_string(double(s)) + ", not 1");
    }
  }
}

namespace {

// Neumaier-compensated long double sum: thousands of equal KL terms would
// otherwise drift by a double ulp.
struct Accumulator {
  long double sum = 0, comp = 0;
  void add(long double v) {
    const long double t = sum + v;
    comp += std::abs(sum) >= std::abs(v) ? (sum - t) + v : (v - t) + sum;
    sum = t;
  }
  long double value() const { return sum + comp; }
};

}  // namespace

// Accumulates in compensated long double: sums of identical entries stay
// exact and the exp/log round trip does not lose the last bit, so a uniform
// matrix scores exactly 1 and a balanced one-hot matrix exactly K.
double inception_score(const ProbMatrix& probs, std::size_t splits) {
  probs.validate();
  if (splits == 0 || splits > probs.rows) throw MetricError("splits must be in 1..rows");
  const std::size_t K = probs.cols;
  Accumulator total;
  for (std::size_t s = 0; s < splits; ++s) {
    const std::size_t r0 = probs.rows * s / splits, r1 = probs.rows * (s + 1) / splits;
    const long double n = static_cast<long double>(r1 - r0);
    std::vector<Accumulator> acc(K);
    for (std::size_t r = r0; r < r1; ++r)
      for (std::size_t k = 0; k < K; ++k) acc[k].add(probs.at(r, k));
    std::vector<long double> py(K);
    for (std::size_t k = 0; k < K; ++k) py[k] = std::max<long double>(acc[k].value() / n, kKlClamp);
    Accumulator kl_sum;
    for (std::size_t r = r0; r < r1; ++r) {
      Accumulator kl;
      for (std::size_t k = 0; k < K; ++k) {
        const long double p = probs.at(r, k);
        if (p == 0) continue;  // 0 * log(clamp / q) = 0
        kl.add(p * std::log(std::max<long double>(p, kKlClamp) / py[k]));
      }
      kl_sum.add(kl.value());
    }
    total.add(std::exp(kl_sum.value() / n));
  }
  return static_cast<double>(total.value() / splits);
}

void write_prob_csv(const fs::path& path, const ProbMatrix& m) {
  m.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw MetricError("cannot write " + path.string());
  out << "img_id";
  for (std::size_t k = 0; k < m.cols; ++k) out << ",p" << k;
  out << '\n';
  char buf[40];
  for (std::size_t r = 0; r < m.rows; ++r) {
    out << (m.ids.empty() ? std::to_string(r) : m.ids[r]);
    for (std::size_t k = 0; k < m.cols; ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", m.at(r, k));
      out << ',' << buf;
    }
    out << '\n';
  }
  if (!out) throw MetricError("failed writing " + path.string());
}

ProbMatrix read_prob_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MetricError("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> head;
  {
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, ',');) head.push_back(f);
  }
  if (head.size() < 2 || head[0] != "img_id") throw MetricError(path.string() + ": header must be img_id,p0..pK-1");
  for (std::size_t k = 1; k < head.size(); ++k) {
    if (head[k] != "p" + std::to_string(k - 1)) throw MetricError(path.string() + ": unexpected column " + head[k]);
  }
  ProbMatrix m;
  m.cols = head.size() - 1;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::vector<std::string> f;
    for (std::string x; std::getline(ss, x, ',');) f.push_back(x);
    if (f.size() != head.size()) throw MetricError(path.string() + ":" + std::to_string(lineno) + ": wrong field count");
    m.ids.push_back(f[0]);
    for (std::size_t k = 1; k < f.size(); ++k) {
      char* end = nullptr;
      const double v = std::strtod(f[k].c_str(), &end);
      if (end == f[k].c_str() || *end) throw MetricError(path.string() + ":" + std::to_string(lineno) + ": bad number");
      m.p.push_back(v);
    }
    ++m.rows;
  }
  m.validate();
  return m;
}

namespace {

constexpr std::size_t kWidths[3] = {8, 16, 16};

Tensor<float> he_normal(Rng& rng, Shape shape, std::size_t fan_in) {
  return rng.normal_tensor<float>(std::move(shape), std::sqrt(2.0 / fan_in));
}

Var<float> stack(const std::vector<Tensor<float>>& images, const std::vector<std::size_t>& idx, std::size_t res) {
  Tensor<float> batch(Shape{idx.size(), 3, res, res});
  const std::size_t per = 3 * res * res;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto& im = images[idx[i]];
    std::copy(im.data().begin(), im.data().end(), batch.data().begin() + i * per);
  }
  return Var<float>(std::move(batch));
}

}  // namespace

ReferenceClassifier::ReferenceClassifier(std::size_t resolution, std::size_t classes, std::uint64_t seed)
    : resolution_(resolution), classes_(classes) {
  if (resolution < 8 || resolution % 8) throw MetricError("classifier resolution must be a multiple of 8");
  if (classes < 2) throw MetricError("classifier needs at least two classes");
  Rng rng(seed);
  std::size_t in = 3;
  for (std::size_t w : kWidths) {
    params_.push_back(Var<float>::parameter(he_normal(rng, {w, in, 3, 3}, in * 9)));
    params_.push_back(Var<float>::parameter(Tensor<float>(Shape{w})));
    in = w;
  }
  const std::size_t side = resolution / 8, flat = in * side * side;
  params_.push_back(Var<float>::parameter(he_normal(rng, {classes, flat}, flat)));
  params_.push_back(Var<float>::parameter(Tensor<float>(Shape{classes})));
}

Var<float> ReferenceClassifier::logits(const Var<float>& x) const {
  Var<float> h = x;
  for (std::size_t l = 0; l < 3; ++l) {
    h = ad::avgpool2x(ad::leaky_relu(ad::conv2d(h, params_[2 * l], params_[2 * l + 1], {1, 1})));
  }
  const std::size_t n = h.shape()[0];
  h = ad::reshape(h, Shape{n, h.size() / n});
  return ad::dense(h, params_[6], params_[7]);
}

double ReferenceClassifier::fit(const std::vector<Tensor<float>>& images, const std::vector<std::size_t>& labels,
                                const ClassifierTraining& cfg) {
  if (images.size() != labels.size() || images.empty()) throw MetricError("need one label per training image");
  for (const auto& im : images) {
    if (im.shape() != Shape{3, resolution_, resolution_}) throw MetricError("training image has the wrong size");
  }
  for (auto l : labels)
    if (l >= classes_) throw MetricError("label out of range");
  ad::AdamState<float> adam({cfg.lr, 0.9, 0.999, 1e-8}, params_);
  Rng rng(Rng::derive(cfg.seed, 0xC1A55));
  double last = 0;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    std::vector<std::size_t> idx(std::min(cfg.batch, images.size()));
    for (auto& i : idx) i = rng.below(images.size());
    Tensor<float> onehot(Shape{idx.size(), classes_});
    for (std::size_t i = 0; i < idx.size(); ++i) onehot[i * classes_ + labels[idx[i]]] = 1.0f;
    auto lp = ad::log_softmax(logits(stack(images, idx, resolution_)));
    auto loss = ad::scale(ad::sum(ad::mul(lp, ad::constant(onehot))), -1.0 / idx.size());
    const auto grads = ad::grad(loss, params_).values();
    ad::adam_step<float>(params_, grads, adam);
    last = loss.value().item();
  }
  return last;
}

ReferenceClassifier ReferenceClassifier::bundled(const ClassifierTraining& cfg) {
  ReferenceClassifier net(cfg.resolution, data::kPaletteCount, cfg.seed);
  std::vector<Tensor<float>> images;
  std::vector<std::size_t> labels;
  for (int k = 0; k < data::kPaletteCount; ++k) {
    data::SynthOptions opt;
    opt.palette = k;
    for (std::size_t i = 0; i < cfg.images_per_class; ++i) {
      const auto seed = Rng::derive(Rng::derive(cfg.seed, 0xB0D1E5), k * cfg.images_per_class + i);
      images.push_back(image::to_tensor<float>(data::synth_river(seed, cfg.resolution, opt).image));
      labels.push_back(static_cast<std::size_t>(k));
    }
  }
  net.fit(images, labels, cfg);
  return net;
}

ProbMatrix ReferenceClassifier::classify(const std::vector<Tensor<float>>& images) const {
  if (images.empty()) throw MetricError("no images to classify");
  ProbMatrix m;
  m.rows = images.size();
  m.cols = classes_;
  m.p.reserve(m.rows * m.cols);
  ad::NoGradGuard no_grad;
  constexpr std::size_t kChunk = 64;
  for (std::size_t start = 0; start < images.size(); start += kChunk) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(images.size(), start + kChunk); ++i) {
      if (images[i].shape() != Shape{3, resolution_, resolution_}) {
        throw MetricError("classifier expects [3, " + std::to_string(resolution_) + ", " +
                          std::to_string(resolution_) + "] images, got " + to_string(images[i].shape()));
      }
      idx.push_back(i);
    }
    const auto lp = ad::log_softmax(logits(stack(images, idx, resolution_))).value();
    for (std::size_t r = 0; r < idx.size(); ++r) {
      // Softmax in double from the log-probabilities, renormalized so rows
      // are stochastic to double precision.
      std::vector<double> row(classes_);
      double s = 0;
      for (std::size_t k = 0; k < classes_; ++k) s += row[k] = std::exp(double(lp[r * classes_ + k]));
      for (double v : row) m.p.push_back(v / s);
    }
  }
  return m;
}

void ReferenceClassifier::save(const fs::path& dir) const {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    io::save_tensor(dir / ("param" + std::to_string(i) + ".tnsr"), params_[i].value());
  }
  nlohmann::json meta = {{"kind", "reference-classifier"},
                         {"resolution", resolution_},
                         {"classes", classes_},
                         {"params", params_.size()}};
  std::ofstream(dir / "classifier.json") << meta.dump(2) << '\n';
}

ReferenceClassifier ReferenceClassifier::load(const fs::path& dir) {
  std::ifstream in(dir / "classifier.json");
  if (!in) throw MetricError("no classifier at " + dir.string());
  nlohmann::json meta;
  try {
    in >> meta;
  } catch (const std::exception& e) {
    throw MetricError(dir.string() + ": bad classifier.json: " + e.what());
  }
  ReferenceClassifier net(meta.at("resolution").get<std::size_t>(), meta.at("classes").get<std::size_t>());
  for (std::size_t i = 0; i < net.params_.size(); ++i) {
    auto t = io::load_tensor<float>(dir / ("param" + std::to_string(i) + ".tnsr"));
    if (t.shape() != net.params_[i].shape()) throw MetricError(dir.string() + ": parameter shape mismatch");
    net.params_[i] = Var<float>::parameter(std::move(t));
  }
  return net;
}

}  // namespace pgf::metrics
