#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "pgf/metrics/laplacian.hpp"
#include "pgf/tensor/autograd.hpp"

namespace pgf::metrics {

inline constexpr double kKlClamp = 1e-12;
inline constexpr double kStochasticTolerance = 1e-9;

// rows x cols, row-major; each row a class distribution.
struct ProbMatrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> p;
  std::vector<std::string> ids;  // optional image ids, one per row

  double at(std::size_t r, std::size_t c) const { return p[r * cols + c]; }
  // Throws MetricError unless entries are >= 0 and rows sum to 1 within tolerance.
  void validate(double tolerance = kStochasticTolerance) const;
};

// exp(mean_x KL(p(y|x) || p(y))), averaged over `splits` contiguous chunks.
double inception_score(const ProbMatrix& probs, std::size_t splits = 1);

// Header img_id,p0..p{K-1}; values written with 17 significant digits.
void write_prob_csv(const std::filesystem::path& path, const ProbMatrix& m);
ProbMatrix read_prob_csv(const std::filesystem::path& path);

class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual std::size_t resolution() const = 0;
  virtual std::size_t classes() const = 0;
  // Images are [3, R, R] in [-1, 1]; throws MetricError on a size mismatch.
  virtual ProbMatrix classify(const std::vector<Tensor<float>>& images) const = 0;
};

struct ClassifierTraining {
  std::size_t resolution = 32;
  std::size_t images_per_class = 200;
  std::size_t steps = 400;
  std::size_t batch = 32;
  double lr = 0.002;
  std::uint64_t seed = 1;
};

// Small conv net: three (conv3x3, leaky, avgpool) blocks and a dense softmax head.
class ReferenceClassifier : public Classifier {
 public:
  explicit ReferenceClassifier(std::size_t resolution, std::size_t classes, std::uint64_t seed = 1);

  // Supervised fit on labelled images; returns the final mean cross-entropy.
  double fit(const std::vector<Tensor<float>>& images, const std::vector<std::size_t>& labels,
             const ClassifierTraining& cfg);

  // The bundled reference: trained on synthetic rivers, one class per palette.
  static ReferenceClassifier bundled(const ClassifierTraining& cfg = {});

  std::size_t resolution() const override { return resolution_; }
  std::size_t classes() const override { return classes_; }
  ProbMatrix classify(const std::vector<Tensor<float>>& images) const override;

  void save(const std::filesystem::path& dir) const;
  static ReferenceClassifier load(const std::filesystem::path& dir);

 private:
  ad::Var<float> logits(const ad::Var<float>& x) const;

  std::size_t resolution_, classes_;
  std::vector<ad::Var<float>> params_;  // w0 b0 w1 b1 w2 b2 wd bd
};

}  // namespace pgf::metrics
