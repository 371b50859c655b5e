#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pgf/nets/spec.hpp"
#include "pgf/tensor/ops.hpp"

namespace pgf::nets {

// alpha is the weight of the previous-resolution pathway.
struct FadeState {
  double alpha = 0.0;
  bool fading = false;

  void validate() const;
};

template <typename T>
struct NamedParam {
  std::string name;
  ad::Var<T> var;
};

// Learned weights of one layer. Runtime weight = stored weight * scale.
template <typename T>
struct Layer {
  ad::Var<T> weight;
  ad::Var<T> bias;
  double scale = 1.0;
  ad::ConvGeometry geo{};

  ad::Var<T> conv(const ad::Var<T>& x) const;
  ad::Var<T> conv_transpose(const ad::Var<T>& x, std::size_t out_h, std::size_t out_w) const;
  ad::Var<T> dense(const ad::Var<T>& x) const;
};

template <typename T>
class Generator {
 public:
  // Builds the first `initial_stages` stages (all of them by default).
  Generator(NetworkSpec spec, std::uint64_t seed, std::size_t initial_stages = SIZE_MAX);

  const NetworkSpec& spec() const { return spec_; }
  std::size_t built_stages() const { return stages_.size(); }
  std::size_t total_stages() const { return configs_.size(); }
  // Appends the next stage's parameters; existing parameters are untouched.
  void grow();

  // z: [N, latent_dim] -> [N, 3, R, R] in [-1, 1].
  ad::Var<T> forward(const ad::Var<T>& z, std::size_t stage, FadeState fade = {}) const;

  std::vector<NamedParam<T>> parameters() const;
  // Parameters touched by forward() at `stage`; includes the previous to-RGB
  // head while fading.
  std::vector<NamedParam<T>> stage_parameters(std::size_t stage, bool fading) const;
  std::size_t parameter_count() const;

 private:
  struct Stage {
    std::vector<Layer<T>> body;
    Layer<T> to_rgb;
  };
  void build_stage(std::size_t index);
  ad::Var<T> run_body(std::size_t index, const ad::Var<T>& h) const;
  ad::Var<T> to_rgb(std::size_t index, const ad::Var<T>& h) const;
  std::vector<NamedParam<T>> stage_params(std::size_t index, bool with_rgb) const;

  NetworkSpec spec_;
  std::vector<StageConfig> configs_;
  std::uint64_t seed_;
  std::vector<Stage> stages_;
};

template <typename T>
class Discriminator {
 public:
  Discriminator(NetworkSpec spec, std::uint64_t seed, std::size_t initial_stages = SIZE_MAX);

  const NetworkSpec& spec() const { return spec_; }
  std::size_t built_stages() const { return stages_.size(); }
  std::size_t total_stages() const { return configs_.size(); }
  void grow();

  // images: [N, 3, R, R] -> scores [N]. wgan-scalar head is unbounded;
  // sigmoid head maps into (0, 1).
  ad::Var<T> forward(const ad::Var<T>& images, std::size_t stage, FadeState fade = {}) const;
  // Pre-sigmoid score, used by the numerically stable DCGAN loss.
  ad::Var<T> logits(const ad::Var<T>& images, std::size_t stage, FadeState fade = {}) const;

  std::vector<NamedParam<T>> parameters() const;
  std::vector<NamedParam<T>> stage_parameters(std::size_t stage, bool fading) const;
  std::size_t parameter_count() const;

  // Toggles requires_grad on every parameter (true = trainable).
  void set_trainable(bool flag) const;

 private:
  struct Stage {
    Layer<T> from_rgb;
    std::vector<Layer<T>> body;
  };
  void build_stage(std::size_t index);
  ad::Var<T> run_body(std::size_t index, const ad::Var<T>& h) const;
  std::vector<NamedParam<T>> stage_params(std::size_t index, bool with_rgb) const;

  NetworkSpec spec_;
  std::vector<StageConfig> configs_;
  std::uint64_t seed_;
  std::vector<Stage> stages_;
};

template <typename T>
std::vector<ad::Var<T>> vars_of(const std::vector<NamedParam<T>>& params) {
  std::vector<ad::Var<T>> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.var);
  return out;
}

template <typename T>
std::vector<std::string> names_of(const std::vector<NamedParam<T>>& params) {
  std::vector<std::string> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.name);
  return out;
}

extern template class Generator<float>;
extern template class Generator<double>;
extern template class Discriminator<float>;
extern template class Discriminator<double>;

}  // namespace pgf::nets
