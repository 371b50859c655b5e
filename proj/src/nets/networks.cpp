#include "pgf/nets/networks.hpp"

#include <stdexcept>

#include "pgf/tensor/random.hpp"

namespace pgf::nets {

using ad::Var;

void FadeState::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("fade alpha must lie in [0, 1]");
  if (!fading && alpha != 0.0) throw std::invalid_argument("fade alpha must be 0 when not fading");
}

template <typename T>
Var<T> Layer<T>::conv(const Var<T>& x) const {
  return ad::conv2d(x, scale == 1.0 ? weight : ad::scale(weight, scale), bias, geo);
}

template <typename T>
Var<T> Layer<T>::conv_transpose(const Var<T>& x, std::size_t out_h, std::size_t out_w) const {
  return ad::conv_transpose2d(x, scale == 1.0 ? weight : ad::scale(weight, scale), bias, geo, out_h, out_w);
}

template <typename T>
Var<T> Layer<T>::dense(const Var<T>& x) const {
  return ad::dense(x, scale == 1.0 ? weight : ad::scale(weight, scale), bias);
}

namespace {

template <typename T>
Layer<T> make_layer(Rng& rng, Shape weight_shape, bool equalized, ad::ConvGeometry geo = {}) {
  // The fan-in of a transposed conv weight [C_in, C_out, K, K] is C_in * K * K
  // seen from each output; both layouts use dims 1.. for the runtime scale.
  const double he = equalized_weight_scale(weight_shape, true);
  Layer<T> layer;
  const std::size_t out = weight_shape[0];
  layer.weight = Var<T>::parameter(rng.normal_tensor<T>(weight_shape, equalized ? 1.0 : he));
  layer.bias = Var<T>::parameter(Tensor<T>(Shape{out}));
  layer.scale = equalized_weight_scale(weight_shape, equalized);
  layer.geo = geo;
  return layer;
}

// Transposed conv weights are [C_in, C_out, K, K]; their effective fan-in is C_in*K*K and the
// bias has C_out entries.
template <typename T>
Layer<T> make_transpose_layer(Rng& rng, std::size_t c_in, std::size_t c_out, std::size_t k, bool equalized,
                              ad::ConvGeometry geo) {
  const double he = equalized_weight_scale(Shape{c_out, c_in, k, k}, true);
  Layer<T> layer;
  layer.weight = Var<T>::parameter(rng.normal_tensor<T>(Shape{c_in, c_out, k, k}, equalized ? 1.0 : he));
  layer.bias = Var<T>::parameter(Tensor<T>(Shape{c_out}));
  layer.scale = equalized ? he : 1.0;
  layer.geo = geo;
  return layer;
}

template <typename T>
void append(std::vector<NamedParam<T>>& out, const std::string& prefix, const Layer<T>& layer) {
  if (!layer.weight.defined()) return;
  out.push_back({prefix + ".w", layer.weight});
  out.push_back({prefix + ".b", layer.bias});
}

template <typename T>
Var<T> act(const Var<T>& x) {
  return ad::leaky_relu(x, ad::kLeakySlope);
}

void check_stage(std::size_t stage, std::size_t built, const FadeState& fade, NetMode mode) {
  fade.validate();
  if (stage >= built) {
    throw std::out_of_range("stage " + std::to_string(stage) + " not built (have " + std::to_string(built) + ")");
  }
  if (fade.fading && stage == 0) throw std::invalid_argument("cannot fade at stage 0: no previous resolution");
  if (fade.fading && mode == NetMode::dcgan_fixed) throw std::invalid_argument("dcgan-fixed networks do not fade");
}

std::size_t clamp_stages(std::size_t requested, std::size_t total) {
  return requested == SIZE_MAX ? total : std::min(std::max<std::size_t>(requested, 1), total);
}

}  // namespace

// ---------------------------------------------------------------------------
// Generator

template <typename T>
Generator<T>::Generator(NetworkSpec spec, std::uint64_t seed, std::size_t initial_stages)
    : spec_(std::move(spec)), configs_(spec_.stages()), seed_(seed) {
  const std::size_t n = clamp_stages(initial_stages, configs_.size());
  for (std::size_t i = 0; i < n; ++i) build_stage(i);
}

template <typename T>
void Generator<T>::grow() {
  if (stages_.size() == configs_.size()) throw std::logic_error("generator already at its final stage");
  build_stage(stages_.size());
}

template <typename T>
void Generator<T>::build_stage(std::size_t index) {
  Rng rng(Rng::derive(seed_, 2 * index));
  const bool eq = spec_.equalized_lr;
  const auto& cfg = configs_[index];
  Stage stage;
  if (spec_.mode == NetMode::dcgan_fixed) {
    const std::size_t c4 = stage_channels(spec_, 4);
    stage.body.push_back(make_layer<T>(rng, Shape{c4 * 16, spec_.latent_dim}, eq));
    for (std::size_t r = 8; r <= cfg.resolution; r *= 2) {
      const std::size_t c_in = stage_channels(spec_, r / 2);
      const std::size_t c_out = r == cfg.resolution ? 3 : stage_channels(spec_, r);
      stage.body.push_back(make_transpose_layer<T>(rng, c_in, c_out, 4, eq, {2, 1}));
    }
  } else if (index == 0) {
    const std::size_t c = cfg.channels;
    stage.body.push_back(make_layer<T>(rng, Shape{c * 16, spec_.latent_dim}, eq));
    stage.body.push_back(make_layer<T>(rng, Shape{c, c, 3, 3}, eq, {1, 1}));
    stage.to_rgb = make_layer<T>(rng, Shape{3, c, 1, 1}, eq);
  } else {
    const std::size_t c_prev = configs_[index - 1].channels, c = cfg.channels;
    stage.body.push_back(make_layer<T>(rng, Shape{c, c_prev, 3, 3}, eq, {1, 1}));
    stage.body.push_back(make_layer<T>(rng, Shape{c, c, 3, 3}, eq, {1, 1}));
    stage.to_rgb = make_layer<T>(rng, Shape{3, c, 1, 1}, eq);
  }
  stages_.push_back(std::move(stage));
}

template <typename T>
Var<T> Generator<T>::run_body(std::size_t index, const Var<T>& h) const {
  const auto& body = stages_[index].body;
  if (spec_.mode == NetMode::dcgan_fixed) {
    const std::size_t n = h.shape()[0];
    const std::size_t c4 = stage_channels(spec_, 4);
    auto x = ad::pixelwise_feature_norm(act(ad::reshape(body[0].dense(h), Shape{n, c4, 4, 4})));
    std::size_t side = 4;
    for (std::size_t i = 1; i < body.size(); ++i) {
      side *= 2;
      x = body[i].conv_transpose(x, side, side);
      if (i + 1 < body.size()) x = ad::pixelwise_feature_norm(act(x));
    }
    return x;
  }
  if (index == 0) {
    const std::size_t n = h.shape()[0];
    const std::size_t c = configs_[0].channels;
    auto z = ad::reshape(ad::pixelwise_feature_norm(ad::reshape(h, Shape{n, spec_.latent_dim, 1, 1})),
                         Shape{n, spec_.latent_dim});
    auto x = ad::pixelwise_feature_norm(act(ad::reshape(body[0].dense(z), Shape{n, c, 4, 4})));
    return ad::pixelwise_feature_norm(act(body[1].conv(x)));
  }
  auto x = ad::upsample_nearest2x(h);
  x = ad::pixelwise_feature_norm(act(body[0].conv(x)));
  return ad::pixelwise_feature_norm(act(body[1].conv(x)));
}

template <typename T>
Var<T> Generator<T>::to_rgb(std::size_t index, const Var<T>& h) const {
  return ad::tanh(stages_[index].to_rgb.conv(h));
}

template <typename T>
Var<T> Generator<T>::forward(const Var<T>& z, std::size_t stage, FadeState fade) const {
  check_stage(stage, stages_.size(), fade, spec_.mode);
  if (z.shape().size() != 2 || z.shape()[1] != spec_.latent_dim) {
    throw ShapeError("generator expects latent [N, " + std::to_string(spec_.latent_dim) + "], got " +
                     pgf::to_string(z.shape()));
  }
  if (spec_.mode == NetMode::dcgan_fixed) return ad::tanh(run_body(0, z));

  Var<T> h = run_body(0, z);
  Var<T> h_prev;
  for (std::size_t s = 1; s <= stage; ++s) {
    h_prev = h;
    h = run_body(s, h);
  }
  auto out = to_rgb(stage, h);
  if (fade.fading && fade.alpha > 0.0) {
    auto prev = ad::upsample_nearest2x(to_rgb(stage - 1, h_prev));
    out = ad::add(ad::scale(prev, fade.alpha), ad::scale(out, 1.0 - fade.alpha));
  }
  return out;
}

template <typename T>
std::vector<NamedParam<T>> Generator<T>::stage_params(std::size_t index, bool with_rgb) const {
  std::vector<NamedParam<T>> out;
  const std::string prefix = "g.s" + std::to_string(index);
  const auto& st = stages_[index];
  for (std::size_t i = 0; i < st.body.size(); ++i) append(out, prefix + ".l" + std::to_string(i), st.body[i]);
  if (with_rgb) append(out, prefix + ".rgb", st.to_rgb);
  return out;
}

template <typename T>
std::vector<NamedParam<T>> Generator<T>::parameters() const {
  std::vector<NamedParam<T>> out;
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    auto p = stage_params(i, true);
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

template <typename T>
std::vector<NamedParam<T>> Generator<T>::stage_parameters(std::size_t stage, bool fading) const {
  check_stage(stage, stages_.size(), FadeState{fading ? 0.5 : 0.0, fading}, spec_.mode);
  std::vector<NamedParam<T>> out;
  for (std::size_t i = 0; i <= stage; ++i) {
    auto p = stage_params(i, i == stage || (fading && i + 1 == stage));
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

template <typename T>
std::size_t Generator<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.var.size();
  return n;
}

// ---------------------------------------------------------------------------
// Discriminator

template <typename T>
Discriminator<T>::Discriminator(NetworkSpec spec, std::uint64_t seed, std::size_t initial_stages)
    : spec_(std::move(spec)), configs_(spec_.stages()), seed_(seed) {
  const std::size_t n = clamp_stages(initial_stages, configs_.size());
  for (std::size_t i = 0; i < n; ++i) build_stage(i);
}

template <typename T>
void Discriminator<T>::grow() {
  if (stages_.size() == configs_.size()) throw std::logic_error("discriminator already at its final stage");
  build_stage(stages_.size());
}

template <typename T>
void Discriminator<T>::build_stage(std::size_t index) {
  Rng rng(Rng::derive(seed_, 2 * index + 1));
  const bool eq = spec_.equalized_lr;
  const auto& cfg = configs_[index];
  Stage stage;
  if (spec_.mode == NetMode::dcgan_fixed) {
    for (std::size_t r = cfg.resolution; r > 4; r /= 2) {
      const std::size_t c_in = r == cfg.resolution ? 3 : stage_channels(spec_, r);
      stage.body.push_back(make_layer<T>(rng, Shape{stage_channels(spec_, r / 2), c_in, 4, 4}, eq, {2, 1}));
    }
    stage.body.push_back(make_layer<T>(rng, Shape{1, stage_channels(spec_, 4) * 16}, eq));
  } else if (index == 0) {
    const std::size_t c = cfg.channels;
    stage.from_rgb = make_layer<T>(rng, Shape{c, 3, 1, 1}, eq);
    stage.body.push_back(make_layer<T>(rng, Shape{c, c + 1, 3, 3}, eq, {1, 1}));
    stage.body.push_back(make_layer<T>(rng, Shape{c, c * 16}, eq));
    stage.body.push_back(make_layer<T>(rng, Shape{1, c}, eq));
  } else {
    const std::size_t c_prev = configs_[index - 1].channels, c = cfg.channels;
    stage.from_rgb = make_layer<T>(rng, Shape{c, 3, 1, 1}, eq);
    stage.body.push_back(make_layer<T>(rng, Shape{c, c, 3, 3}, eq, {1, 1}));
    stage.body.push_back(make_layer<T>(rng, Shape{c_prev, c, 3, 3}, eq, {1, 1}));
  }
  stages_.push_back(std::move(stage));
}

template <typename T>
Var<T> Discriminator<T>::run_body(std::size_t index, const Var<T>& h) const {
  const auto& body = stages_[index].body;
  if (spec_.mode == NetMode::dcgan_fixed) {
    auto x = h;
    for (std::size_t i = 0; i + 1 < body.size(); ++i) x = act(body[i].conv(x));
    const std::size_t n = x.shape()[0];
    return ad::reshape(body.back().dense(ad::reshape(x, Shape{n, x.size() / n})), Shape{n});
  }
  if (index == 0) {
    const std::size_t n = h.shape()[0];
    auto x = act(body[0].conv(ad::minibatch_stddev_feature(h)));
    x = act(body[1].dense(ad::reshape(x, Shape{n, x.size() / n})));
    return ad::reshape(body[2].dense(x), Shape{n});
  }
  auto x = act(body[0].conv(h));
  x = act(body[1].conv(x));
  return ad::avgpool2x(x);
}

template <typename T>
Var<T> Discriminator<T>::logits(const Var<T>& images, std::size_t stage, FadeState fade) const {
  check_stage(stage, stages_.size(), fade, spec_.mode);
  const std::size_t res = configs_[stage].resolution;
  const Shape& s = images.shape();
  if (s.size() != 4 || s[1] != 3 || s[2] != res || s[3] != res) {
    throw ShapeError("discriminator stage " + std::to_string(stage) + " expects [N, 3, " + std::to_string(res) +
                     ", " + std::to_string(res) + "], got " + pgf::to_string(s));
  }
  if (spec_.mode == NetMode::dcgan_fixed) return run_body(0, images);

  auto h = act(stages_[stage].from_rgb.conv(images));
  if (stage > 0) {
    h = run_body(stage, h);
    if (fade.fading && fade.alpha > 0.0) {
      auto low = act(stages_[stage - 1].from_rgb.conv(ad::avgpool2x(images)));
      h = ad::add(ad::scale(low, fade.alpha), ad::scale(h, 1.0 - fade.alpha));
    }
    for (std::size_t s2 = stage - 1; s2 >= 1; --s2) h = run_body(s2, h);
  }
  return run_body(0, h);
}

template <typename T>
Var<T> Discriminator<T>::forward(const Var<T>& images, std::size_t stage, FadeState fade) const {
  auto score = logits(images, stage, fade);
  if (spec_.head != HeadKind::sigmoid) return score;
  // Beyond these logits the sigmoid rounds to exactly 0 or 1 at this precision.
  const double bound = sizeof(T) == sizeof(float) ? 15.0 : 35.0;
  return ad::sigmoid(ad::clamp(score, -bound, bound));
}

template <typename T>
std::vector<NamedParam<T>> Discriminator<T>::stage_params(std::size_t index, bool with_rgb) const {
  std::vector<NamedParam<T>> out;
  const std::string prefix = "d.s" + std::to_string(index);
  const auto& st = stages_[index];
  if (with_rgb) append(out, prefix + ".rgb", st.from_rgb);
  for (std::size_t i = 0; i < st.body.size(); ++i) append(out, prefix + ".l" + std::to_string(i), st.body[i]);
  return out;
}

template <typename T>
std::vector<NamedParam<T>> Discriminator<T>::parameters() const {
  std::vector<NamedParam<T>> out;
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    auto p = stage_params(i, true);
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

template <typename T>
std::vector<NamedParam<T>> Discriminator<T>::stage_parameters(std::size_t stage, bool fading) const {
  check_stage(stage, stages_.size(), FadeState{fading ? 0.5 : 0.0, fading}, spec_.mode);
  std::vector<NamedParam<T>> out;
  for (std::size_t i = 0; i <= stage; ++i) {
    auto p = stage_params(i, i == stage || (fading && i + 1 == stage));
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

template <typename T>
std::size_t Discriminator<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.var.size();
  return n;
}

template <typename T>
void Discriminator<T>::set_trainable(bool flag) const {
  for (auto& p : parameters()) p.var.set_requires_grad(flag);
}

template struct Layer<float>;
template struct Layer<double>;
template class Generator<float>;
template class Generator<double>;
template class Discriminator<float>;
template class Discriminator<double>;

}  // namespace pgf::nets
