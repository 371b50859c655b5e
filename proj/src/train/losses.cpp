#include "pgf/train/losses.hpp"

#include <stdexcept>

namespace pgf::train {

using ad::Var;

namespace {

template <typename T>
void check_batch(const Var<T>& real, const Var<T>& fake) {
  if (real.shape() != fake.shape()) {
    throw ShapeError("real and fake batches differ: " + pgf::to_string(real.shape()) + " vs " +
                     pgf::to_string(fake.shape()));
  }
  if (real.shape().size() < 2) throw ShapeError("batches must be [N, ...]");
}

template <typename T>
void check_scores(const Var<T>& scores) {
  if (!scores.defined() || scores.shape().size() != 1 || scores.size() == 0) {
    throw ShapeError("expected a non-empty score vector [N]");
  }
}

template <typename T>
Var<T> safe_log(const Var<T>& p) {
  return ad::log(ad::clamp(p, kLogClamp, 1.0));
}

}  // namespace

template <typename T>
Var<T> gradient_penalty(const Critic<T>& critic, const Var<T>& real, const Var<T>& fake, Rng& rng) {
  check_batch(real, fake);
  const std::size_t n = real.shape()[0];
  const std::size_t per = real.size() / n;

  Tensor<T> mixed(real.shape());
  const auto r = real.value().data(), f = fake.value().data();
  auto m = mixed.data();
  for (std::size_t i = 0; i < n; ++i) {
    const T u = static_cast<T>(rng.uniform());
    for (std::size_t j = i * per; j < (i + 1) * per; ++j) m[j] = u * r[j] + (T{1} - u) * f[j];
  }
  Var<T> x_hat(std::move(mixed), true);

  ad::GradModeGuard on(true);
  auto scores = critic(x_hat);
  check_scores(scores);
  std::vector<Var<T>> wrt{x_hat};
  auto g = ad::grad(ad::sum(scores), wrt, /*create_graph=*/true).grads[0];
  auto sq = ad::reshape(ad::square(g), Shape{n, per});
  auto norms = ad::sqrt(ad::sum_to(sq, Shape{n, 1}));
  return ad::mean(ad::square(ad::add_scalar(norms, -1.0)));
}

template <typename T>
Var<T> gradient_penalty(const nets::Discriminator<T>& d, std::size_t stage, nets::FadeState fade,
                        const Var<T>& real, const Var<T>& fake, Rng& rng) {
  if (d.spec().head != nets::HeadKind::wgan_scalar) {
    throw std::invalid_argument("gradient penalty needs a wgan-scalar discriminator head");
  }
  Critic<T> critic = [&](const Var<T>& x) { return d.forward(x, stage, fade); };
  return gradient_penalty(critic, real, fake, rng);
}

template <typename T>
CriticLoss<T> d_loss_wgan_gp(const Critic<T>& critic, const Var<T>& real, const Var<T>& fake, double gp_lambda,
                             double drift_epsilon, Rng& rng) {
  check_batch(real, fake);
  auto real_scores = critic(real);
  auto fake_scores = critic(fake);
  check_scores(real_scores);
  check_scores(fake_scores);
  CriticLoss<T> out;
  out.total = ad::sub(ad::mean(fake_scores), ad::mean(real_scores));
  if (gp_lambda != 0.0) {
    out.penalty = gradient_penalty(critic, real, fake, rng);
    out.total = ad::add(out.total, ad::scale(out.penalty, gp_lambda));
  }
  if (drift_epsilon != 0.0) {
    out.total = ad::add(out.total, ad::scale(ad::mean(ad::square(real_scores)), drift_epsilon));
  }
  return out;
}

template <typename T>
Var<T> g_loss_wgan(const Var<T>& fake_scores) {
  check_scores(fake_scores);
  return ad::neg(ad::mean(fake_scores));
}

template <typename T>
DcganLosses<T> dcgan_losses(const Var<T>& d_real, const Var<T>& d_fake) {
  check_scores(d_real);
  check_scores(d_fake);
  DcganLosses<T> out;
  out.d_loss = ad::neg(ad::add(ad::mean(safe_log(d_real)), ad::mean(safe_log(ad::add_scalar(ad::neg(d_fake), 1.0)))));
  out.g_loss = ad::neg(ad::mean(safe_log(d_fake)));
  return out;
}

template <typename T>
Var<T> g_loss_dcgan(const Var<T>& d_fake) {
  check_scores(d_fake);
  return ad::neg(ad::mean(safe_log(d_fake)));
}

template <typename T>
DcganLosses<T> dcgan_losses(const nets::Discriminator<T>& d, std::size_t stage, const Var<T>& real,
                            const Var<T>& fake) {
  if (d.spec().head != nets::HeadKind::sigmoid) {
    throw std::invalid_argument("dcgan losses need a sigmoid discriminator head");
  }
  check_batch(real, fake);
  return dcgan_losses(d.forward(real, stage), d.forward(fake, stage));
}

#define PGF_INSTANTIATE(T)                                                                                  \
  template Var<T> gradient_penalty(const Critic<T>&, const Var<T>&, const Var<T>&, Rng&);                  \
  template Var<T> gradient_penalty(const nets::Discriminator<T>&, std::size_t, nets::FadeState,             \
                                   const Var<T>&, const Var<T>&, Rng&);                                     \
  template CriticLoss<T> d_loss_wgan_gp(const Critic<T>&, const Var<T>&, const Var<T>&, double, double,    \
                                        Rng&);                                                              \
  template Var<T> g_loss_wgan(const Var<T>&);                                                               \
  template DcganLosses<T> dcgan_losses(const Var<T>&, const Var<T>&);                                       \
  template Var<T> g_loss_dcgan(const Var<T>&);                                                              \
  template DcganLosses<T> dcgan_losses(const nets::Discriminator<T>&, std::size_t, const Var<T>&,          \
                                       const Var<T>&);

PGF_INSTANTIATE(float)
PGF_INSTANTIATE(double)

}  // namespace pgf::train
