#pragma once

#include <cstdint>
#include <functional>

#include "pgf/nets/networks.hpp"
#include "pgf/tensor/random.hpp"

namespace pgf::train {

inline constexpr double kDefaultGpLambda = 10.0;
inline constexpr double kDefaultDriftEpsilon = 0.001;
inline constexpr double kLogClamp = 1e-12;

// Any differentiable images -> scores [N] map.
template <typename T>
using Critic = std::function<ad::Var<T>(const ad::Var<T>&)>;

// E[(||dD(x_hat)/dx_hat||_2 - 1)^2] with x_hat = u*real + (1-u)*fake and one
// u ~ U(0,1) per sample, drawn from `rng`. Differentiable w.r.t. the critic's
// parameters.
template <typename T>
ad::Var<T> gradient_penalty(const Critic<T>& critic, const ad::Var<T>& real, const ad::Var<T>& fake, Rng& rng);

template <typename T>
ad::Var<T> gradient_penalty(const Critic<T>& critic, const ad::Var<T>& real, const ad::Var<T>& fake,
                            std::uint64_t mix_seed) {
  Rng rng(mix_seed);
  return gradient_penalty(critic, real, fake, rng);
}

// Throws std::invalid_argument for a sigmoid-head discriminator.
template <typename T>
ad::Var<T> gradient_penalty(const nets::Discriminator<T>& d, std::size_t stage, nets::FadeState fade,
                            const ad::Var<T>& real, const ad::Var<T>& fake, Rng& rng);

template <typename T>
struct CriticLoss {
  ad::Var<T> total;
  ad::Var<T> penalty;  // undefined when gp_lambda == 0
};

// E[D(fake)] - E[D(real)] + gp_lambda * penalty + drift * E[D(real)^2].
template <typename T>
CriticLoss<T> d_loss_wgan_gp(const Critic<T>& critic, const ad::Var<T>& real, const ad::Var<T>& fake,
                             double gp_lambda, double drift_epsilon, Rng& rng);

// -E[D(fake)] from precomputed scores.
template <typename T>
ad::Var<T> g_loss_wgan(const ad::Var<T>& fake_scores);

template <typename T>
struct DcganLosses {
  ad::Var<T> d_loss;
  ad::Var<T> g_loss;
};

// From sigmoid-head probabilities; logs are clamped at 1e-12.
template <typename T>
DcganLosses<T> dcgan_losses(const ad::Var<T>& d_real, const ad::Var<T>& d_fake);

// -E[log D(fake)] alone, for the generator update.
template <typename T>
ad::Var<T> g_loss_dcgan(const ad::Var<T>& d_fake);

// Checks the head before delegating; errors on a wgan-scalar head.
template <typename T>
DcganLosses<T> dcgan_losses(const nets::Discriminator<T>& d, std::size_t stage, const ad::Var<T>& real,
                            const ad::Var<T>& fake);

}  // namespace pgf::train
