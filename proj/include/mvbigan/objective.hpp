#pragma once

#include <vector>

#include "mvbigan/core.hpp"
#include "mvbigan/netdef.hpp"

namespace mvbigan {

struct LossBreakdown {
  double d1_loss = 0;
  double d2_loss = 0;
  double gen_adv_loss = 0;  // D1 part of the label-swapped objective
  double enc_adv_loss = 0;  // D2 part
  double kl_penalty = 0;
  double total_gen_side = 0;
};

struct LossParts {
  double d1_loss = 0;
  double d2_loss = 0;
  double gen_adv_loss = 0;
  double enc_adv_loss = 0;
  double kl_penalty = 0;
};

// KL(N(mu1, s1^2) || N(mu2, s2^2)) for diagonal Gaussians:
//   1/2 sum_i ( -1 - log(s1^2/s2^2) + s1^2/s2^2 + (mu1 - mu2)^2 / s2^2 )
template <typename T>
T kl_diag_gaussian(const LatentGaussian<T>& p, const LatentGaussian<T>& q);

template <typename T>
struct KlGrad {
  Mat<T> mu_p, log_var_p, mu_q, log_var_q;
};

// Column-wise KL between two latent batches; fills `grad` (d sum / d input)
// scaled by `scale` when given.
template <typename T>
Vec<T> kl_columns(const Mat<T>& mu_p, const Mat<T>& log_var_p, const Mat<T>& mu_q,
                  const Mat<T>& log_var_q, KlGrad<T>* grad = nullptr, T scale = T(1));

// Discriminator objectives on probabilities:
//   -mean log real - mean log(1 - fake)
template <typename T>
T d1_objective(const Vec<T>& real_scores, const Vec<T>& fake_scores);
template <typename T>
T d2_objective(const Vec<T>& real_scores, const Vec<T>& fake_scores);

// Label-swapped objective for G, E and H.
template <typename T>
T generator_objective(const Vec<T>& d1_fake, const Vec<T>& d1_real, const Vec<T>& d2_fake,
                      const Vec<T>& d2_real);

// -mean log sigmoid(first) - mean log(1 - sigmoid(second)), evaluated on
// logits with softplus; gradients are w.r.t. the logits.
template <typename T>
struct LogitLoss {
  T value = 0;
  Vec<T> d_first;
  Vec<T> d_second;
};

template <typename T>
LogitLoss<T> adversarial_loss_from_logits(const Vec<T>& first, const Vec<T>& second);

// sum_{t>=1} KL(latents[t] || latents[t-1]); superset first.
template <typename T>
T sequence_kl_penalty(const std::vector<LatentGaussian<T>>& latents);

// Step-major latents (column t*batch + b is item b at step t). Returns the
// per-item penalty averaged over the batch; gradients scaled by `scale`.
template <typename T>
T sequence_kl_batch(const LatentBatch<T>& latents, Eigen::Index batch, Eigen::Index steps,
                    KlGrad<T>* grad = nullptr, T scale = T(1));

LossBreakdown assemble_losses(const LossParts& parts, double lambda);

}  // namespace mvbigan
