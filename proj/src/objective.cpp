#include "mvbigan/objective.hpp"

#include <cmath>

namespace mvbigan {

namespace {

template <typename T>
T softplus(T x) {
  return x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

template <typename T>
T sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
T finite_or_throw(T v, const char* what) {
  if (!std::isfinite(static_cast<double>(v))) {
    throw Error(ErrorKind::NonFinite, std::string(what) + " is not finite");
  }
  return v;
}

template <typename T>
T mean_log(const Vec<T>& p) {
  return p.size() == 0 ? T(0) : p.array().log().mean();
}

template <typename T>
T mean_log1m(const Vec<T>& p) {
  return p.size() == 0 ? T(0) : (T(1) - p.array()).log().mean();
}

}  // namespace

template <typename T>
Vec<T> kl_columns(const Mat<T>& mu_p, const Mat<T>& log_var_p, const Mat<T>& mu_q,
                  const Mat<T>& log_var_q, KlGrad<T>* grad, T scale) {
  if (mu_p.rows() != mu_q.rows() || mu_p.cols() != mu_q.cols() ||
      log_var_p.rows() != mu_p.rows() || log_var_q.rows() != mu_q.rows() ||
      log_var_p.cols() != mu_p.cols() || log_var_q.cols() != mu_q.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "KL arguments have different shapes");
  }
  using Arr = Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic>;
  const Arr ratio = (log_var_p - log_var_q).array().exp();  // s1^2 / s2^2
  const Arr inv_q = (-log_var_q.array()).exp();             // 1 / s2^2
  const Arr diff = (mu_p - mu_q).array();
  const Mat<T> terms =
      (T(-1) - (log_var_p - log_var_q).array() + ratio + diff.square() * inv_q).matrix();
  Vec<T> kl = T(0.5) * terms.colwise().sum().transpose();
  if (!kl.allFinite()) throw Error(ErrorKind::NonFinite, "KL divergence is not finite");
  if (grad) {
    grad->mu_p = (scale * diff * inv_q).matrix();
    grad->mu_q = -grad->mu_p;
    grad->log_var_p = (scale * T(0.5) * (ratio - T(1))).matrix();
    grad->log_var_q = (scale * T(0.5) * (T(1) - ratio - diff.square() * inv_q)).matrix();
  }
  return kl;
}

template <typename T>
T kl_diag_gaussian(const LatentGaussian<T>& p, const LatentGaussian<T>& q) {
  if (p.mu.size() != q.mu.size()) {
    throw Error(ErrorKind::ShapeMismatch, "KL arguments have different latent sizes");
  }
  if (!p.mu.allFinite() || !p.log_var.allFinite() || !q.mu.allFinite() ||
      !q.log_var.allFinite()) {
    throw Error(ErrorKind::NonFinite, "KL argument is not finite");
  }
  return kl_columns<T>(p.mu, p.log_var, q.mu, q.log_var)(0);
}

template <typename T>
T d1_objective(const Vec<T>& real_scores, const Vec<T>& fake_scores) {
  return finite_or_throw(-mean_log(real_scores) - mean_log1m(fake_scores),
                         "discriminator objective");
}

template <typename T>
T d2_objective(const Vec<T>& real_scores, const Vec<T>& fake_scores) {
  return d1_objective(real_scores, fake_scores);
}

template <typename T>
T generator_objective(const Vec<T>& d1_fake, const Vec<T>& d1_real, const Vec<T>& d2_fake,
                      const Vec<T>& d2_real) {
  return finite_or_throw(-mean_log(d1_fake) - mean_log1m(d1_real) - mean_log(d2_fake) -
                             mean_log1m(d2_real),
                         "generator objective");
}

template <typename T>
LogitLoss<T> adversarial_loss_from_logits(const Vec<T>& first, const Vec<T>& second) {
  LogitLoss<T> out;
  out.d_first.resize(first.size());
  out.d_second.resize(second.size());
  T a = 0, b = 0;
  for (Eigen::Index i = 0; i < first.size(); ++i) {
    a += softplus(-first(i));
    out.d_first(i) = (sigmoid(first(i)) - T(1)) / static_cast<T>(first.size());
  }
  for (Eigen::Index i = 0; i < second.size(); ++i) {
    b += softplus(second(i));
    out.d_second(i) = sigmoid(second(i)) / static_cast<T>(second.size());
  }
  if (first.size() > 0) a /= static_cast<T>(first.size());
  if (second.size() > 0) b /= static_cast<T>(second.size());
  out.value = finite_or_throw(a + b, "adversarial loss");
  return out;
}

template <typename T>
T sequence_kl_penalty(const std::vector<LatentGaussian<T>>& latents) {
  if (latents.empty()) throw Error(ErrorKind::EmptySequence, "no latents along the sequence");
  T total = 0;
  for (std::size_t t = 1; t < latents.size(); ++t) {
    total += kl_diag_gaussian(latents[t], latents[t - 1]);
  }
  return total;
}

template <typename T>
T sequence_kl_batch(const LatentBatch<T>& latents, Eigen::Index batch, Eigen::Index steps,
                    KlGrad<T>* grad, T scale) {
  if (steps < 1 || batch < 1) throw Error(ErrorKind::EmptySequence, "empty sequence batch");
  if (latents.mu.cols() != batch * steps) {
    throw Error(ErrorKind::ShapeMismatch, "latent batch does not hold batch x steps columns");
  }
  const Eigen::Index Z = latents.mu.rows();
  if (grad) {
    grad->mu_p = Mat<T>::Zero(Z, batch * steps);
    grad->log_var_p = Mat<T>::Zero(Z, batch * steps);
  }
  if (steps == 1) return T(0);
  const Eigen::Index n = batch * (steps - 1);
  // superset = steps 1..L-1, subset = steps 0..L-2; contiguous in step-major order
  KlGrad<T> g;
  const T item_scale = scale / static_cast<T>(batch);
  Vec<T> kl = kl_columns<T>(latents.mu.rightCols(n), latents.log_var.rightCols(n),
                            latents.mu.leftCols(n), latents.log_var.leftCols(n),
                            grad ? &g : nullptr, item_scale);
  if (grad) {
    grad->mu_p.rightCols(n) += g.mu_p;
    grad->log_var_p.rightCols(n) += g.log_var_p;
    grad->mu_p.leftCols(n) += g.mu_q;
    grad->log_var_p.leftCols(n) += g.log_var_q;
  }
  return kl.sum() / static_cast<T>(batch);
}

LossBreakdown assemble_losses(const LossParts& parts, double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw Error(ErrorKind::InvalidConfig, "lambda must be a non-negative finite number");
  }
  for (double v : {parts.d1_loss, parts.d2_loss, parts.gen_adv_loss, parts.enc_adv_loss,
                   parts.kl_penalty}) {
    if (!std::isfinite(v)) throw Error(ErrorKind::NonFinite, "loss part is not finite");
  }
  LossBreakdown out;
  out.d1_loss = parts.d1_loss;
  out.d2_loss = parts.d2_loss;
  out.gen_adv_loss = parts.gen_adv_loss;
  out.enc_adv_loss = parts.enc_adv_loss;
  out.kl_penalty = parts.kl_penalty;
  out.total_gen_side = parts.gen_adv_loss + parts.enc_adv_loss + lambda * parts.kl_penalty;
  return out;
}

#define MVBIGAN_INSTANTIATE(T)                                                                 \
  template T kl_diag_gaussian<T>(const LatentGaussian<T>&, const LatentGaussian<T>&);          \
  template Vec<T> kl_columns<T>(const Mat<T>&, const Mat<T>&, const Mat<T>&, const Mat<T>&,    \
                                KlGrad<T>*, T);                                                \
  template T d1_objective<T>(const Vec<T>&, const Vec<T>&);                                    \
  template T d2_objective<T>(const Vec<T>&, const Vec<T>&);                                    \
  template T generator_objective<T>(const Vec<T>&, const Vec<T>&, const Vec<T>&,               \
                                    const Vec<T>&);                                            \
  template LogitLoss<T> adversarial_loss_from_logits<T>(const Vec<T>&, const Vec<T>&);         \
  template T sequence_kl_penalty<T>(const std::vector<LatentGaussian<T>>&);                    \
  template T sequence_kl_batch<T>(const LatentBatch<T>&, Eigen::Index, Eigen::Index,           \
                                  KlGrad<T>*, T);

MVBIGAN_INSTANTIATE(float)
MVBIGAN_INSTANTIATE(double)

}  // namespace mvbigan
