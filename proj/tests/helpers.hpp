#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "mvbigan/dataio.hpp"
#include "mvbigan/netdef.hpp"
#include "mvbigan/trainer.hpp"

namespace mvbigan::testing {

// Small enough for finite differences, with batch norm in every network.
inline ArchConfig tiny_arch() {
  ArchConfig a;
  a.latent_dim = 3;
  a.output_size = 4;
  a.view_sizes = {3, 2};
  a.aggregation_dim = 5;
  a.encoder_hidden = {6, 5};
  a.generator_hidden = {6, 5, 4};
  a.d1_hidden = {6, 5, 4};
  a.d2_hidden = {5, 4};
  a.generator_output = Activation::Sigmoid;
  return a;
}

inline Dataset tiny_dataset(std::size_t n, std::uint64_t seed) {
  Dataset ds;
  ds.spec.kind = TaskKind::Quarters;
  ds.spec.views = {ViewShape{3, true}, ViewShape{2, true}};
  ds.spec.output_size = 4;
  ds.spec.sequence_length = 2;
  Rng rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (std::size_t i = 0; i < n; ++i) {
    Example ex;
    ex.target = {u(rng), u(rng), u(rng), u(rng)};
    ex.viewset = ViewSet{SubsetMask::full(2), {{u(rng), u(rng), u(rng)}, {u(rng), u(rng)}}};
    ds.examples.push_back(ex);
  }
  return ds;
}

// Central differences of f over every entry of `x`.
template <typename T>
Mat<T> numeric_grad(Mat<T>& x, const std::function<double()>& f, double h = 1e-5) {
  Mat<T> g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const T keep = x.data()[i];
    x.data()[i] = keep + h;
    const double up = f();
    x.data()[i] = keep - h;
    const double down = f();
    x.data()[i] = keep;
    g.data()[i] = static_cast<T>((up - down) / (2 * h));
  }
  return g;
}

// Norm-relative; the floor keeps exactly-zero gradients (biases feeding
// batch norm) from comparing rounding noise with rounding noise.
template <typename T>
double rel_error(const Mat<T>& a, const Mat<T>& b) {
  const double scale = std::max({a.norm(), b.norm(), 1e-6});
  return (a - b).norm() / scale;
}

// A tiny double-precision model with one batch whose noise is fixed, so
// the training losses are plain functions of the parameters.
struct GradFixture {
  ModelBundle<double> model;
  TrainBatch<double> batch;
};

inline GradFixture make_grad_fixture(std::uint64_t seed) {
  GradFixture s;
  s.model = init_model<double>(tiny_arch(), seed);
  const Dataset ds = tiny_dataset(5, seed + 1);
  std::vector<std::size_t> items{0, 1, 2, 3, 4};
  Rng rng(seed + 2);
  s.batch = make_train_batch<double>(ds, items, 3, rng);
  return s;
}

inline double critic_loss(const GradFixture& s) {
  const auto g = forward_generators(s.model, s.batch);
  const auto c = forward_critics(s.model, s.batch, g);
  const auto l1 = adversarial_loss_from_logits<double>(c.d1_real_logit.row(0).transpose(),
                                                       c.d1_fake_logit.row(0).transpose());
  const auto l2 = adversarial_loss_from_logits<double>(c.d2_real_logit.row(0).transpose(),
                                                       c.d2_fake_logit.row(0).transpose());
  return l1.value + l2.value;
}

inline double generator_loss(const GradFixture& s, double lambda) {
  const auto g = forward_generators(s.model, s.batch);
  const auto c = forward_critics(s.model, s.batch, g);
  const auto l1 = adversarial_loss_from_logits<double>(c.d1_fake_logit.row(0).transpose(),
                                                       c.d1_real_logit.row(0).transpose());
  const auto l2 = adversarial_loss_from_logits<double>(c.d2_fake_logit.row(0).transpose(),
                                                       c.d2_real_logit.row(0).transpose());
  const double kl = sequence_kl_batch<double>(g.h_tape.out, s.batch.batch, s.batch.steps);
  return l1.value + l2.value + lambda * kl;
}

inline double kl_loss(const GradFixture& s) {
  const auto g = forward_generators(s.model, s.batch);
  return sequence_kl_batch<double>(g.h_tape.out, s.batch.batch, s.batch.steps);
}

}  // namespace mvbigan::testing
