#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "mvbigan/objective.hpp"

using namespace mvbigan;

namespace {

LatentGaussian<double> gauss(std::initializer_list<double> mu, std::initializer_list<double> var) {
  LatentGaussian<double> g;
  g.mu = Eigen::Map<const Vec<double>>(mu.begin(), static_cast<Eigen::Index>(mu.size()));
  g.log_var = Eigen::Map<const Vec<double>>(var.begin(), static_cast<Eigen::Index>(var.size()))
                  .array()
                  .log()
                  .matrix();
  return g;
}

Vec<double> vec(std::initializer_list<double> xs) {
  return Eigen::Map<const Vec<double>>(xs.begin(), static_cast<Eigen::Index>(xs.size()));
}

LatentGaussian<double> random_gauss(int Z, Rng& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  LatentGaussian<double> g;
  g.mu.resize(Z);
  g.log_var.resize(Z);
  for (int i = 0; i < Z; ++i) {
    g.mu(i) = u(rng);
    g.log_var(i) = u(rng);
  }
  return g;
}

}  // namespace

TEST(Kl, HandCases) {
  const auto p = gauss({0.3, -0.2}, {0.5, 2.0});
  EXPECT_NEAR(kl_diag_gaussian(p, p), 0.0, 1e-12);
  EXPECT_NEAR(kl_diag_gaussian(gauss({1}, {1}), gauss({0}, {1})), 0.5, 1e-12);
  EXPECT_NEAR(kl_diag_gaussian(gauss({0}, {4}), gauss({0}, {1})), 0.5 * (-1 - std::log(4.0) + 4),
              1e-12);
  EXPECT_NEAR(kl_diag_gaussian(gauss({0}, {4}), gauss({0}, {1})), 0.80685, 1e-5);
}

TEST(Kl, Errors) {
  EXPECT_THROW(kl_diag_gaussian(gauss({0, 0}, {1, 1}), gauss({0}, {1})), Error);
  auto bad = gauss({0}, {1});
  bad.mu(0) = NAN;
  try {
    kl_diag_gaussian(bad, gauss({0}, {1}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonFinite);
  }
}

TEST(Kl, NonNegativeZeroOnlyWhenEqual) {
  Rng rng(3);
  for (int t = 0; t < 500; ++t) {
    const auto p = random_gauss(4, rng), q = random_gauss(4, rng);
    EXPECT_GT(kl_diag_gaussian(p, q), 1e-9);
    EXPECT_NEAR(kl_diag_gaussian(p, p), 0.0, 1e-9);
  }
}

TEST(Kl, Asymmetric) {
  Rng rng(4);
  const auto p = random_gauss(3, rng), q = random_gauss(3, rng);
  EXPECT_GT(std::abs(kl_diag_gaussian(p, q) - kl_diag_gaussian(q, p)), 1e-6);
}

TEST(Kl, ColumnGradientsMatchFiniteDifferences) {
  Rng rng(8);
  std::uniform_real_distribution<double> u(-1, 1);
  Mat<double> a(3, 4), b(3, 4), c(3, 4), d(3, 4);
  for (auto* m : {&a, &b, &c, &d})
    for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = u(rng);
  KlGrad<double> g;
  kl_columns<double>(a, b, c, d, &g, 1.0);
  auto f = [&] { return kl_columns<double>(a, b, c, d).sum(); };
  using mvbigan::testing::numeric_grad;
  using mvbigan::testing::rel_error;
  EXPECT_LE(rel_error(g.mu_p, numeric_grad<double>(a, f)), 1e-6);
  EXPECT_LE(rel_error(g.log_var_p, numeric_grad<double>(b, f)), 1e-6);
  EXPECT_LE(rel_error(g.mu_q, numeric_grad<double>(c, f)), 1e-6);
  EXPECT_LE(rel_error(g.log_var_q, numeric_grad<double>(d, f)), 1e-6);
}

TEST(Objectives, DiscriminatorHandCases) {
  EXPECT_NEAR(d1_objective<double>(vec({0.5, 0.5}), vec({0.5})), 2 * std::log(2.0), 1e-12);
  EXPECT_NEAR(d1_objective<double>(vec({0.8}), vec({0.3})), -(std::log(0.8) + std::log(0.7)), 1e-12);
  EXPECT_NEAR(d1_objective<double>(vec({0.8}), vec({0.3})), 0.57982, 1e-5);
  EXPECT_NEAR(d2_objective<double>(vec({0.9}), vec({0.1})), 0.21072, 1e-5);
  EXPECT_NEAR(d1_objective<double>(vec({1 - 1e-12}), vec({1e-12})), 0.0, 1e-9);
  EXPECT_EQ(d1_objective<double>(vec({0.7, 0.2}), vec({0.4})),
            d2_objective<double>(vec({0.7, 0.2}), vec({0.4})));
}

TEST(Objectives, GeneratorHandCases) {
  const Vec<double> h = vec({0.5});
  EXPECT_NEAR(generator_objective<double>(h, h, h, h), 4 * std::log(2.0), 1e-12);
  EXPECT_NEAR(generator_objective<double>(vec({0.3}), vec({0.8}), h, h),
              -std::log(0.3) - std::log(0.2) + 2 * std::log(2.0), 1e-12);
  EXPECT_NEAR(generator_objective<double>(vec({0.3}), vec({0.8}), h, h), 4.19970, 1e-5);
  const Vec<double> one = vec({1 - 1e-12}), zero = vec({1e-12});
  EXPECT_NEAR(generator_objective<double>(one, zero, one, zero), 0.0, 1e-9);
}

TEST(Objectives, SaturatedScoresAreNonFinite) {
  try {
    d1_objective<double>(vec({0.0}), vec({0.5}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonFinite);
  }
}

TEST(Objectives, LogitFormMatchesProbabilityForm) {
  const Vec<double> a = vec({0.3, -1.2, 2.0}), b = vec({-0.4, 0.9});
  auto sig = [](const Vec<double>& x) { return (1.0 / (1.0 + (-x.array()).exp())).matrix().eval(); };
  const auto l = adversarial_loss_from_logits<double>(a, b);
  EXPECT_NEAR(l.value, d1_objective<double>(sig(a), sig(b)), 1e-12);
  Mat<double> xm = a, ym = b;
  auto f = [&] { return adversarial_loss_from_logits<double>(xm.col(0), ym.col(0)).value; };
  using mvbigan::testing::numeric_grad;
  EXPECT_LE(mvbigan::testing::rel_error<double>(l.d_first, numeric_grad<double>(xm, f)), 1e-6);
  EXPECT_LE(mvbigan::testing::rel_error<double>(l.d_second, numeric_grad<double>(ym, f)), 1e-6);
  // large logits stay finite
  EXPECT_TRUE(std::isfinite(adversarial_loss_from_logits<double>(vec({-800}), vec({800})).value));
}

TEST(SequencePenalty, Cases) {
  EXPECT_THROW(sequence_kl_penalty<double>({}), Error);
  const auto a = gauss({0}, {1}), b = gauss({1}, {1}), c = gauss({1}, {4});
  EXPECT_EQ(sequence_kl_penalty<double>({a}), 0.0);
  EXPECT_EQ(sequence_kl_penalty<double>({a, a, a}), 0.0);
  // superset first: KL(b||a) + KL(c||b)
  EXPECT_EQ(sequence_kl_penalty<double>({a, b, c}), kl_diag_gaussian(b, a) + kl_diag_gaussian(c, b));
  EXPECT_NEAR(sequence_kl_penalty<double>({a, b, c}), 0.5 + 0.5 * (-1 - std::log(4.0) + 4), 1e-12);
}

TEST(SequencePenalty, BatchFormAveragesItems) {
  Rng rng(12);
  const int B = 3, L = 3, Z = 2;
  LatentBatch<double> lat;
  lat.mu.resize(Z, B * L);
  lat.log_var.resize(Z, B * L);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < lat.mu.size(); ++i) {
    lat.mu.data()[i] = u(rng);
    lat.log_var.data()[i] = u(rng);
  }
  double expected = 0;
  for (int b = 0; b < B; ++b) {
    std::vector<LatentGaussian<double>> seq;
    for (int t = 0; t < L; ++t) seq.push_back(lat.at(t * B + b));
    expected += sequence_kl_penalty(seq) / B;
  }
  KlGrad<double> g;
  EXPECT_NEAR(sequence_kl_batch<double>(lat, B, L, &g, 1.0), expected, 1e-12);
  auto f = [&] { return sequence_kl_batch<double>(lat, B, L); };
  EXPECT_LE(mvbigan::testing::rel_error(g.mu_p, mvbigan::testing::numeric_grad<double>(lat.mu, f)), 1e-6);
  EXPECT_LE(mvbigan::testing::rel_error(g.log_var_p,
                                        mvbigan::testing::numeric_grad<double>(lat.log_var, f)),
            1e-6);
}

TEST(Assemble, Composition) {
  LossParts p{1.0, 2.0, 0.3, 0.4, 2.0};
  EXPECT_DOUBLE_EQ(assemble_losses(p, 0.0).total_gen_side, 0.7);
  EXPECT_NEAR(assemble_losses(p, 1e-5).total_gen_side - assemble_losses(p, 0.0).total_gen_side,
                   2e-5, 1e-15);
  p.kl_penalty = 0;
  EXPECT_EQ(assemble_losses(p, 3.0).total_gen_side, assemble_losses(p, 0.0).total_gen_side);
  EXPECT_THROW(assemble_losses(p, -1.0), Error);
  p.d1_loss = INFINITY;
  EXPECT_THROW(assemble_losses(p, 0.0), Error);
}
