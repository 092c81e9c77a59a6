#include <gtest/gtest.h>

#include "helpers.hpp"
#include "mvbigan/netdef.hpp"

using namespace mvbigan;
using mvbigan::testing::tiny_arch;
using mvbigan::testing::tiny_dataset;

namespace {

std::vector<ViewSet> viewsets(const Dataset& ds) {
  std::vector<ViewSet> out;
  for (const auto& ex : ds.examples) out.push_back(ex.viewset);
  return out;
}

template <typename T>
std::vector<T> flat_params(ModelBundle<T>& m) {
  std::vector<T> out;
  m.for_each_param([&](Param<T>& p) { out.insert(out.end(), p.value.data(), p.value.data() + p.value.size()); });
  return out;
}

}  // namespace

TEST(Netdef, InitIsDeterministicInSeed) {
  auto a = init_model<float>(tiny_arch(), 4);
  auto b = init_model<float>(tiny_arch(), 4);
  auto c = init_model<float>(tiny_arch(), 5);
  EXPECT_EQ(flat_params(a), flat_params(b));
  EXPECT_NE(flat_params(a), flat_params(c));
}

TEST(Netdef, RejectsBadArch) {
  ArchConfig a = tiny_arch();
  a.latent_dim = 0;
  EXPECT_THROW(init_model<float>(a, 0), Error);
  a = tiny_arch();
  a.view_sizes.clear();
  EXPECT_THROW(init_model<float>(a, 0), Error);
}

TEST(Netdef, OutputRanges) {
  auto m = init_model<double>(tiny_arch(), 1);
  const Dataset ds = tiny_dataset(20, 2);
  auto sets = viewsets(ds);
  for (std::size_t i = 0; i < sets.size(); ++i) sets[i] = sets[i].with_mask(SubsetMask{int(i % 2), 1});
  for (Mode mode : {Mode::Train, Mode::Eval}) {
    const auto lat = encode_views(m, to_batch<double>(sets), mode);
    EXPECT_LT(lat.mu.cwiseAbs().maxCoeff(), 1.0);
    // nELU caps log variance below 1
    EXPECT_LT(lat.log_var.maxCoeff(), 1.0);
    EXPECT_LT(lat.log_var.array().exp().maxCoeff(), std::exp(1.0));
    Rng rng(3);
    std::normal_distribution<double> n(0, 3);
    Mat<double> z(3, 20);
    for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = n(rng);
    const Mat<double> y = generate(m, z, mode);
    EXPECT_EQ(y.rows(), 4);
    EXPECT_GE(y.minCoeff(), 0.0);
    EXPECT_LE(y.maxCoeff(), 1.0);
    EXPECT_EQ(discriminate_pair(m, y, z, mode).cols(), 20);
  }
}

TEST(Netdef, EvalIsBatchConsistent) {
  auto m = init_model<double>(tiny_arch(), 1);
  const auto sets = viewsets(tiny_dataset(6, 3));
  const auto all = encode_views(m, to_batch<double>(sets), Mode::Eval);
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const auto one = encode_views(m, to_batch<double>({sets[i]}), Mode::Eval);
    EXPECT_LT((one.mu.col(0) - all.mu.col(Eigen::Index(i))).norm(), 1e-12);
    EXPECT_LT((one.log_var.col(0) - all.log_var.col(Eigen::Index(i))).norm(), 1e-12);
  }
}

TEST(Netdef, MaskedViewContentIsIgnored) {
  auto m = init_model<double>(tiny_arch(), 1);
  auto sets = viewsets(tiny_dataset(4, 3));
  for (auto& s : sets) s.mask = SubsetMask{1, 0};
  auto changed = sets;
  for (auto& s : changed) s.views[1] = {0.9f, 0.1f};
  for (Mode mode : {Mode::Train, Mode::Eval}) {
    const auto a = encode_views(m, to_batch<double>(sets), mode);
    const auto b = encode_views(m, to_batch<double>(changed), mode);
    EXPECT_EQ(a.mu, b.mu);
    EXPECT_EQ(a.log_var, b.log_var);
  }
}

TEST(Netdef, AggregationIsMaskedSum) {
  auto m = init_model<double>(tiny_arch(), 6);
  const auto sets = viewsets(tiny_dataset(5, 7));
  auto with = [&](SubsetMask mask) {
    std::vector<ViewSet> out;
    for (const auto& s : sets) out.push_back(ViewSet{mask, s.views});
    return aggregate(m.H.embed(), to_batch<double>(out));
  };
  const Mat<double> both = with(SubsetMask{1, 1});
  const Mat<double> first = with(SubsetMask{1, 0});
  const Mat<double> second = with(SubsetMask{0, 1});
  EXPECT_LT((both - first - second).norm(), 1e-12);
  EXPECT_EQ(with(SubsetMask{0, 0}).norm(), 0.0);
  // each term is phi_k applied to x_k
  const auto batch = to_batch<double>(sets);
  const Mat<double> phi0 = m.H.embed().phi()[0].forward(batch.views[0], Mode::Eval);
  EXPECT_LT((first - phi0).norm(), 1e-12);
}

TEST(Netdef, ReparameterizedSamplesHaveRequestedMoments) {
  LatentGaussian<double> g;
  g.mu = Vec<double>::Constant(2, 0.3);
  g.log_var = Vec<double>::Constant(2, std::log(0.25));
  Rng rng(11);
  std::normal_distribution<double> n(0, 1);
  const int N = 200000;
  double sum = 0, sq = 0;
  for (int i = 0; i < N; ++i) {
    Vec<double> e(2);
    e << n(rng), n(rng);
    const double x = sample_latent(g, e)(0);
    sum += x;
    sq += x * x;
  }
  const double mean = sum / N, var = sq / N - mean * mean;
  EXPECT_NEAR(mean, 0.3, 0.005);
  EXPECT_NEAR(var, 0.25, 0.005);
}

TEST(Netdef, CastPreservesWeights) {
  auto m = init_model<float>(tiny_arch(), 2);
  auto d = cast_model<double>(m);
  const auto a = flat_params(m);
  const auto b = flat_params(d);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(double(a[i]), b[i]);
}

TEST(Netdef, ConvArchitectureShapes) {
  ArchConfig a = ArchConfig::celeba({ViewKind::Image, ViewKind::Vector}, {64 * 64 * 3, 18});
  a.latent_dim = 8;
  a.conv_channels = {2, 2, 2, 2};
  a.aggregation_dim = 16;
  a.encoder_hidden = {16};
  a.d1_hidden = {16};
  a.d2_hidden = {16};
  auto m = init_model<float>(a, 0);
  Mat<float> z = Mat<float>::Zero(8, 2);
  const Mat<float> y = generate(m, z, Mode::Eval);
  EXPECT_EQ(y.rows(), 64 * 64 * 3);
  EXPECT_EQ(discriminate_pair(m, y, encode_target(m, y, Mode::Eval).mu, Mode::Eval).size(), 2);
}
