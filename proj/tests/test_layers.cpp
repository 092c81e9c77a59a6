#include <gtest/gtest.h>

#include "helpers.hpp"
#include "mvbigan/layers.hpp"

using namespace mvbigan;
using mvbigan::testing::numeric_grad;
using mvbigan::testing::rel_error;

namespace {

Mat<double> random_mat(Eigen::Index r, Eigen::Index c, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Mat<double> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

// Loss = sum(R .* stack(x)); checks input and parameter gradients.
void check_stack(Stack<double>& s, Eigen::Index batch, std::uint64_t seed, double tol = 1e-6) {
  Rng rng(seed);
  s.initialize(rng);
  Mat<double> x = random_mat(s.input_size(), batch, rng);
  const Mat<double> y0 = s.forward(x, Mode::Train);
  const Mat<double> R = random_mat(y0.rows(), y0.cols(), rng);
  auto f = [&] { return s.forward(x, Mode::Train).cwiseProduct(R).sum(); };

  StackTape<double> tape;
  s.forward(x, Mode::Train, &tape);
  s.for_each_param([](Param<double>& p) { p.zero_grad(); });
  const Mat<double> dx = s.backward(R, tape);

  EXPECT_LE(rel_error(dx, numeric_grad<double>(x, f)), tol) << s.name() << " input";
  s.for_each_param([&](Param<double>& p) {
    const Mat<double> num = numeric_grad<double>(p.value, f);
    // biases in front of batch norm have zero gradient; compare absolutely
    if ((p.grad - num).norm() > 1e-9) EXPECT_LE(rel_error(p.grad, num), tol) << p.name;
  });
}

}  // namespace

TEST(Layers, DenseActivationsGradients) {
  for (Activation a : {Activation::Identity, Activation::LeakyRelu, Activation::Sigmoid,
                       Activation::Tanh}) {
    Stack<double> s("dense");
    s.dense(5, 4).act(a, 0.2).dense(4, 3);
    check_stack(s, 6, 1);
  }
}

TEST(Layers, BatchNormGradients) {
  Stack<double> s("bn");
  s.dense(4, 5).batchnorm(5).act(Activation::Tanh).dense(5, 2);
  check_stack(s, 7, 2);
}

TEST(Layers, ConvGradients) {
  Stack<double> s("conv");
  ConvShape c{2, 3, 4, 2, 1, 8, false};
  s.conv(c).batchnorm(3, 16).act(Activation::LeakyRelu);
  EXPECT_EQ(c.out_size(), 4);
  EXPECT_EQ(s.output_size(), 3 * 16);
  check_stack(s, 3, 3);
}

TEST(Layers, TransposedConvGradients) {
  Stack<double> s("deconv");
  ConvShape c{3, 2, 4, 2, 1, 4, true};
  s.conv(c).act(Activation::Sigmoid);
  EXPECT_EQ(c.out_size(), 8);
  check_stack(s, 3, 4);
}

TEST(Layers, ConvShapesDoubleAndHalve) {
  int size = 64;
  for (int i = 0; i < 4; ++i) {
    ConvShape c{3, 8, 4, 2, 1, size, false};
    size = c.out_size();
  }
  EXPECT_EQ(size, 4);
  for (int i = 0; i < 4; ++i) {
    ConvShape c{8, 3, 4, 2, 1, size, true};
    size = c.out_size();
  }
  EXPECT_EQ(size, 64);
}

TEST(Layers, BatchNormTrainNormalizesAndEvalUsesRunningStats) {
  Stack<double> s("bn");
  s.batchnorm(3);
  Rng rng(9);
  s.initialize(rng);
  Mat<double> x = random_mat(3, 50, rng).array() * 4.0 + 2.0;
  StackTape<double> tape;
  const Mat<double> y = s.forward(x, Mode::Train, &tape);
  EXPECT_LT(y.rowwise().mean().cwiseAbs().maxCoeff(), 1e-12);
  // running stats start at (0,1): eval is the identity up to eps
  EXPECT_LT((s.forward(x, Mode::Eval) - x / std::sqrt(1 + kBatchNormEps)).norm(), 1e-9);
  s.update_running_stats(tape);
  const auto& bn = std::get<BatchNormLayer<double>>(s.layers()[0]);
  const Vec<double> mean = x.rowwise().mean();
  EXPECT_LT((bn.running_mean.value - (1 - kBatchNormMomentum) * mean).norm(), 1e-12);
}

TEST(Layers, ForwardIsPure) {
  Stack<double> s("p");
  s.dense(3, 4).batchnorm(4).act(Activation::Relu);
  Rng rng(1);
  s.initialize(rng);
  const Mat<double> x = random_mat(3, 5, rng);
  EXPECT_EQ(s.forward(x, Mode::Train), s.forward(x, Mode::Train));
  EXPECT_EQ(s.forward(x, Mode::Eval), s.forward(x, Mode::Eval));
}
