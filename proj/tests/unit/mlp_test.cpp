#include "dnnopt/mlp.hpp"

#include <cmath>

#include <gtest/gtest.h>

#include "dnnopt/error.hpp"

namespace dnnopt {
namespace {

double SumLoss(const Mlp& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& w) {
  return (net.forward(x).array() * w.array()).sum();
}

class MlpGradientTest : public ::testing::TestWithParam<Activation> {};

TEST_P(MlpGradientTest, ParameterAndInputGradientsMatchFiniteDifferences) {
  Rng rng(11);
  Mlp net({3, 5, 4, 2}, Activation::kSoftplus, GetParam(), rng);
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(3, 6);
  const Eigen::MatrixXd w = Eigen::MatrixXd::Random(2, 6);

  Mlp::Tape tape;
  net.forward(x, &tape);
  const Mlp::Gradients g = net.backward(tape, w);
  const std::vector<double> analytic = Mlp::flatten(g);

  std::vector<double> theta = net.parameters();
  ASSERT_EQ(analytic.size(), theta.size());
  const double h = 1e-6;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double keep = theta[i];
    theta[i] = keep + h;
    net.set_parameters(theta);
    const double up = SumLoss(net, x, w);
    theta[i] = keep - h;
    net.set_parameters(theta);
    const double down = SumLoss(net, x, w);
    theta[i] = keep;
    net.set_parameters(theta);
    EXPECT_NEAR(analytic[i], (up - down) / (2 * h), 1e-6) << "parameter " << i;
  }
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      const double keep = x(r, c);
      x(r, c) = keep + h;
      const double up = SumLoss(net, x, w);
      x(r, c) = keep - h;
      const double down = SumLoss(net, x, w);
      x(r, c) = keep;
      EXPECT_NEAR(g.input(r, c), (up - down) / (2 * h), 1e-6);
    }
  }
}

INSTANTIATE_TEST_SUITE_P(OutputActivations, MlpGradientTest,
                         ::testing::Values(Activation::kIdentity, Activation::kLogistic));

TEST(MlpTest, UntrainedNetworkRefusesToEvaluate) {
  const Mlp net;
  EXPECT_TRUE(net.empty());
  try {
    net.forward(Eigen::MatrixXd::Zero(1, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUntrainedModel);
  }
}

TEST(MlpTest, WrongInputWidthThrows) {
  Rng rng(1);
  const Mlp net({3, 4, 1}, Activation::kSoftplus, Activation::kIdentity, rng);
  EXPECT_THROW(net.forward(Eigen::MatrixXd::Zero(2, 1)), Error);
}

TEST(MlpTest, ZerosNetworkOutputs) {
  const Mlp lin = Mlp::zeros({3, 4, 2}, Activation::kSoftplus, Activation::kIdentity);
  EXPECT_TRUE(lin.forward(Eigen::MatrixXd::Random(3, 5)).isZero());
  const Mlp logi = Mlp::zeros({3, 2}, Activation::kSoftplus, Activation::kLogistic);
  EXPECT_TRUE(logi.forward(Eigen::MatrixXd::Random(3, 5)).isConstant(0.5));
}

TEST(MlpTest, ParameterRoundTripAndCount) {
  Rng rng(2);
  Mlp net({3, 5, 2}, Activation::kSoftplus, Activation::kIdentity, rng);
  EXPECT_EQ(net.parameter_count(), 3u * 5 + 5 + 5 * 2 + 2);
  const std::vector<double> theta = net.parameters();
  Mlp other = Mlp::zeros({3, 5, 2}, Activation::kSoftplus, Activation::kIdentity);
  other.set_parameters(theta);
  EXPECT_TRUE(net == other);
  double sq = 0.0;
  for (double v : theta) sq += v * v;
  EXPECT_NEAR(net.squared_norm(), sq, 1e-12);
  EXPECT_THROW(other.set_parameters(std::vector<double>(3)), Error);
}

TEST(MlpTest, SingleLinearLayerComputesAffineMap) {
  Mlp net = Mlp::zeros({2, 1}, Activation::kSoftplus, Activation::kIdentity);
  net.set_parameters(std::vector<double>{2.0, -3.0, 0.5});
  Eigen::MatrixXd x(2, 2);
  x << 1.0, 0.0, 1.0, 2.0;
  const Eigen::MatrixXd y = net.forward(x);
  EXPECT_DOUBLE_EQ(y(0, 0), -0.5);
  EXPECT_DOUBLE_EQ(y(0, 1), -5.5);
}

TEST(MlpTest, SameSeedSameInitialization) {
  Rng a(3), b(3);
  const Mlp x({4, 8, 1}, Activation::kSoftplus, Activation::kIdentity, a);
  const Mlp y({4, 8, 1}, Activation::kSoftplus, Activation::kIdentity, b);
  EXPECT_TRUE(x == y);
}

TEST(MlpTest, ActivationNamesRoundTrip) {
  for (Activation a : {Activation::kIdentity, Activation::kSoftplus, Activation::kLogistic}) {
    EXPECT_EQ(activation_from_string(to_string(a)), a);
  }
  EXPECT_THROW(activation_from_string("relu6"), Error);
}

class UpdaterTest : public ::testing::TestWithParam<OptimizerKind> {};

TEST_P(UpdaterTest, DescendsAQuadratic) {
  Mlp net = Mlp::zeros({1, 1}, Activation::kSoftplus, Activation::kIdentity);
  net.set_parameters(std::vector<double>{3.0, -2.0});
  TrainingSettings s;
  s.optimizer = GetParam();
  s.learning_rate = 0.05;
  ParameterUpdater updater(net, s);
  for (int i = 0; i < 2000; ++i) {
    Mlp::Gradients g;
    g.weights = {2.0 * net.weights()[0]};
    g.biases = {2.0 * net.biases()[0]};
    updater.step(net, g);
  }
  EXPECT_LT(net.squared_norm(), 1e-4);
}

INSTANTIATE_TEST_SUITE_P(Kinds, UpdaterTest,
                         ::testing::Values(OptimizerKind::kMomentum, OptimizerKind::kAdam));

}  // namespace
}  // namespace dnnopt
