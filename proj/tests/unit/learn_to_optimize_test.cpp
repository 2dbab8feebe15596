#include "dnnopt/learn_to_optimize.hpp"

#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "dnnopt/error.hpp"

namespace dnnopt {
namespace {

class LearnToOptimizeTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    space_ = new DesignSpace(DesignSpace::reduced());
    Rng rng(1);
    FleetConfig config;
    devices_ = new std::vector<DeviceFeatures>();
    for (int i = 0; i < 8; ++i) {
      devices_->push_back(sample_heterogeneous(config, *space_, "d" + std::to_string(i), rng));
    }
    MeasurementLedger ledger;
    PredictorSettings settings;
    settings.hidden_layers = {32, 32};
    settings.training.epochs = 150;
    settings.training.optimizer = OptimizerKind::kAdam;
    settings.training.learning_rate = 3e-3;
    auto state = train_device_aware_set(*space_, *devices_, 128, rng, ledger, settings);
    predictors_ = new PerformancePredictors(std::move(state.predictors));
  }
  static void TearDownTestSuite() {
    delete predictors_;
    delete devices_;
    delete space_;
  }

  static DesignPoint PredictedArgmin(const DeviceFeatures& d, const TradeoffWeights& w) {
    return brute_force_argmin(
               [&](const DesignPoint& x) {
                 return predicted_objective(encode(x, *space_), d, w, *predictors_, *space_);
               },
               *space_, 1000)
        .best;
  }

  static OptimizerNetwork SmallNetwork(const OptimizerTrainingSet& set, std::uint64_t seed) {
    Rng rng(seed);
    return init_optimizer_network(*space_, set, {6, 5}, rng);
  }

  static DesignSpace* space_;
  static std::vector<DeviceFeatures>* devices_;
  static PerformancePredictors* predictors_;
};

DesignSpace* LearnToOptimizeTest::space_ = nullptr;
std::vector<DeviceFeatures>* LearnToOptimizeTest::devices_ = nullptr;
PerformancePredictors* LearnToOptimizeTest::predictors_ = nullptr;

TEST(LambdaGridTest, DecadesCrossedWithThemselves) {
  const auto g = build_lambda_grid(4, 1.0);
  ASSERT_EQ(g.size(), 16u);
  EXPECT_EQ(g[0], (TradeoffWeights{0.0, 0.0}));
  EXPECT_DOUBLE_EQ(g[1].lambda2, 0.01);
  EXPECT_DOUBLE_EQ(g[2].lambda2, 0.1);
  EXPECT_DOUBLE_EQ(g[3].lambda2, 1.0);
  EXPECT_DOUBLE_EQ(g[15].lambda1, 1.0);
  EXPECT_EQ(build_lambda_grid(1, 0.0), (std::vector<TradeoffWeights>{{0.0, 0.0}}));
  EXPECT_THROW(build_lambda_grid(0, 1.0), Error);
  EXPECT_THROW(build_lambda_grid(3, -1.0), Error);
}

TEST(OptimizerNetworkTest, RawInputLayout) {
  const DesignSpace s = DesignSpace::reduced();
  const DeviceFeatures d = DeviceFeatures::default_proxy();
  const auto f = log_features(d, s);
  const Eigen::VectorXd in = OptimizerNetwork::raw_input(d, {0.5, 0.0}, s);
  ASSERT_EQ(in.size(), static_cast<Eigen::Index>(f.size() + 2));
  for (std::size_t i = 0; i < f.size(); ++i) EXPECT_DOUBLE_EQ(in(i), f[i]);
  EXPECT_DOUBLE_EQ(in(f.size()), std::log(0.5 + OptimizerNetwork::kLambdaOffset));
  EXPECT_DOUBLE_EQ(in(f.size() + 1), std::log(OptimizerNetwork::kLambdaOffset));
}

TEST(OptimizerNetworkTest, RequiresLogisticOutput) {
  Rng rng(1);
  Mlp linear({3, 2}, Activation::kSoftplus, Activation::kIdentity, rng);
  EXPECT_THROW(OptimizerNetwork(linear, Eigen::VectorXd::Zero(3), Eigen::VectorXd::Ones(3)), Error);
  const OptimizerNetwork untrained;
  EXPECT_FALSE(untrained.trained());
}

TEST_F(LearnToOptimizeTest, OutputsLieInUnitCube) {
  const auto set = make_training_inputs(*devices_, build_lambda_grid(3, 1.0));
  EXPECT_EQ(set.inputs.size(), devices_->size() * 9);
  EXPECT_EQ(set.inputs[1].device.id, devices_->front().id);
  const OptimizerNetwork net = SmallNetwork(set, 2);
  const OptimizerBatch b = make_batch(*space_, set);
  const Eigen::MatrixXd out = net.forward(b.raw_inputs);
  EXPECT_EQ(out.rows(), static_cast<Eigen::Index>(space_->dimension()));
  EXPECT_GT(out.minCoeff(), 0.0);
  EXPECT_LT(out.maxCoeff(), 1.0);
}

void ExpectGradientMatches(OptimizerNetwork net, const std::function<double(const OptimizerNetwork&,
                                                                            Mlp::Gradients*)>& loss) {
  Mlp::Gradients g;
  loss(net, &g);
  const std::vector<double> analytic = Mlp::flatten(g);
  std::vector<double> theta = net.network().parameters();
  ASSERT_EQ(analytic.size(), theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double keep = theta[i];
    theta[i] = keep + 1e-6;
    net.network().set_parameters(theta);
    const double up = loss(net, nullptr);
    theta[i] = keep - 1e-6;
    net.network().set_parameters(theta);
    const double down = loss(net, nullptr);
    theta[i] = keep;
    net.network().set_parameters(theta);
    EXPECT_NEAR(analytic[i], (up - down) / 2e-6, 1e-6) << "parameter " << i;
  }
}

TEST_F(LearnToOptimizeTest, Method1GradientMatchesFiniteDifferences) {
  auto set = make_training_inputs(std::span(*devices_).first(2), build_lambda_grid(2, 1.0));
  Rng rng(3);
  std::vector<Encoding> labels;
  for (std::size_t i = 0; i < set.inputs.size(); ++i) labels.push_back(encode(sample_uniform(*space_, rng), *space_));
  set.labels = labels;
  const OptimizerBatch b = make_batch(*space_, set);
  ExpectGradientMatches(SmallNetwork(set, 3), [&](const OptimizerNetwork& n, Mlp::Gradients* g) {
    return method1_loss(n, b, 0.01, g);
  });
}

TEST_F(LearnToOptimizeTest, Method2GradientMatchesFiniteDifferences) {
  const auto set = make_training_inputs(std::span(*devices_).first(2), build_lambda_grid(2, 1.0));
  const OptimizerBatch b = make_batch(*space_, set);
  ExpectGradientMatches(SmallNetwork(set, 4), [&](const OptimizerNetwork& n, Mlp::Gradients* g) {
    return method2_loss(n, b, *predictors_, 0.01, g);
  });
}

TEST_F(LearnToOptimizeTest, Method2LossEqualsMeanPredictedObjective) {
  const auto set = make_training_inputs(std::span(*devices_).first(3), build_lambda_grid(2, 1.0));
  const OptimizerBatch b = make_batch(*space_, set);
  const OptimizerNetwork net = SmallNetwork(set, 5);
  const Eigen::MatrixXd out = net.forward(b.raw_inputs);
  double sum = 0.0;
  for (std::size_t i = 0; i < set.inputs.size(); ++i) {
    const auto col = out.col(static_cast<Eigen::Index>(i));
    const std::vector<double> e(col.data(), col.data() + col.size());
    sum += predicted_objective(e, set.inputs[i].device, set.inputs[i].lambda, *predictors_, *space_);
  }
  EXPECT_NEAR(method2_loss(net, b, *predictors_, 0.0), sum / static_cast<double>(set.inputs.size()),
              1e-10);
  EXPECT_NEAR(method2_loss(net, b, *predictors_, 0.5) - method2_loss(net, b, *predictors_, 0.0),
              0.5 * net.network().squared_norm(), 1e-10);
}

TEST_F(LearnToOptimizeTest, Method1MemorizesWithoutRegularization) {
  auto set = make_training_inputs(std::span(*devices_).first(2), build_lambda_grid(2, 1.0));
  Rng rng(6);
  std::vector<Encoding> labels;
  for (std::size_t i = 0; i < set.inputs.size(); ++i) {
    labels.push_back(encode(sample_uniform(*space_, rng), *space_));
  }
  set.labels = labels;
  OptimizerSettings s;
  s.hidden_layers = {32, 32};
  s.mu = 0.0;
  s.training.epochs = 3000;
  s.training.learning_rate = 1e-2;
  s.training.batch_size = 8;
  const auto r = train_method1(*space_, set, s, rng);
  for (std::size_t i = 0; i < set.inputs.size(); ++i) {
    EXPECT_EQ(decode(r.network.infer_encoding(set.inputs[i].device, set.inputs[i].lambda, *space_), *space_),
              decode(labels[i], *space_));
  }
  EXPECT_LT(r.final_loss, 0.01);
}

TEST_F(LearnToOptimizeTest, RegularizationShrinksWeights) {
  const auto set = make_training_inputs(std::span(*devices_).first(4), build_lambda_grid(3, 1.0));
  OptimizerSettings s;
  s.hidden_layers = {16};
  s.training.epochs = 150;
  s.training.learning_rate = 1e-2;
  Rng a(7), b(7);
  s.mu = 0.0;
  const double free = train_method2(*space_, set, *predictors_, s, a).network.network().squared_norm();
  s.mu = 0.05;
  const double reg = train_method2(*space_, set, *predictors_, s, b).network.network().squared_norm();
  EXPECT_LT(reg, free);
}

TEST_F(LearnToOptimizeTest, Method2LeavesPredictorsUntouched) {
  const auto before = std::make_tuple(predictors_->accuracy.fingerprint(),
                                      predictors_->latency.fingerprint(),
                                      predictors_->energy.fingerprint());
  const auto set = make_training_inputs(*devices_, build_lambda_grid(3, 1.0));
  OptimizerSettings s;
  s.hidden_layers = {16};
  s.training.epochs = 20;
  Rng rng(8);
  train_method2(*space_, set, *predictors_, s, rng);
  EXPECT_EQ(before, std::make_tuple(predictors_->accuracy.fingerprint(),
                                    predictors_->latency.fingerprint(),
                                    predictors_->energy.fingerprint()));
}

TEST_F(LearnToOptimizeTest, SameSeedSameNetwork) {
  const auto set = make_training_inputs(std::span(*devices_).first(3), build_lambda_grid(2, 1.0));
  OptimizerSettings s;
  s.hidden_layers = {8};
  s.training.epochs = 10;
  Rng a(9), b(9);
  EXPECT_TRUE(train_method2(*space_, set, *predictors_, s, a).network ==
              train_method2(*space_, set, *predictors_, s, b).network);
}

TEST_F(LearnToOptimizeTest, Method1ReproducesHeldInLabels) {
  const auto lambdas = build_lambda_grid(3, 1.0);
  const auto set = generate_labels_method1(
      *space_, *devices_, lambdas, *predictors_,
      [&](const Objective& f, std::size_t) { return brute_force_argmin(f, *space_, 1000); });
  ASSERT_TRUE(set.labels.has_value());
  for (std::size_t i = 0; i < set.inputs.size(); i += 7) {
    EXPECT_EQ(decode((*set.labels)[i], *space_),
              PredictedArgmin(set.inputs[i].device, set.inputs[i].lambda));
  }
  OptimizerSettings s;
  s.training.epochs = 800;
  s.training.learning_rate = 3e-3;
  s.mu = 1e-6;
  Rng rng(10);
  const auto r = train_method1(*space_, set, s, rng);
  int hits = 0;
  for (std::size_t i = 0; i < set.inputs.size(); ++i) {
    hits += infer_design(r.network, set.inputs[i].device, set.inputs[i].lambda, *space_) ==
            decode((*set.labels)[i], *space_);
  }
  EXPECT_GE(hits, static_cast<int>(0.8 * set.inputs.size()));
}

TEST_F(LearnToOptimizeTest, Method2ApproachesPredictedOptimum) {
  const auto lambdas = build_lambda_grid(3, 1.0);
  const auto set = make_training_inputs(*devices_, lambdas);
  OptimizerSettings s;
  s.training.epochs = 500;
  s.training.batch_size = 8;
  Rng rng(11);
  const auto r = train_method2(*space_, set, *predictors_, s, rng);
  EXPECT_LT(r.loss_curve.back(), r.loss_curve.front());
  std::vector<double> gaps;
  for (const auto& [d, w] : set.inputs) {
    auto f = [&](const DesignPoint& x) {
      return predicted_objective(encode(x, *space_), d, w, *predictors_, *space_);
    };
    const double best = f(PredictedArgmin(d, w));
    gaps.push_back((f(infer_design(r.network, d, w, *space_)) - best) / std::abs(best));
  }
  EXPECT_LE(median(gaps), 0.05);
}

TEST_F(LearnToOptimizeTest, SweepValidatesChosenDesignWithTwoMeasurements) {
  const auto set = make_training_inputs(*devices_, build_lambda_grid(3, 1.0));
  OptimizerSettings s;
  s.hidden_layers = {16};
  s.training.epochs = 30;
  Rng rng(12);
  const auto r = train_method2(*space_, set, *predictors_, s, rng);
  const DeviceFeatures target = sample_heterogeneous(FleetConfig{}, *space_, "target", rng);
  ConstraintSpec c;
  c.latency_bound = modeled_latency(space_->all_max(), *space_, target);
  const auto lambdas = build_lambda_grid(4, 1.0);
  MeasurementLedger ledger;
  const auto sweep = constraint_sweep(r.network, *space_, target, c, *predictors_, lambdas, ledger);
  EXPECT_EQ(sweep.forward_passes, static_cast<int>(lambdas.size()));
  EXPECT_EQ(sweep.rows.size(), lambdas.size());
  EXPECT_EQ(sweep.validation_measurements, 2);
  EXPECT_EQ(ledger.count("target", Metric::kLatency), 1u);
  EXPECT_EQ(ledger.count("target", Metric::kEnergy), 1u);
  EXPECT_EQ(ledger.accuracy_count(), 0u);
  EXPECT_DOUBLE_EQ(sweep.oracle_latency, modeled_latency(sweep.design, *space_, target));
  int chosen = 0;
  for (const auto& row : sweep.rows) chosen += row.chosen;
  EXPECT_EQ(chosen, 1);
}

TEST_F(LearnToOptimizeTest, SweepWithoutBoundsUsesZeroLambda) {
  const auto set = make_training_inputs(*devices_, build_lambda_grid(2, 1.0));
  OptimizerSettings s;
  s.hidden_layers = {8};
  s.training.epochs = 5;
  Rng rng(13);
  const auto r = train_method2(*space_, set, *predictors_, s, rng);
  MeasurementLedger ledger;
  const auto lambdas = build_lambda_grid(4, 1.0);
  const auto sweep =
      constraint_sweep(r.network, *space_, devices_->front(), {}, *predictors_, lambdas, ledger);
  ASSERT_EQ(sweep.rows.size(), 1u);
  EXPECT_EQ(sweep.lambda, (TradeoffWeights{0.0, 0.0}));
  EXPECT_EQ(sweep.design, infer_design(r.network, devices_->front(), {0.0, 0.0}, *space_));
}

TEST_F(LearnToOptimizeTest, FineTuneNeverWorsensPredictedObjective) {
  Rng rng(14);
  const TradeoffWeights w{0.1, 0.3};
  const DeviceFeatures& d = devices_->front();
  auto f = [&](const DesignPoint& x) {
    return predicted_objective(encode(x, *space_), d, w, *predictors_, *space_);
  };
  for (int i = 0; i < 10; ++i) {
    const DesignPoint seed = sample_uniform(*space_, rng);
    EXPECT_EQ(fine_tune(seed, *space_, d, w, *predictors_, 0, 100), seed);
    const DesignPoint tuned = fine_tune(seed, *space_, d, w, *predictors_, 2, 512);
    EXPECT_LE(f(tuned), f(seed));
  }
  // Radius covering the whole space reaches the predicted optimum.
  const DesignPoint full =
      fine_tune(space_->all_min(), *space_, d, w, *predictors_, static_cast<int>(space_->dimension()), 1000);
  EXPECT_EQ(full, PredictedArgmin(d, w));
}

}  // namespace
}  // namespace dnnopt
