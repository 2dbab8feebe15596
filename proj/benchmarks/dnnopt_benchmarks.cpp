#include <benchmark/benchmark.h>

#include "dnnopt/design_space.hpp"
#include "dnnopt/device_world.hpp"
#include "dnnopt/learn_to_optimize.hpp"
#include "dnnopt/mlp.hpp"
#include "dnnopt/search.hpp"
#include "dnnopt/surrogate.hpp"

namespace dnnopt {
namespace {

void BM_MlpForward(benchmark::State& state) {
  Rng rng(1);
  const Mlp net({13, 64, 64, 1}, Activation::kSoftplus, Activation::kIdentity, rng);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(13, state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MlpForward)->Arg(1)->Arg(32)->Arg(512);

void BM_MlpBackward(benchmark::State& state) {
  Rng rng(2);
  const Mlp net({13, 64, 64, 1}, Activation::kSoftplus, Activation::kIdentity, rng);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(13, 32);
  const Eigen::MatrixXd g = Eigen::MatrixXd::Ones(1, 32);
  Mlp::Tape tape;
  for (auto _ : state) {
    net.forward(x, &tape);
    benchmark::DoNotOptimize(net.backward(tape, g));
  }
}
BENCHMARK(BM_MlpBackward);

void BM_OracleLatency(benchmark::State& state) {
  const DesignSpace space = DesignSpace::standard();
  const DeviceFeatures d = DeviceFeatures::default_proxy();
  Rng rng(3);
  const DesignPoint x = sample_uniform(space, rng);
  for (auto _ : state) benchmark::DoNotOptimize(modeled_latency(x, space, d));
}
BENCHMARK(BM_OracleLatency);

void BM_OracleEnergy(benchmark::State& state) {
  const DesignSpace space = DesignSpace::standard();
  const DeviceFeatures d = DeviceFeatures::default_proxy();
  Rng rng(4);
  const DesignPoint x = sample_uniform(space, rng);
  for (auto _ : state) benchmark::DoNotOptimize(modeled_energy(x, space, d));
}
BENCHMARK(BM_OracleEnergy);

void BM_EvolutionarySearchOracle(benchmark::State& state) {
  const DesignSpace space = DesignSpace::standard();
  const DeviceFeatures d = DeviceFeatures::default_proxy();
  const Objective f = [&](const DesignPoint& x) {
    return relaxed_objective_model(x, space, d, {0.0, 0.5}, {1.0, 1.0});
  };
  SearchParams params;
  std::uint64_t seed = 0;
  for (auto _ : state) {
    params.seed = seed++;
    benchmark::DoNotOptimize(evolutionary_search(f, space, params));
  }
}
BENCHMARK(BM_EvolutionarySearchOracle)->Unit(benchmark::kMillisecond);

PerformancePredictors UntrainedShapePredictors(const DesignSpace& space) {
  Rng rng(5);
  const int enc = static_cast<int>(space.dimension());
  const int aware = enc + static_cast<int>(log_features(DeviceFeatures::default_proxy(), space).size());
  auto regressor = [&](int in) {
    return MlpRegressor(Mlp({in, 64, 64, 1}, Activation::kSoftplus, Activation::kIdentity, rng),
                        Eigen::VectorXd::Zero(in), Eigen::VectorXd::Ones(in), 0.0, 1.0,
                        LabelTransform::kLog);
  };
  PerformancePredictors p;
  p.accuracy = regressor(enc);
  p.latency = regressor(aware);
  p.energy = regressor(aware);
  p.device_aware = true;
  return p;
}

void BM_EvolutionarySearchPredicted(benchmark::State& state) {
  const DesignSpace space = DesignSpace::standard();
  const PerformancePredictors p = UntrainedShapePredictors(space);
  const DeviceFeatures d = DeviceFeatures::default_proxy();
  const Objective f = [&](const DesignPoint& x) {
    return predicted_objective(encode(x, space), d, {0.1, 0.1}, p, space);
  };
  SearchParams params;
  std::uint64_t seed = 0;
  for (auto _ : state) {
    params.seed = seed++;
    benchmark::DoNotOptimize(evolutionary_search(f, space, params));
  }
}
BENCHMARK(BM_EvolutionarySearchPredicted)->Unit(benchmark::kMillisecond);

void BM_OptimizerInference(benchmark::State& state) {
  const DesignSpace space = DesignSpace::standard();
  const DeviceFeatures d = DeviceFeatures::default_proxy();
  Rng rng(6);
  const int in = static_cast<int>(log_features(d, space).size()) + 2;
  const OptimizerNetwork net(
      Mlp({in, 64, 64, static_cast<int>(space.dimension())}, Activation::kSoftplus,
          Activation::kLogistic, rng),
      Eigen::VectorXd::Zero(in), Eigen::VectorXd::Ones(in));
  for (auto _ : state) benchmark::DoNotOptimize(infer_design(net, d, {0.1, 0.1}, space));
}
BENCHMARK(BM_OptimizerInference);

}  // namespace
}  // namespace dnnopt

BENCHMARK_MAIN();
