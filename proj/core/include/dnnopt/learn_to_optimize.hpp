#pragma once

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "dnnopt/search.hpp"
#include "dnnopt/surrogate.hpp"

namespace dnnopt {

// Axis {0} plus `count - 1` decades ending at `max_lambda`, crossed with itself.
// count 4, max 1 gives axes {0, 0.01, 0.1, 1}.
std::vector<TradeoffWeights> build_lambda_grid(int count_per_axis, double max_lambda);

// Maps (device, tradeoff weights) to a design encoding in [0,1]^dim. The raw
// input is log_features(device) followed by log(lambda + kLambdaOffset) for
// each weight; it is z-scored with constants fitted on the training inputs.
class OptimizerNetwork {
 public:
  static constexpr double kLambdaOffset = 1e-3;

  OptimizerNetwork() = default;
  OptimizerNetwork(Mlp net, Eigen::VectorXd input_mean, Eigen::VectorXd input_scale);

  bool trained() const noexcept { return !net_.empty(); }

  static Eigen::VectorXd raw_input(const DeviceFeatures& d, const TradeoffWeights& lambda,
                                   const DesignSpace& space);

  // One raw input per column; returns one encoding per column.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& raw_inputs, Mlp::Tape* tape = nullptr) const;
  Encoding infer_encoding(const DeviceFeatures& d, const TradeoffWeights& lambda,
                          const DesignSpace& space) const;

  const Mlp& network() const noexcept { return net_; }
  Mlp& network() noexcept { return net_; }
  const Eigen::VectorXd& input_mean() const noexcept { return in_mean_; }
  const Eigen::VectorXd& input_scale() const noexcept { return in_scale_; }

  friend bool operator==(const OptimizerNetwork&, const OptimizerNetwork&) = default;

 private:
  Mlp net_;
  Eigen::VectorXd in_mean_;
  Eigen::VectorXd in_scale_;
};

struct OptimizerSample {
  DeviceFeatures device;
  TradeoffWeights lambda;
};

struct OptimizerTrainingSet {
  std::vector<OptimizerSample> inputs;
  std::optional<std::vector<Encoding>> labels;  // Method 1 only, aligned with inputs
};

// Cross product devices x lambdas, device-major.
OptimizerTrainingSet make_training_inputs(std::span<const DeviceFeatures> devices,
                                          std::span<const TradeoffWeights> lambdas);

// Labels each (device, lambda) pair with the minimizer of the predicted
// objective. Uses only predictors. `inner` defaults to evolutionary search
// with `params` (seed offset by the pair index).
OptimizerTrainingSet generate_labels_method1(const DesignSpace& space,
                                             std::span<const DeviceFeatures> devices,
                                             std::span<const TradeoffWeights> lambdas,
                                             const PerformancePredictors& p,
                                             const SearchParams& params);
OptimizerTrainingSet generate_labels_method1(const DesignSpace& space,
                                             std::span<const DeviceFeatures> devices,
                                             std::span<const TradeoffWeights> lambdas,
                                             const PerformancePredictors& p,
                                             const std::function<SearchResult(const Objective&, std::size_t)>& inner);

struct OptimizerSettings {
  std::vector<int> hidden_layers{64, 64};
  TrainingSettings training{.epochs = 400, .batch_size = 32, .learning_rate = 1e-3,
                            .momentum = 0.9, .optimizer = OptimizerKind::kAdam};
  double mu = 1e-4;  // weight on the squared L2 norm of all parameters
};

struct OptimizerFitResult {
  OptimizerNetwork network;
  double final_loss = 0.0;  // full-batch loss including the regularizer
  std::vector<double> loss_curve;
};

// Column-stacked training batch.
struct OptimizerBatch {
  Eigen::MatrixXd raw_inputs;       // optimizer-network inputs
  Eigen::MatrixXd device_features;  // log_features per sample
  Eigen::MatrixXd lambdas;          // 2 x n
  Eigen::MatrixXd labels;           // dim x n, Method 1 only
};
OptimizerBatch make_batch(const DesignSpace& space, const OptimizerTrainingSet& set);

// (1/N) sum |x_hat - x*|^2 + mu |Theta|^2, with its parameter gradient.
double method1_loss(const OptimizerNetwork& net, const OptimizerBatch& batch, double mu,
                    Mlp::Gradients* grads = nullptr);
// (1/N) sum f_hat(x_hat(d, lambda); d, lambda) + mu |Theta|^2 through frozen
// predictors, with its parameter gradient.
double method2_loss(const OptimizerNetwork& net, const OptimizerBatch& batch,
                    const PerformancePredictors& p, double mu, Mlp::Gradients* grads = nullptr);

// Fresh network with input normalizer fitted on `set`.
OptimizerNetwork init_optimizer_network(const DesignSpace& space, const OptimizerTrainingSet& set,
                                        const std::vector<int>& hidden_layers, Rng& rng);

OptimizerFitResult train_method1(const DesignSpace& space, const OptimizerTrainingSet& set,
                                 const OptimizerSettings& settings, Rng& rng);
// Predictors are taken by const reference and never modified.
OptimizerFitResult train_method2(const DesignSpace& space, const OptimizerTrainingSet& set,
                                 const PerformancePredictors& p, const OptimizerSettings& settings,
                                 Rng& rng);

DesignPoint infer_design(const OptimizerNetwork& net, const DeviceFeatures& d,
                         const TradeoffWeights& lambda, const DesignSpace& space);

struct SweepRow {
  TradeoffWeights lambda;
  DesignPoint design;
  bool predicted_feasible = false;
  double predicted_accuracy = 0.0;
  double predicted_latency = 0.0;
  double predicted_energy = 0.0;
  bool chosen = false;
};

struct SweepResult {
  DesignPoint design;
  TradeoffWeights lambda;
  bool predicted_feasible = false;
  double oracle_latency = 0.0;
  double oracle_energy = 0.0;
  bool oracle_feasible = false;
  int validation_measurements = 0;
  int forward_passes = 0;
  std::vector<SweepRow> rows;
};

struct SweepOptions {
  int fine_tune_radius = 0;  // 0 disables local refinement
  std::size_t fine_tune_budget = 512;
};

// Runs the network once per lambda, judges feasibility with the device-aware
// predictors, and returns the highest predicted-accuracy feasible design (or
// the least-violating one). The chosen design is validated on the oracle with
// one latency and one energy measurement. Without active bounds the
// lambda = (0,0) inference is returned. With a fine-tune radius each
// inferred design is refined with fine_tune before it is judged.
SweepResult constraint_sweep(const OptimizerNetwork& net, const DesignSpace& space,
                             const DeviceFeatures& d, const ConstraintSpec& constraints,
                             const PerformancePredictors& p,
                             std::span<const TradeoffWeights> lambdas, MeasurementLedger& ledger,
                             const SweepOptions& options = {});

// Best predicted objective within Hamming distance `radius` of `seed`,
// examining at most `budget` designs (the seed always included).
DesignPoint fine_tune(const DesignPoint& seed, const DesignSpace& space, const DeviceFeatures& d,
                      const TradeoffWeights& lambda, const PerformancePredictors& p, int radius,
                      std::size_t budget);

}  // namespace dnnopt
