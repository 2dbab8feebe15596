#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dnnopt/design_space.hpp"
#include "dnnopt/device_world.hpp"
#include "dnnopt/mlp.hpp"

namespace dnnopt {

struct TrainingSample {
  std::vector<double> input;
  double label = 0.0;
};

// kLog regresses log(label) and exponentiates on the way out; used for the
// strictly positive cost metrics, whose range spans orders of magnitude.
enum class LabelTransform { kIdentity, kLog };

const char* to_string(LabelTransform t);
LabelTransform label_transform_from_string(const std::string& name);

// Scalar regressor: z-scored inputs -> softplus hidden layers -> linear output
// -> de-normalized (and, for kLog, exponentiated) label.
class MlpRegressor {
 public:
  MlpRegressor() = default;
  MlpRegressor(Mlp net, Eigen::VectorXd input_mean, Eigen::VectorXd input_scale,
               double output_mean, double output_scale,
               LabelTransform transform = LabelTransform::kIdentity);

  bool trained() const noexcept { return !net_.empty(); }
  int input_size() const { return net_.input_size(); }

  double predict(std::span<const double> input) const;
  // One sample per column.
  Eigen::VectorXd predict_batch(const Eigen::MatrixXd& inputs) const;
  std::vector<double> gradient_wrt_input(std::span<const double> input) const;
  // Column j holds coefficients(j) * d predict / d input at sample j.
  Eigen::MatrixXd weighted_input_gradients(const Eigen::MatrixXd& inputs,
                                           const Eigen::VectorXd& coefficients) const;

  const Mlp& network() const noexcept { return net_; }
  Mlp& network() noexcept { return net_; }
  const Eigen::VectorXd& input_mean() const noexcept { return in_mean_; }
  const Eigen::VectorXd& input_scale() const noexcept { return in_scale_; }
  double output_mean() const noexcept { return out_mean_; }
  double output_scale() const noexcept { return out_scale_; }
  LabelTransform label_transform() const noexcept { return transform_; }

  // FNV-1a over the bit patterns of every parameter and normalizer constant.
  std::uint64_t fingerprint() const;

  friend bool operator==(const MlpRegressor&, const MlpRegressor&) = default;

 private:
  Eigen::MatrixXd normalize(const Eigen::MatrixXd& inputs) const;
  void require_trained() const;

  Mlp net_;
  Eigen::VectorXd in_mean_;
  Eigen::VectorXd in_scale_;
  double out_mean_ = 0.0;
  double out_scale_ = 1.0;
  LabelTransform transform_ = LabelTransform::kIdentity;
};

struct FitResult {
  MlpRegressor model;
  double final_loss = 0.0;  // mean squared error in label units, full batch
  bool degenerate = false;  // zero-variance labels: constant predictor
  std::vector<double> loss_curve;  // per-epoch MSE in normalized units
};

struct FitOptions {
  LabelTransform label_transform = LabelTransform::kIdentity;
  // Seeds the weights only; normalizers are always refit from the samples.
  const MlpRegressor* warm_start = nullptr;
};

// Mean-squared-error regression (on transformed labels) by mini-batch
// first-order descent.
FitResult fit(std::span<const TrainingSample> samples, const std::vector<int>& hidden_layers,
              const TrainingSettings& settings, Rng& rng, const FitOptions& options = {});

struct TradeoffWeights {
  double lambda1 = 0.0;  // energy
  double lambda2 = 0.0;  // latency
  void validate() const;
  friend bool operator==(const TradeoffWeights&, const TradeoffWeights&) = default;
};

// Divisors that make latency and energy dimensionless inside objectives.
struct ObjectiveScale {
  double latency = 1.0;
  double energy = 1.0;
};

// Accuracy, latency and energy predictors evaluated together. Latency/energy
// inputs are the design encoding, followed by the device log-features when
// `device_aware` is set.
struct PerformancePredictors {
  MlpRegressor accuracy;
  MlpRegressor latency;
  MlpRegressor energy;
  bool device_aware = false;
  std::string device_id;  // device-specific predictors only
  ObjectiveScale scale;

  bool trained() const noexcept {
    return accuracy.trained() && latency.trained() && energy.trained();
  }
};

std::vector<double> predictor_input(std::span<const double> encoding, const DeviceFeatures* device,
                                    const DesignSpace& space);

double predict_metric(const PerformancePredictors& p, Metric metric,
                      std::span<const double> encoding, const DeviceFeatures& device,
                      const DesignSpace& space);

// -Acc + lambda1 * Energy / scale.energy + lambda2 * Latency / scale.latency
double predicted_objective(std::span<const double> encoding, const DeviceFeatures& device,
                           const TradeoffWeights& lambda, const PerformancePredictors& p,
                           const DesignSpace& space);
std::vector<double> predicted_objective_gradient(std::span<const double> encoding,
                                                 const DeviceFeatures& device,
                                                 const TradeoffWeights& lambda,
                                                 const PerformancePredictors& p,
                                                 const DesignSpace& space);

// Batched objective for amortized training. Column j of `encodings` is paired
// with column j of `device_features` (log-features) and `lambdas` (2 x n).
struct BatchObjective {
  Eigen::VectorXd values;
  Eigen::MatrixXd gradients;  // d objective / d encoding, one column per sample
};
BatchObjective predicted_objective_batch(const Eigen::MatrixXd& encodings,
                                         const Eigen::MatrixXd& device_features,
                                         const Eigen::MatrixXd& lambdas,
                                         const PerformancePredictors& p);

struct PredictorSettings {
  std::vector<int> hidden_layers{64, 64};
  TrainingSettings training;
  // Applied to latency and energy; accuracy is always regressed directly.
  LabelTransform cost_transform = LabelTransform::kLog;
};

double median(std::vector<double> values);

// Samples `n_samples` designs uniformly and labels them with the accuracy
// oracle. Throws kInsufficientData for fewer than two samples.
FitResult train_accuracy_predictor(const DesignSpace& space, int n_samples, Rng& rng,
                                   MeasurementLedger& ledger, const PredictorSettings& settings,
                                   const AccuracyModel& accuracy = {});
FitResult train_accuracy_predictor(const DesignSpace& space, std::span<const DesignPoint> designs,
                                   Rng& rng, MeasurementLedger& ledger,
                                   const PredictorSettings& settings,
                                   const AccuracyModel& accuracy = {});

FitResult train_device_specific_predictor(Metric metric, const DesignSpace& space,
                                          const DeviceFeatures& device, int n_samples, Rng& rng,
                                          MeasurementLedger& ledger,
                                          const PredictorSettings& settings);

// Input = encoding ++ log_features(device). Requires at least two devices.
FitResult train_device_aware_predictor(Metric metric, const DesignSpace& space,
                                       std::span<const DeviceFeatures> devices,
                                       int designs_per_device, Rng& rng, MeasurementLedger& ledger,
                                       const PredictorSettings& settings);

// Labelled data gathered so far, kept so predictors can be refit as the
// exploration set grows.
struct PredictorDataset {
  std::vector<DesignPoint> designs;  // every design with an accuracy label
  std::vector<TrainingSample> accuracy;
  std::vector<TrainingSample> latency;
  std::vector<TrainingSample> energy;
};

struct PredictorTrainingState {
  PerformancePredictors predictors;
  PredictorDataset data;
  std::vector<double> latency_curve;
};

struct DeviceSpecificOptions {
  // Designs whose latency on the device was already measured (e.g. probes).
  // They count toward `n_samples` and are not re-measured for latency.
  std::span<const DesignPoint> known_designs;
  std::span<const double> known_latency;
  // Reused instead of training a new accuracy predictor when set.
  const MlpRegressor* shared_accuracy = nullptr;
  AccuracyModel accuracy;
};

// Device-specific accuracy/latency/energy set for `device`; the objective
// scale is the median of the device's latency and energy labels.
PredictorTrainingState train_device_specific_set(const DesignSpace& space,
                                                 const DeviceFeatures& device, int n_samples,
                                                 Rng& rng, MeasurementLedger& ledger,
                                                 const PredictorSettings& settings,
                                                 const DeviceSpecificOptions& options = {});

// Initial device-aware set: `initial_designs` designs measured on every real
// training device.
PredictorTrainingState train_device_aware_set(const DesignSpace& space,
                                              std::span<const DeviceFeatures> devices,
                                              int initial_designs, Rng& rng,
                                              MeasurementLedger& ledger,
                                              const PredictorSettings& settings,
                                              const AccuracyModel& accuracy = {});

// Each round: draw `explore_size` fresh designs uniformly, measure accuracy
// once per design and latency/energy on every device, append, refit all three
// predictors warm-started from the current weights.
void iterative_fit(PredictorTrainingState& state, int rounds, int explore_size,
                   const DesignSpace& space, std::span<const DeviceFeatures> devices, Rng& rng,
                   MeasurementLedger& ledger, const PredictorSettings& settings,
                   const AccuracyModel& accuracy = {});

}  // namespace dnnopt
