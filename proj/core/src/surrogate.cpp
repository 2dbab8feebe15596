#include "dnnopt/surrogate.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

namespace dnnopt {

const char* to_string(LabelTransform t) {
  return t == LabelTransform::kLog ? "log" : "identity";
}

LabelTransform label_transform_from_string(const std::string& name) {
  if (name == "identity") return LabelTransform::kIdentity;
  if (name == "log") return LabelTransform::kLog;
  throw Error(ErrorCode::kInvalidArgument, "unknown label transform '" + name + "'");
}

MlpRegressor::MlpRegressor(Mlp net, Eigen::VectorXd input_mean, Eigen::VectorXd input_scale,
                           double output_mean, double output_scale, LabelTransform transform)
    : net_(std::move(net)),
      in_mean_(std::move(input_mean)),
      in_scale_(std::move(input_scale)),
      out_mean_(output_mean),
      out_scale_(output_scale),
      transform_(transform) {
  if (net_.output_size() != 1) throw Error(ErrorCode::kInvalidArgument, "regressor must have one output");
  if (in_mean_.size() != net_.input_size() || in_scale_.size() != net_.input_size()) {
    throw Error(ErrorCode::kDimensionMismatch, "normalizer length does not match network input");
  }
  if ((in_scale_.array() <= 0.0).any() || !(out_scale_ > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "normalizer scales must be positive");
  }
}

void MlpRegressor::require_trained() const {
  if (!trained()) throw Error(ErrorCode::kUntrainedModel, "regressor has not been trained");
}

Eigen::MatrixXd MlpRegressor::normalize(const Eigen::MatrixXd& inputs) const {
  require_trained();
  if (inputs.rows() != net_.input_size()) {
    throw Error(ErrorCode::kDimensionMismatch, "input has " + std::to_string(inputs.rows()) +
                                                   " features, model expects " +
                                                   std::to_string(net_.input_size()));
  }
  return (inputs.colwise() - in_mean_).array().colwise() / in_scale_.array();
}

double MlpRegressor::predict(std::span<const double> input) const {
  const Eigen::Map<const Eigen::VectorXd> x(input.data(), static_cast<Eigen::Index>(input.size()));
  return predict_batch(x)(0);
}

Eigen::VectorXd MlpRegressor::predict_batch(const Eigen::MatrixXd& inputs) const {
  const Eigen::MatrixXd z = net_.forward(normalize(inputs));
  Eigen::ArrayXd y = z.row(0).transpose().array() * out_scale_ + out_mean_;
  if (transform_ == LabelTransform::kLog) y = y.exp();
  return y.matrix();
}

std::vector<double> MlpRegressor::gradient_wrt_input(std::span<const double> input) const {
  const Eigen::Map<const Eigen::VectorXd> x(input.data(), static_cast<Eigen::Index>(input.size()));
  const Eigen::MatrixXd g = weighted_input_gradients(x, Eigen::VectorXd::Ones(1));
  return {g.data(), g.data() + g.size()};
}

Eigen::MatrixXd MlpRegressor::weighted_input_gradients(const Eigen::MatrixXd& inputs,
                                                       const Eigen::VectorXd& coefficients) const {
  if (coefficients.size() != inputs.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "one coefficient per sample required");
  }
  Mlp::Tape tape;
  const Eigen::MatrixXd z = net_.forward(normalize(inputs), &tape);
  Eigen::VectorXd chain = coefficients * out_scale_;
  if (transform_ == LabelTransform::kLog) {
    // d exp(u)/du = exp(u)
    chain.array() *= (z.row(0).transpose().array() * out_scale_ + out_mean_).exp();
  }
  const Eigen::MatrixXd seed = chain.transpose();
  Mlp::Gradients g = net_.backward(tape, seed, /*want_parameters=*/false);
  return g.input.array().colwise() / in_scale_.array();
}

std::uint64_t MlpRegressor::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](double v) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  };
  for (double v : net_.parameters()) mix(v);
  for (Eigen::Index i = 0; i < in_mean_.size(); ++i) {
    mix(in_mean_(i));
    mix(in_scale_(i));
  }
  mix(out_mean_);
  mix(out_scale_);
  mix(static_cast<double>(transform_));
  return h;
}

namespace {

struct Moments {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;
};

Moments feature_moments(const Eigen::MatrixXd& x) {
  Moments m;
  m.mean = x.rowwise().mean();
  const Eigen::MatrixXd centered = x.colwise() - m.mean;
  m.scale = (centered.array().square().rowwise().sum() / static_cast<double>(x.cols())).sqrt();
  for (Eigen::Index i = 0; i < m.scale.size(); ++i) {
    if (!(m.scale(i) > 1e-12)) m.scale(i) = 1.0;
  }
  return m;
}

}  // namespace

FitResult fit(std::span<const TrainingSample> samples, const std::vector<int>& hidden_layers,
              const TrainingSettings& settings, Rng& rng, const FitOptions& options) {
  if (samples.size() < 2) throw Error(ErrorCode::kInsufficientData, "need at least two samples");
  const auto n = static_cast<Eigen::Index>(samples.size());
  const auto dim = static_cast<Eigen::Index>(samples.front().input.size());
  Eigen::MatrixXd x(dim, n);
  Eigen::VectorXd y(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& s = samples[static_cast<std::size_t>(j)];
    if (static_cast<Eigen::Index>(s.input.size()) != dim) {
      throw Error(ErrorCode::kDimensionMismatch, "training inputs differ in length");
    }
    if (!std::isfinite(s.label)) throw Error(ErrorCode::kInvalidArgument, "non-finite label");
    x.col(j) = Eigen::Map<const Eigen::VectorXd>(s.input.data(), dim);
    y(j) = s.label;
  }
  const LabelTransform transform = options.label_transform;
  Eigen::VectorXd target = y;
  if (transform == LabelTransform::kLog) {
    if ((y.array() <= 0.0).any()) {
      throw Error(ErrorCode::kInvalidArgument, "log label transform needs positive labels");
    }
    target = y.array().log();
  }

  std::vector<int> sizes{static_cast<int>(dim)};
  sizes.insert(sizes.end(), hidden_layers.begin(), hidden_layers.end());
  sizes.push_back(1);

  const Moments in = feature_moments(x);
  const double y_mean = target.mean();
  const double y_std = std::sqrt((target.array() - y_mean).square().mean());

  FitResult result;
  if (!(y_std > 1e-12 * std::max(1.0, std::abs(y_mean)))) {
    Mlp constant = Mlp::zeros(sizes, Activation::kSoftplus, Activation::kIdentity);
    result.model = MlpRegressor(std::move(constant), in.mean, in.scale, y_mean, 1.0, transform);
    result.degenerate = true;
    result.final_loss = (result.model.predict_batch(x) - y).squaredNorm() / static_cast<double>(n);
    return result;
  }

  const MlpRegressor* warm = options.warm_start;
  Mlp net = warm && warm->trained() && warm->network().layer_sizes() == sizes
                ? warm->network()
                : Mlp(sizes, Activation::kSoftplus, Activation::kIdentity, rng);
  const Eigen::MatrixXd xn = (x.colwise() - in.mean).array().colwise() / in.scale.array();
  const Eigen::RowVectorXd yn = ((target.array() - y_mean) / y_std).matrix().transpose();

  ParameterUpdater updater(net, settings);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const Eigen::Index batch = std::max(1, settings.batch_size);

  Mlp::Tape tape;
  for (int epoch = 0; epoch < settings.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (Eigen::Index start = 0; start < n; start += batch) {
      const Eigen::Index m = std::min(batch, n - start);
      Eigen::MatrixXd xb(dim, m);
      Eigen::RowVectorXd yb(m);
      for (Eigen::Index k = 0; k < m; ++k) {
        const Eigen::Index j = order[static_cast<std::size_t>(start + k)];
        xb.col(k) = xn.col(j);
        yb(k) = yn(j);
      }
      const Eigen::MatrixXd pred = net.forward(xb, &tape);
      const Eigen::RowVectorXd err = pred.row(0) - yb;
      epoch_loss += err.squaredNorm();
      // d/dpred of mean squared error over the batch.
      const Eigen::MatrixXd grad = (2.0 / static_cast<double>(m)) * err;
      updater.step(net, net.backward(tape, grad));
    }
    result.loss_curve.push_back(epoch_loss / static_cast<double>(n));
  }

  result.model = MlpRegressor(std::move(net), in.mean, in.scale, y_mean, y_std, transform);
  const Eigen::VectorXd fitted = result.model.predict_batch(x);
  result.final_loss = (fitted - y).squaredNorm() / static_cast<double>(n);
  return result;
}

void TradeoffWeights::validate() const {
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "tradeoff weights must be non-negative");
  }
}

std::vector<double> predictor_input(std::span<const double> encoding, const DeviceFeatures* device,
                                    const DesignSpace& space) {
  std::vector<double> in(encoding.begin(), encoding.end());
  if (device) {
    const auto f = log_features(*device, space);
    in.insert(in.end(), f.begin(), f.end());
  }
  return in;
}

namespace {

const MlpRegressor& metric_model(const PerformancePredictors& p, Metric metric) {
  return metric == Metric::kLatency ? p.latency : p.energy;
}

void require_trained(const PerformancePredictors& p) {
  if (!p.trained()) throw Error(ErrorCode::kUntrainedModel, "performance predictors not trained");
}

}  // namespace

double predict_metric(const PerformancePredictors& p, Metric metric,
                      std::span<const double> encoding, const DeviceFeatures& device,
                      const DesignSpace& space) {
  const auto in = predictor_input(encoding, p.device_aware ? &device : nullptr, space);
  return metric_model(p, metric).predict(in);
}

double predicted_objective(std::span<const double> encoding, const DeviceFeatures& device,
                           const TradeoffWeights& lambda, const PerformancePredictors& p,
                           const DesignSpace& space) {
  require_trained(p);
  lambda.validate();
  double value = -p.accuracy.predict(encoding);
  if (lambda.lambda1 != 0.0) {
    value += lambda.lambda1 * predict_metric(p, Metric::kEnergy, encoding, device, space) /
             p.scale.energy;
  }
  if (lambda.lambda2 != 0.0) {
    value += lambda.lambda2 * predict_metric(p, Metric::kLatency, encoding, device, space) /
             p.scale.latency;
  }
  return value;
}

std::vector<double> predicted_objective_gradient(std::span<const double> encoding,
                                                 const DeviceFeatures& device,
                                                 const TradeoffWeights& lambda,
                                                 const PerformancePredictors& p,
                                                 const DesignSpace& space) {
  require_trained(p);
  lambda.validate();
  std::vector<double> g = p.accuracy.gradient_wrt_input(encoding);
  for (double& v : g) v = -v;
  const auto in = predictor_input(encoding, p.device_aware ? &device : nullptr, space);
  auto add = [&](const MlpRegressor& m, double weight) {
    if (weight == 0.0) return;
    const auto gm = m.gradient_wrt_input(in);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += weight * gm[i];
  };
  add(p.energy, lambda.lambda1 / p.scale.energy);
  add(p.latency, lambda.lambda2 / p.scale.latency);
  return g;
}

BatchObjective predicted_objective_batch(const Eigen::MatrixXd& encodings,
                                         const Eigen::MatrixXd& device_features,
                                         const Eigen::MatrixXd& lambdas,
                                         const PerformancePredictors& p) {
  require_trained(p);
  const Eigen::Index n = encodings.cols();
  const Eigen::Index dim = encodings.rows();
  if (lambdas.rows() != 2 || lambdas.cols() != n) {
    throw Error(ErrorCode::kDimensionMismatch, "lambdas must be 2 x batch");
  }
  Eigen::MatrixXd metric_in = encodings;
  if (p.device_aware) {
    if (device_features.cols() != n) throw Error(ErrorCode::kDimensionMismatch, "device batch size");
    metric_in.resize(dim + device_features.rows(), n);
    metric_in.topRows(dim) = encodings;
    metric_in.bottomRows(device_features.rows()) = device_features;
  }
  const Eigen::VectorXd w_energy = lambdas.row(0).transpose() / p.scale.energy;
  const Eigen::VectorXd w_latency = lambdas.row(1).transpose() / p.scale.latency;

  BatchObjective out;
  out.values = -p.accuracy.predict_batch(encodings) +
               w_energy.cwiseProduct(p.energy.predict_batch(metric_in)) +
               w_latency.cwiseProduct(p.latency.predict_batch(metric_in));
  out.gradients = p.accuracy.weighted_input_gradients(encodings, -Eigen::VectorXd::Ones(n));
  out.gradients += p.energy.weighted_input_gradients(metric_in, w_energy).topRows(dim);
  out.gradients += p.latency.weighted_input_gradients(metric_in, w_latency).topRows(dim);
  return out;
}

double median(std::vector<double> values) {
  if (values.empty()) throw Error(ErrorCode::kInsufficientData, "median of empty set");
  const auto mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double hi = values[mid];
  if (values.size() % 2 == 1) return hi;
  const double lo = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

namespace {

std::vector<DesignPoint> sample_designs(const DesignSpace& space, int n, Rng& rng) {
  std::vector<DesignPoint> out;
  out.reserve(static_cast<std::size_t>(std::max(n, 0)));
  for (int i = 0; i < n; ++i) out.push_back(sample_uniform(space, rng));
  return out;
}

void require_samples(int n) {
  if (n < 2) throw Error(ErrorCode::kInsufficientData, "need at least two samples, got " + std::to_string(n));
}

std::vector<double> labels_of(const std::vector<TrainingSample>& s) {
  std::vector<double> out;
  out.reserve(s.size());
  for (const auto& t : s) out.push_back(t.label);
  return out;
}

}  // namespace

FitResult train_accuracy_predictor(const DesignSpace& space, int n_samples, Rng& rng,
                                   MeasurementLedger& ledger, const PredictorSettings& settings,
                                   const AccuracyModel& accuracy) {
  require_samples(n_samples);
  const auto designs = sample_designs(space, n_samples, rng);
  return train_accuracy_predictor(space, designs, rng, ledger, settings, accuracy);
}

FitResult train_accuracy_predictor(const DesignSpace& space, std::span<const DesignPoint> designs,
                                   Rng& rng, MeasurementLedger& ledger,
                                   const PredictorSettings& settings,
                                   const AccuracyModel& accuracy) {
  require_samples(static_cast<int>(designs.size()));
  std::vector<TrainingSample> samples;
  samples.reserve(designs.size());
  for (const auto& x : designs) {
    samples.push_back({encode(x, space), true_accuracy(x, space, ledger, accuracy)});
  }
  return fit(samples, settings.hidden_layers, settings.training, rng);
}

FitResult train_device_specific_predictor(Metric metric, const DesignSpace& space,
                                          const DeviceFeatures& device, int n_samples, Rng& rng,
                                          MeasurementLedger& ledger,
                                          const PredictorSettings& settings) {
  require_samples(n_samples);
  std::vector<TrainingSample> samples;
  for (const auto& x : sample_designs(space, n_samples, rng)) {
    const double label = metric == Metric::kLatency ? true_latency(x, space, device, ledger)
                                                    : true_energy(x, space, device, ledger);
    samples.push_back({encode(x, space), label});
  }
  return fit(samples, settings.hidden_layers, settings.training, rng,
             {.label_transform = settings.cost_transform});
}

FitResult train_device_aware_predictor(Metric metric, const DesignSpace& space,
                                       std::span<const DeviceFeatures> devices,
                                       int designs_per_device, Rng& rng, MeasurementLedger& ledger,
                                       const PredictorSettings& settings) {
  if (devices.size() < 2) {
    throw Error(ErrorCode::kInsufficientData, "device-aware predictor needs at least two devices");
  }
  require_samples(designs_per_device);
  std::vector<TrainingSample> samples;
  for (const auto& d : devices) {
    for (const auto& x : sample_designs(space, designs_per_device, rng)) {
      const double label = metric == Metric::kLatency ? true_latency(x, space, d, ledger)
                                                      : true_energy(x, space, d, ledger);
      samples.push_back({predictor_input(encode(x, space), &d, space), label});
    }
  }
  return fit(samples, settings.hidden_layers, settings.training, rng,
             {.label_transform = settings.cost_transform});
}

PredictorTrainingState train_device_specific_set(const DesignSpace& space,
                                                 const DeviceFeatures& device, int n_samples,
                                                 Rng& rng, MeasurementLedger& ledger,
                                                 const PredictorSettings& settings,
                                                 const DeviceSpecificOptions& options) {
  require_samples(n_samples);
  if (options.known_designs.size() != options.known_latency.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "known designs and latencies differ in length");
  }
  PredictorTrainingState state;
  auto& data = state.data;
  data.designs.assign(options.known_designs.begin(), options.known_designs.end());
  const int fresh = std::max(0, n_samples - static_cast<int>(data.designs.size()));
  for (auto& x : sample_designs(space, fresh, rng)) data.designs.push_back(std::move(x));

  for (std::size_t i = 0; i < data.designs.size(); ++i) {
    const DesignPoint& x = data.designs[i];
    const Encoding enc = encode(x, space);
    const double lat = i < options.known_latency.size() ? options.known_latency[i]
                                                        : true_latency(x, space, device, ledger);
    data.latency.push_back({enc, lat});
    data.energy.push_back({enc, true_energy(x, space, device, ledger)});
    if (!options.shared_accuracy) {
      data.accuracy.push_back({enc, true_accuracy(x, space, ledger, options.accuracy)});
    }
  }

  auto& p = state.predictors;
  p.device_aware = false;
  p.device_id = device.id;
  if (options.shared_accuracy) {
    p.accuracy = *options.shared_accuracy;
  } else {
    p.accuracy = fit(data.accuracy, settings.hidden_layers, settings.training, rng).model;
  }
  FitResult lat = fit(data.latency, settings.hidden_layers, settings.training, rng,
                      {.label_transform = settings.cost_transform});
  p.latency = std::move(lat.model);
  state.latency_curve = std::move(lat.loss_curve);
  p.energy = fit(data.energy, settings.hidden_layers, settings.training, rng,
                 {.label_transform = settings.cost_transform}).model;
  p.scale = {median(labels_of(data.latency)), median(labels_of(data.energy))};
  return state;
}

namespace {

void measure_designs(PredictorDataset& data, std::span<const DesignPoint> designs,
                     const DesignSpace& space, std::span<const DeviceFeatures> devices,
                     MeasurementLedger& ledger, const AccuracyModel& accuracy) {
  for (const auto& x : designs) {
    const Encoding enc = encode(x, space);
    data.designs.push_back(x);
    data.accuracy.push_back({enc, true_accuracy(x, space, ledger, accuracy)});
    for (const auto& d : devices) {
      const auto in = predictor_input(enc, &d, space);
      data.latency.push_back({in, true_latency(x, space, d, ledger)});
      data.energy.push_back({in, true_energy(x, space, d, ledger)});
    }
  }
}

void refit_all(PredictorTrainingState& state, const PredictorSettings& settings, Rng& rng,
               bool warm) {
  auto& p = state.predictors;
  const PerformancePredictors previous = p;
  const auto cost = settings.cost_transform;
  p.accuracy = fit(state.data.accuracy, settings.hidden_layers, settings.training, rng,
                   {.warm_start = warm ? &previous.accuracy : nullptr}).model;
  FitResult lat = fit(state.data.latency, settings.hidden_layers, settings.training, rng,
                      {.label_transform = cost, .warm_start = warm ? &previous.latency : nullptr});
  p.latency = std::move(lat.model);
  state.latency_curve = std::move(lat.loss_curve);
  p.energy = fit(state.data.energy, settings.hidden_layers, settings.training, rng,
                 {.label_transform = cost, .warm_start = warm ? &previous.energy : nullptr}).model;
  p.scale = {median(labels_of(state.data.latency)), median(labels_of(state.data.energy))};
}

}  // namespace

PredictorTrainingState train_device_aware_set(const DesignSpace& space,
                                              std::span<const DeviceFeatures> devices,
                                              int initial_designs, Rng& rng,
                                              MeasurementLedger& ledger,
                                              const PredictorSettings& settings,
                                              const AccuracyModel& accuracy) {
  if (devices.size() < 2) {
    throw Error(ErrorCode::kInsufficientData, "device-aware predictors need at least two devices");
  }
  require_samples(initial_designs);
  PredictorTrainingState state;
  state.predictors.device_aware = true;
  const auto designs = sample_designs(space, initial_designs, rng);
  measure_designs(state.data, designs, space, devices, ledger, accuracy);
  refit_all(state, settings, rng, /*warm=*/false);
  return state;
}

void iterative_fit(PredictorTrainingState& state, int rounds, int explore_size,
                   const DesignSpace& space, std::span<const DeviceFeatures> devices, Rng& rng,
                   MeasurementLedger& ledger, const PredictorSettings& settings,
                   const AccuracyModel& accuracy) {
  if (!state.predictors.device_aware) {
    throw Error(ErrorCode::kInvalidArgument, "iterative_fit expects device-aware predictors");
  }
  if (rounds < 0 || explore_size < 0) {
    throw Error(ErrorCode::kInvalidArgument, "rounds and explore_size must be non-negative");
  }
  for (int round = 0; round < rounds; ++round) {
    const auto explore = sample_designs(space, explore_size, rng);
    measure_designs(state.data, explore, space, devices, ledger, accuracy);
    refit_all(state, settings, rng, /*warm=*/true);
  }
}

}  // namespace dnnopt
