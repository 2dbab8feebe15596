#include "dnnopt/learn_to_optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dnnopt/error.hpp"

namespace dnnopt {

std::vector<TradeoffWeights> build_lambda_grid(int count_per_axis, double max_lambda) {
  if (count_per_axis < 1) throw Error(ErrorCode::kInvalidArgument, "lambda grid count must be >= 1");
  if (count_per_axis > 1 && !(max_lambda > 0.0 && std::isfinite(max_lambda))) {
    throw Error(ErrorCode::kInvalidArgument, "lambda grid maximum must be positive");
  }
  std::vector<double> axis{0.0};
  for (int k = count_per_axis - 2; k >= 0; --k) axis.push_back(max_lambda * std::pow(10.0, -k));
  std::vector<TradeoffWeights> grid;
  grid.reserve(axis.size() * axis.size());
  for (double l1 : axis) {
    for (double l2 : axis) grid.push_back({l1, l2});
  }
  return grid;
}

OptimizerNetwork::OptimizerNetwork(Mlp net, Eigen::VectorXd input_mean,
                                   Eigen::VectorXd input_scale)
    : net_(std::move(net)), in_mean_(std::move(input_mean)), in_scale_(std::move(input_scale)) {
  if (net_.empty()) return;
  if (in_mean_.size() != net_.input_size() || in_scale_.size() != net_.input_size()) {
    throw Error(ErrorCode::kDimensionMismatch, "normalizer does not match network input");
  }
  if (net_.output_activation() != Activation::kLogistic) {
    throw Error(ErrorCode::kInvalidArgument, "optimizer network needs a logistic output layer");
  }
}

Eigen::VectorXd OptimizerNetwork::raw_input(const DeviceFeatures& d, const TradeoffWeights& lambda,
                                            const DesignSpace& space) {
  lambda.validate();
  const auto f = log_features(d, space);
  Eigen::VectorXd v(static_cast<Eigen::Index>(f.size()) + 2);
  for (std::size_t i = 0; i < f.size(); ++i) v(static_cast<Eigen::Index>(i)) = f[i];
  v(v.size() - 2) = std::log(lambda.lambda1 + kLambdaOffset);
  v(v.size() - 1) = std::log(lambda.lambda2 + kLambdaOffset);
  return v;
}

Eigen::MatrixXd OptimizerNetwork::forward(const Eigen::MatrixXd& raw_inputs,
                                          Mlp::Tape* tape) const {
  if (!trained()) throw Error(ErrorCode::kUntrainedModel, "optimizer network is untrained");
  if (raw_inputs.rows() != in_mean_.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "optimizer input has the wrong length");
  }
  const Eigen::MatrixXd z =
      (raw_inputs.colwise() - in_mean_).array().colwise() / in_scale_.array();
  return net_.forward(z, tape);
}

Encoding OptimizerNetwork::infer_encoding(const DeviceFeatures& d, const TradeoffWeights& lambda,
                                          const DesignSpace& space) const {
  const Eigen::VectorXd out = forward(raw_input(d, lambda, space));
  if (static_cast<std::size_t>(out.size()) != space.dimension()) {
    throw Error(ErrorCode::kDimensionMismatch, "optimizer output does not match the design space");
  }
  return Encoding(out.data(), out.data() + out.size());
}

OptimizerTrainingSet make_training_inputs(std::span<const DeviceFeatures> devices,
                                          std::span<const TradeoffWeights> lambdas) {
  OptimizerTrainingSet set;
  set.inputs.reserve(devices.size() * lambdas.size());
  for (const auto& d : devices) {
    for (const auto& l : lambdas) set.inputs.push_back({d, l});
  }
  return set;
}

OptimizerTrainingSet generate_labels_method1(
    const DesignSpace& space, std::span<const DeviceFeatures> devices,
    std::span<const TradeoffWeights> lambdas, const PerformancePredictors& p,
    const std::function<SearchResult(const Objective&, std::size_t)>& inner) {
  if (!p.trained()) throw Error(ErrorCode::kUntrainedModel, "predictors are untrained");
  OptimizerTrainingSet set = make_training_inputs(devices, lambdas);
  std::vector<Encoding> labels;
  labels.reserve(set.inputs.size());
  for (std::size_t i = 0; i < set.inputs.size(); ++i) {
    const auto& [d, lambda] = set.inputs[i];
    const Objective objective = [&](const DesignPoint& x) {
      return predicted_objective(encode(x, space), d, lambda, p, space);
    };
    labels.push_back(encode(inner(objective, i).best, space));
  }
  set.labels = std::move(labels);
  return set;
}

OptimizerTrainingSet generate_labels_method1(const DesignSpace& space,
                                             std::span<const DeviceFeatures> devices,
                                             std::span<const TradeoffWeights> lambdas,
                                             const PerformancePredictors& p,
                                             const SearchParams& params) {
  params.validate();
  return generate_labels_method1(
      space, devices, lambdas, p, [&](const Objective& objective, std::size_t index) {
        SearchParams local = params;
        local.seed = params.seed + index;
        return evolutionary_search(objective, space, local);
      });
}

OptimizerBatch make_batch(const DesignSpace& space, const OptimizerTrainingSet& set) {
  if (set.inputs.empty()) throw Error(ErrorCode::kInsufficientData, "empty optimizer training set");
  if (set.labels && set.labels->size() != set.inputs.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "labels do not align with inputs");
  }
  const auto n = static_cast<Eigen::Index>(set.inputs.size());
  const auto dim = static_cast<Eigen::Index>(space.dimension());
  OptimizerBatch b;
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& [d, lambda] = set.inputs[static_cast<std::size_t>(j)];
    const Eigen::VectorXd raw = OptimizerNetwork::raw_input(d, lambda, space);
    if (j == 0) {
      b.raw_inputs.resize(raw.size(), n);
      b.device_features.resize(raw.size() - 2, n);
      b.lambdas.resize(2, n);
    }
    b.raw_inputs.col(j) = raw;
    b.device_features.col(j) = raw.head(raw.size() - 2);
    b.lambdas(0, j) = lambda.lambda1;
    b.lambdas(1, j) = lambda.lambda2;
  }
  if (set.labels) {
    b.labels.resize(dim, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto& label = (*set.labels)[static_cast<std::size_t>(j)];
      if (static_cast<Eigen::Index>(label.size()) != dim) {
        throw Error(ErrorCode::kDimensionMismatch, "label length does not match the design space");
      }
      b.labels.col(j) = Eigen::Map<const Eigen::VectorXd>(label.data(), dim);
    }
  }
  return b;
}

namespace {

OptimizerBatch select_columns(const OptimizerBatch& b, std::span<const Eigen::Index> cols) {
  OptimizerBatch out;
  const auto m = static_cast<Eigen::Index>(cols.size());
  out.raw_inputs.resize(b.raw_inputs.rows(), m);
  out.device_features.resize(b.device_features.rows(), m);
  out.lambdas.resize(2, m);
  if (b.labels.size() > 0) out.labels.resize(b.labels.rows(), m);
  for (Eigen::Index k = 0; k < m; ++k) {
    const Eigen::Index j = cols[static_cast<std::size_t>(k)];
    out.raw_inputs.col(k) = b.raw_inputs.col(j);
    out.device_features.col(k) = b.device_features.col(j);
    out.lambdas.col(k) = b.lambdas.col(j);
    if (b.labels.size() > 0) out.labels.col(k) = b.labels.col(j);
  }
  return out;
}

void add_regularizer(const Mlp& net, double mu, Mlp::Gradients& g) {
  for (std::size_t l = 0; l < g.weights.size(); ++l) {
    g.weights[l] += 2.0 * mu * net.weights()[l];
    g.biases[l] += 2.0 * mu * net.biases()[l];
  }
}

using LossFn = std::function<double(const OptimizerNetwork&, const OptimizerBatch&, Mlp::Gradients*)>;

OptimizerFitResult run_training(OptimizerNetwork net, const OptimizerBatch& data,
                                const TrainingSettings& settings, Rng& rng, const LossFn& loss) {
  ParameterUpdater updater(net.network(), settings);
  const Eigen::Index n = data.raw_inputs.cols();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const auto batch = static_cast<std::size_t>(std::max(1, settings.batch_size));

  OptimizerFitResult result;
  for (int epoch = 0; epoch < settings.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t m = std::min(batch, order.size() - start);
      const OptimizerBatch mb =
          select_columns(data, std::span<const Eigen::Index>(order).subspan(start, m));
      Mlp::Gradients g;
      epoch_loss += loss(net, mb, &g) * static_cast<double>(m);
      updater.step(net.network(), g);
    }
    result.loss_curve.push_back(epoch_loss / static_cast<double>(n));
  }
  result.final_loss = loss(net, data, nullptr);
  result.network = std::move(net);
  return result;
}

}  // namespace

double method1_loss(const OptimizerNetwork& net, const OptimizerBatch& batch, double mu,
                    Mlp::Gradients* grads) {
  if (batch.labels.cols() != batch.raw_inputs.cols()) {
    throw Error(ErrorCode::kInsufficientData, "method 1 needs labels");
  }
  const auto n = static_cast<double>(batch.raw_inputs.cols());
  Mlp::Tape tape;
  const Eigen::MatrixXd out = net.forward(batch.raw_inputs, grads ? &tape : nullptr);
  const Eigen::MatrixXd err = out - batch.labels;
  const Mlp& m = net.network();
  if (grads) {
    *grads = m.backward(tape, (2.0 / n) * err);
    add_regularizer(m, mu, *grads);
  }
  return err.squaredNorm() / n + mu * m.squared_norm();
}

double method2_loss(const OptimizerNetwork& net, const OptimizerBatch& batch,
                    const PerformancePredictors& p, double mu, Mlp::Gradients* grads) {
  const auto n = static_cast<double>(batch.raw_inputs.cols());
  Mlp::Tape tape;
  const Eigen::MatrixXd out = net.forward(batch.raw_inputs, grads ? &tape : nullptr);
  const BatchObjective f = predicted_objective_batch(out, batch.device_features, batch.lambdas, p);
  const Mlp& m = net.network();
  if (grads) {
    *grads = m.backward(tape, f.gradients / n);
    add_regularizer(m, mu, *grads);
  }
  return f.values.sum() / n + mu * m.squared_norm();
}

OptimizerNetwork init_optimizer_network(const DesignSpace& space, const OptimizerTrainingSet& set,
                                        const std::vector<int>& hidden_layers, Rng& rng) {
  const OptimizerBatch b = make_batch(space, set);
  const Eigen::VectorXd mean = b.raw_inputs.rowwise().mean();
  const Eigen::MatrixXd centered = b.raw_inputs.colwise() - mean;
  Eigen::VectorXd scale =
      (centered.array().square().rowwise().sum() / static_cast<double>(b.raw_inputs.cols())).sqrt();
  for (Eigen::Index i = 0; i < scale.size(); ++i) {
    if (!(scale(i) > 1e-12)) scale(i) = 1.0;
  }
  std::vector<int> sizes{static_cast<int>(b.raw_inputs.rows())};
  sizes.insert(sizes.end(), hidden_layers.begin(), hidden_layers.end());
  sizes.push_back(static_cast<int>(space.dimension()));
  return OptimizerNetwork(Mlp(sizes, Activation::kSoftplus, Activation::kLogistic, rng), mean,
                          scale);
}

OptimizerFitResult train_method1(const DesignSpace& space, const OptimizerTrainingSet& set,
                                 const OptimizerSettings& settings, Rng& rng) {
  if (!set.labels) throw Error(ErrorCode::kInsufficientData, "method 1 needs labels");
  if (!(settings.mu >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "mu must be non-negative");
  const OptimizerBatch data = make_batch(space, set);
  OptimizerNetwork net = init_optimizer_network(space, set, settings.hidden_layers, rng);
  return run_training(std::move(net), data, settings.training, rng,
                      [&](const OptimizerNetwork& n, const OptimizerBatch& b, Mlp::Gradients* g) {
                        return method1_loss(n, b, settings.mu, g);
                      });
}

OptimizerFitResult train_method2(const DesignSpace& space, const OptimizerTrainingSet& set,
                                 const PerformancePredictors& p, const OptimizerSettings& settings,
                                 Rng& rng) {
  if (!p.trained()) throw Error(ErrorCode::kUntrainedModel, "predictors are untrained");
  if (!(settings.mu >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "mu must be non-negative");
  const OptimizerBatch data = make_batch(space, set);
  OptimizerNetwork net = init_optimizer_network(space, set, settings.hidden_layers, rng);
  return run_training(std::move(net), data, settings.training, rng,
                      [&](const OptimizerNetwork& n, const OptimizerBatch& b, Mlp::Gradients* g) {
                        return method2_loss(n, b, p, settings.mu, g);
                      });
}

DesignPoint infer_design(const OptimizerNetwork& net, const DeviceFeatures& d,
                         const TradeoffWeights& lambda, const DesignSpace& space) {
  return decode(net.infer_encoding(d, lambda, space), space);
}

SweepResult constraint_sweep(const OptimizerNetwork& net, const DesignSpace& space,
                             const DeviceFeatures& d, const ConstraintSpec& constraints,
                             const PerformancePredictors& p,
                             std::span<const TradeoffWeights> lambdas, MeasurementLedger& ledger,
                             const SweepOptions& options) {
  constraints.validate();
  if (!p.trained()) throw Error(ErrorCode::kUntrainedModel, "predictors are untrained");
  const bool bounded = (constraints.latency_bound && std::isfinite(*constraints.latency_bound)) ||
                       (constraints.energy_bound && std::isfinite(*constraints.energy_bound));
  const TradeoffWeights unweighted{};
  const std::span<const TradeoffWeights> grid =
      bounded ? lambdas : std::span<const TradeoffWeights>(&unweighted, 1);
  if (grid.empty()) throw Error(ErrorCode::kInvalidArgument, "empty lambda grid");

  SweepResult result;
  std::optional<std::size_t> best;
  double best_key = 0.0;
  bool best_feasible = false;
  for (const auto& lambda : grid) {
    SweepRow row;
    row.lambda = lambda;
    row.design = infer_design(net, d, lambda, space);
    ++result.forward_passes;
    if (options.fine_tune_radius > 0) {
      row.design = fine_tune(row.design, space, d, lambda, p, options.fine_tune_radius,
                             options.fine_tune_budget);
    }
    const Encoding e = encode(row.design, space);
    row.predicted_accuracy = p.accuracy.predict(e);
    row.predicted_latency = predict_metric(p, Metric::kLatency, e, d, space);
    row.predicted_energy = predict_metric(p, Metric::kEnergy, e, d, space);
    row.predicted_feasible = constraints.satisfied(row.predicted_latency, row.predicted_energy);
    // Feasible rows rank by accuracy; infeasible rows only by violation.
    const double key = row.predicted_feasible
                           ? -row.predicted_accuracy
                           : constraints.violation(row.predicted_latency, row.predicted_energy);
    const bool better = !best || (row.predicted_feasible && !best_feasible) ||
                        (row.predicted_feasible == best_feasible && key < best_key);
    if (better) {
      best = result.rows.size();
      best_key = key;
      best_feasible = row.predicted_feasible;
    }
    result.rows.push_back(std::move(row));
  }

  SweepRow& chosen = result.rows[*best];
  chosen.chosen = true;
  result.design = chosen.design;
  result.lambda = chosen.lambda;
  result.predicted_feasible = chosen.predicted_feasible;
  const auto before = ledger.device_total(d.id);
  result.oracle_latency = true_latency(result.design, space, d, ledger);
  result.oracle_energy = true_energy(result.design, space, d, ledger);
  result.validation_measurements = static_cast<int>(ledger.device_total(d.id) - before);
  result.oracle_feasible = constraints.satisfied(result.oracle_latency, result.oracle_energy);
  return result;
}

DesignPoint fine_tune(const DesignPoint& seed, const DesignSpace& space, const DeviceFeatures& d,
                      const TradeoffWeights& lambda, const PerformancePredictors& p, int radius,
                      std::size_t budget) {
  if (radius < 0) throw Error(ErrorCode::kInvalidArgument, "radius must be non-negative");
  space.check(seed);
  DesignPoint best = seed;
  double best_value = predicted_objective(encode(seed, space), d, lambda, p, space);
  for (const auto& x : hamming_ball(seed, radius, std::max<std::size_t>(budget, 1), space)) {
    const double v = predicted_objective(encode(x, space), d, lambda, p, space);
    if (v < best_value) {
      best_value = v;
      best = x;
    }
  }
  return best;
}

}  // namespace dnnopt
