#include "dnnopt/mlp.hpp"

#include <cmath>
#include <random>

namespace dnnopt {

const char* to_string(Activation a) {
  switch (a) {
    case Activation::kIdentity: return "identity";
    case Activation::kSoftplus: return "softplus";
    case Activation::kLogistic: return "logistic";
  }
  return "identity";
}

Activation activation_from_string(const std::string& name) {
  if (name == "identity") return Activation::kIdentity;
  if (name == "softplus") return Activation::kSoftplus;
  if (name == "logistic") return Activation::kLogistic;
  throw Error(ErrorCode::kInvalidArgument, "unknown activation '" + name + "'");
}

namespace {

// Value and derivative (w.r.t. the pre-activation) in one pass.
void activate(Activation a, const Eigen::MatrixXd& z, Eigen::MatrixXd& value,
              Eigen::MatrixXd& slope) {
  switch (a) {
    case Activation::kIdentity:
      value = z;
      slope = Eigen::MatrixXd::Ones(z.rows(), z.cols());
      return;
    case Activation::kSoftplus: {
      const Eigen::ArrayXXd e = (-z.array().abs()).exp();
      value = z.array().max(0.0) + e.log1p();
      slope = (z.array() >= 0.0).select(1.0 / (1.0 + e), e / (1.0 + e));
      return;
    }
    case Activation::kLogistic: {
      const Eigen::ArrayXXd e = (-z.array().abs()).exp();
      const Eigen::ArrayXXd s = (z.array() >= 0.0).select(1.0 / (1.0 + e), e / (1.0 + e));
      value = s;
      slope = s * (1.0 - s);
      return;
    }
  }
}

void check_sizes(const std::vector<int>& sizes) {
  if (sizes.size() < 2) throw Error(ErrorCode::kInvalidArgument, "network needs >= 2 layer sizes");
  for (int s : sizes) {
    if (s < 1) throw Error(ErrorCode::kInvalidArgument, "layer sizes must be positive");
  }
}

}  // namespace

Mlp::Mlp(std::vector<int> layer_sizes, Activation hidden, Activation output, Rng& rng)
    : sizes_(std::move(layer_sizes)), hidden_(hidden), output_(output) {
  check_sizes(sizes_);
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const bool last = l + 2 == sizes_.size();
    const Activation act = last ? output_ : hidden_;
    const double gain = act == Activation::kSoftplus ? 2.0 : 1.0;
    std::normal_distribution<double> init(0.0, std::sqrt(gain / sizes_[l]));
    Eigen::MatrixXd w(sizes_[l + 1], sizes_[l]);
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = init(rng);
    }
    weights_.push_back(std::move(w));
    biases_.push_back(Eigen::VectorXd::Zero(sizes_[l + 1]));
  }
}

Mlp Mlp::zeros(std::vector<int> layer_sizes, Activation hidden, Activation output) {
  check_sizes(layer_sizes);
  Mlp net;
  net.sizes_ = std::move(layer_sizes);
  net.hidden_ = hidden;
  net.output_ = output;
  for (std::size_t l = 0; l + 1 < net.sizes_.size(); ++l) {
    net.weights_.push_back(Eigen::MatrixXd::Zero(net.sizes_[l + 1], net.sizes_[l]));
    net.biases_.push_back(Eigen::VectorXd::Zero(net.sizes_[l + 1]));
  }
  return net;
}

int Mlp::input_size() const { return sizes_.empty() ? 0 : sizes_.front(); }
int Mlp::output_size() const { return sizes_.empty() ? 0 : sizes_.back(); }

void Mlp::check_input(Eigen::Index rows) const {
  if (empty()) throw Error(ErrorCode::kUntrainedModel, "network has no parameters");
  if (rows != input_size()) {
    throw Error(ErrorCode::kDimensionMismatch, "input has " + std::to_string(rows) +
                                                   " features, network expects " +
                                                   std::to_string(input_size()));
  }
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& inputs, Tape* tape) const {
  check_input(inputs.rows());
  if (tape) {
    tape->slope.resize(weights_.size());
    tape->act.resize(weights_.size() + 1);
    tape->act[0] = inputs;
  }
  Eigen::MatrixXd a = inputs;
  Eigen::MatrixXd slope;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Eigen::MatrixXd z = weights_[l] * a;
    z.colwise() += biases_[l];
    activate(l + 1 == weights_.size() ? output_ : hidden_, z, a, slope);
    if (tape) {
      tape->slope[l] = slope;
      tape->act[l + 1] = a;
    }
  }
  return a;
}

Mlp::Gradients Mlp::backward(const Tape& tape, const Eigen::MatrixXd& output_grad,
                             bool want_parameters) const {
  if (tape.slope.size() != weights_.size()) {
    throw Error(ErrorCode::kInvalidArgument, "tape does not belong to this network");
  }
  Gradients g;
  if (want_parameters) {
    g.weights.resize(weights_.size());
    g.biases.resize(biases_.size());
  }
  Eigen::MatrixXd delta = output_grad;
  for (std::size_t l = weights_.size(); l-- > 0;) {
    delta = delta.cwiseProduct(tape.slope[l]);
    if (want_parameters) {
      g.weights[l] = delta * tape.act[l].transpose();
      g.biases[l] = delta.rowwise().sum();
    }
    delta = weights_[l].transpose() * delta;
  }
  g.input = std::move(delta);
  return g;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) n += weights_[l].size() + biases_[l].size();
  return n;
}

std::vector<double> Mlp::parameters() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    for (Eigen::Index r = 0; r < weights_[l].rows(); ++r) {
      for (Eigen::Index c = 0; c < weights_[l].cols(); ++c) flat.push_back(weights_[l](r, c));
    }
    for (Eigen::Index r = 0; r < biases_[l].size(); ++r) flat.push_back(biases_[l](r));
  }
  return flat;
}

void Mlp::set_parameters(std::span<const double> flat) {
  if (flat.size() != parameter_count()) {
    throw Error(ErrorCode::kDimensionMismatch, "parameter vector has wrong length");
  }
  std::size_t k = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    for (Eigen::Index r = 0; r < weights_[l].rows(); ++r) {
      for (Eigen::Index c = 0; c < weights_[l].cols(); ++c) weights_[l](r, c) = flat[k++];
    }
    for (Eigen::Index r = 0; r < biases_[l].size(); ++r) biases_[l](r) = flat[k++];
  }
}

std::vector<double> Mlp::flatten(const Gradients& g) {
  std::vector<double> flat;
  for (std::size_t l = 0; l < g.weights.size(); ++l) {
    for (Eigen::Index r = 0; r < g.weights[l].rows(); ++r) {
      for (Eigen::Index c = 0; c < g.weights[l].cols(); ++c) flat.push_back(g.weights[l](r, c));
    }
    for (Eigen::Index r = 0; r < g.biases[l].size(); ++r) flat.push_back(g.biases[l](r));
  }
  return flat;
}

double Mlp::squared_norm() const {
  double s = 0.0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    s += weights_[l].squaredNorm() + biases_[l].squaredNorm();
  }
  return s;
}

bool operator==(const Mlp& a, const Mlp& b) {
  if (a.sizes_ != b.sizes_ || a.hidden_ != b.hidden_ || a.output_ != b.output_) return false;
  for (std::size_t l = 0; l < a.weights_.size(); ++l) {
    if (a.weights_[l] != b.weights_[l] || a.biases_[l] != b.biases_[l]) return false;
  }
  return true;
}

ParameterUpdater::ParameterUpdater(const Mlp& net, const TrainingSettings& settings)
    : settings_(settings) {
  for (std::size_t l = 0; l < net.weights().size(); ++l) {
    w1_.push_back(Eigen::MatrixXd::Zero(net.weights()[l].rows(), net.weights()[l].cols()));
    b1_.push_back(Eigen::VectorXd::Zero(net.biases()[l].size()));
  }
  if (settings_.optimizer == OptimizerKind::kAdam) {
    w2_ = w1_;
    b2_ = b1_;
  }
}

void ParameterUpdater::step(Mlp& net, const Mlp::Gradients& grads) {
  ++step_count_;
  const double lr = settings_.learning_rate;
  if (settings_.optimizer == OptimizerKind::kMomentum) {
    const double mu = settings_.momentum;
    for (std::size_t l = 0; l < w1_.size(); ++l) {
      w1_[l] = mu * w1_[l] - lr * grads.weights[l];
      b1_[l] = mu * b1_[l] - lr * grads.biases[l];
      net.weights()[l] += w1_[l];
      net.biases()[l] += b1_[l];
    }
    return;
  }
  const double beta1 = settings_.momentum;
  const double beta2 = settings_.adam_beta2;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step_count_));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step_count_));
  constexpr double kEps = 1e-8;
  for (std::size_t l = 0; l < w1_.size(); ++l) {
    w1_[l] = beta1 * w1_[l] + (1.0 - beta1) * grads.weights[l];
    w2_[l] = beta2 * w2_[l] + (1.0 - beta2) * grads.weights[l].cwiseAbs2();
    b1_[l] = beta1 * b1_[l] + (1.0 - beta1) * grads.biases[l];
    b2_[l] = beta2 * b2_[l] + (1.0 - beta2) * grads.biases[l].cwiseAbs2();
    net.weights()[l].array() -=
        lr * (w1_[l].array() / c1) / ((w2_[l].array() / c2).sqrt() + kEps);
    net.biases()[l].array() -=
        lr * (b1_[l].array() / c1) / ((b2_[l].array() / c2).sqrt() + kEps);
  }
}

}  // namespace dnnopt
