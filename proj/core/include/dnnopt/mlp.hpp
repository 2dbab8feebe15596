#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dnnopt/design_space.hpp"

namespace dnnopt {

enum class Activation { kIdentity, kSoftplus, kLogistic };

const char* to_string(Activation a);
Activation activation_from_string(const std::string& name);

// Fully connected network. Batches are column-major: one sample per column.
// A default-constructed network is "untrained" and refuses to evaluate.
class Mlp {
 public:
  struct Tape {
    std::vector<Eigen::MatrixXd> slope;  // activation derivative per layer
    std::vector<Eigen::MatrixXd> act;  // act[0] is the input batch
  };

  struct Gradients {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;
    Eigen::MatrixXd input;
  };

  Mlp() = default;
  // Random init: N(0, 2/fan_in) weights for softplus layers, N(0, 1/fan_in)
  // otherwise; zero biases.
  Mlp(std::vector<int> layer_sizes, Activation hidden, Activation output, Rng& rng);
  // Deterministic all-zero network of the given shape.
  static Mlp zeros(std::vector<int> layer_sizes, Activation hidden, Activation output);

  bool empty() const noexcept { return weights_.empty(); }
  int input_size() const;
  int output_size() const;
  const std::vector<int>& layer_sizes() const noexcept { return sizes_; }
  Activation hidden_activation() const noexcept { return hidden_; }
  Activation output_activation() const noexcept { return output_; }

  std::vector<Eigen::MatrixXd>& weights() noexcept { return weights_; }
  const std::vector<Eigen::MatrixXd>& weights() const noexcept { return weights_; }
  std::vector<Eigen::VectorXd>& biases() noexcept { return biases_; }
  const std::vector<Eigen::VectorXd>& biases() const noexcept { return biases_; }

  Eigen::MatrixXd forward(const Eigen::MatrixXd& inputs, Tape* tape = nullptr) const;
  // Backpropagates d(loss)/d(output) through a recorded forward pass. Weight
  // gradients are skipped when `want_parameters` is false.
  Gradients backward(const Tape& tape, const Eigen::MatrixXd& output_grad,
                     bool want_parameters = true) const;

  std::size_t parameter_count() const;
  // Layer by layer: row-major weights then bias.
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> flat);
  static std::vector<double> flatten(const Gradients& g);
  double squared_norm() const;

  friend bool operator==(const Mlp& a, const Mlp& b);

 private:
  void check_input(Eigen::Index rows) const;

  std::vector<int> sizes_;
  Activation hidden_ = Activation::kSoftplus;
  Activation output_ = Activation::kIdentity;
  std::vector<Eigen::MatrixXd> weights_;  // (out x in)
  std::vector<Eigen::VectorXd> biases_;
};

enum class OptimizerKind { kMomentum, kAdam };

struct TrainingSettings {
  int epochs = 2000;
  int batch_size = 32;
  double learning_rate = 1e-2;
  double momentum = 0.9;
  OptimizerKind optimizer = OptimizerKind::kMomentum;
  double adam_beta2 = 0.999;
};

// First-order update rule holding per-parameter state for one network.
class ParameterUpdater {
 public:
  ParameterUpdater(const Mlp& net, const TrainingSettings& settings);
  void step(Mlp& net, const Mlp::Gradients& grads);

 private:
  TrainingSettings settings_;
  long step_count_ = 0;
  std::vector<Eigen::MatrixXd> w1_, w2_;
  std::vector<Eigen::VectorXd> b1_, b2_;
};

}  // namespace dnnopt
