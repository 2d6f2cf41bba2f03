// Copyright 2026 The concealfuse Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CONCEALFUSE_BAYESNET_HPP
#define CONCEALFUSE_BAYESNET_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "concealfuse/conceal.hpp"
#include "concealfuse/core.hpp"

namespace concealfuse {

// f(x, w) = W2 tanh(W1 x + b1) + b2 with a 2-dimensional linear output.
// Flat parameter order: W1 (row-major), b1, W2 (row-major), b2.
template <typename Scalar>
struct TwoLayerNet {
  using MatrixS = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using VectorS = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  MatrixS w1;                              // hidden x input
  VectorS b1;                              // hidden
  Eigen::Matrix<Scalar, 2, Eigen::Dynamic> w2;  // 2 x hidden
  Eigen::Matrix<Scalar, 2, 1> b2;

  TwoLayerNet() = default;
  TwoLayerNet(Index inputs, Index hidden)
      : w1(MatrixS::Zero(hidden, inputs)),
        b1(VectorS::Zero(hidden)),
        w2(Eigen::Matrix<Scalar, 2, Eigen::Dynamic>::Zero(2, hidden)),
        b2(Eigen::Matrix<Scalar, 2, 1>::Zero()) {}

  Index inputs() const noexcept { return w1.cols(); }
  Index hidden() const noexcept { return w1.rows(); }
  Index parameter_count() const noexcept { return hidden() * inputs() + hidden() + 2 * hidden() + 2; }

  VectorS flatten() const {
    VectorS p(parameter_count());
    Index o = 0;
    for (Index h = 0; h < hidden(); ++h)
      for (Index i = 0; i < inputs(); ++i) p(o++) = w1(h, i);
    for (Index h = 0; h < hidden(); ++h) p(o++) = b1(h);
    for (Index j = 0; j < 2; ++j)
      for (Index h = 0; h < hidden(); ++h) p(o++) = w2(j, h);
    p(o++) = b2(0);
    p(o++) = b2(1);
    return p;
  }

  void assign(const VectorS& p) {
    if (p.size() != parameter_count()) throw ValidationError("weights", "parameter count mismatch");
    Index o = 0;
    for (Index h = 0; h < hidden(); ++h)
      for (Index i = 0; i < inputs(); ++i) w1(h, i) = p(o++);
    for (Index h = 0; h < hidden(); ++h) b1(h) = p(o++);
    for (Index j = 0; j < 2; ++j)
      for (Index h = 0; h < hidden(); ++h) w2(j, h) = p(o++);
    b2(0) = p(o++);
    b2(1) = p(o++);
  }

  Scalar squared_norm() const {
    return w1.squaredNorm() + b1.squaredNorm() + w2.squaredNorm() + b2.squaredNorm();
  }

  // Row n of the result is f(X.row(n), w).
  MatrixS forward(const MatrixS& x) const {
    MatrixS hid = ((x * w1.transpose()).rowwise() + b1.transpose()).array().tanh().matrix();
    return (hid * w2.transpose()).rowwise() + b2.transpose();
  }
};

using Network = TwoLayerNet<double>;

struct TrainConfig {
  double learning_rate = 1e-2;
  int max_epochs = 2000;
  int patience = 50;
  // Relative loss improvement that resets the plateau counter.
  double plateau_threshold = 1e-5;
  double min_learning_rate = 1e-6;
  double init_scale = 0.1;
  std::uint64_t seed = 0;
  int hidden = 16;
  double prior_precision = 0.1;  // mu
  double noise_precision = 10.0;  // Sigma
  // A training attempt counts as converged once training mAP reaches this.
  double convergence_map = 0.9;
};

inline constexpr double kLearningRateDecay = 10.0;

void validate(const TrainConfig& cfg);

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double learning_rate = 0.0;
  double confidence = 0.0;
  double train_map = 0.0;
};

struct TrainTrace {
  std::vector<EpochRecord> epochs;
  int converged_epoch = -1;  // first epoch whose training mAP reached the threshold
  std::string stop_reason;

  bool converged() const noexcept { return converged_epoch >= 0; }
};

struct PredictiveOutput {
  int cls = kReal;
  double confidence = 0.0;       // t_c, the winning output
  Eigen::Vector2d outputs;       // (t_real, t_fake)
  Eigen::Vector2d variance;      // sigma^2 per output
};

class BayesianClassifier {
 public:
  BayesianClassifier() = default;
  BayesianClassifier(Network net, double prior_precision, double noise_precision);

  const Network& network() const noexcept { return net_; }
  double prior_precision() const noexcept { return mu_; }
  double noise_precision() const noexcept { return sigma_; }
  bool trained() const noexcept { return trained_; }
  const TrainConfig& config() const noexcept { return config_; }
  double training_confidence() const noexcept { return training_confidence_; }
  // Lower Cholesky factor L of A = mu I + Sigma H_GN (A = L L^T).
  const Matrix& hessian_factor() const noexcept { return factor_; }

  // N x 2 network outputs.
  Matrix outputs(const Matrix& x) const { return net_.forward(x); }

  // Computes and stores the factor of A at the current weights.
  void fit_laplace(const Matrix& x);
  // Restores a trained model from stored parts (model file loading).
  void restore(const TrainConfig& cfg, const Matrix& factor, double training_confidence);

  void set_config(const TrainConfig& cfg) { config_ = cfg; }

 private:
  Network net_;
  double mu_ = 0.1;
  double sigma_ = 10.0;
  TrainConfig config_;
  Matrix factor_;
  double training_confidence_ = 0.0;
  bool trained_ = false;
};

// One-hot targets: real -> (1, 0), fake -> (0, 1).
Matrix one_hot_targets(const Labels& labels);

// (Sigma / 2) sum_n ||t_n - f(x_n, w)||^2 + (mu / 2) ||w||^2
double map_objective(const Network& net, const Matrix& x, const Matrix& targets,
                     double prior_precision, double noise_precision);

// Exact gradient of map_objective, in flat parameter order.
Vector gradient(const Network& net, const Matrix& x, const Matrix& targets,
                double prior_precision, double noise_precision);

// 2 x P Jacobian of f(x, w) with respect to w at a single input.
Eigen::Matrix<double, 2, Eigen::Dynamic> output_jacobian(const Network& net, const Vector& x);

// sum_n J_n^T J_n over the rows of x.
Matrix gauss_newton(const Network& net, const Matrix& x);

struct TrainResult {
  BayesianClassifier model;
  TrainTrace trace;
};

// Full-batch gradient descent on the MAP objective with a plateau scheduler
// dividing the learning rate by 10, followed by the Laplace factorization.
// The step applied is lr * gradient / N.
TrainResult train(const Matrix& x, const Labels& labels, const TrainConfig& cfg);
TrainResult train(const ProjectedMatrix& x, const Labels& labels, const TrainConfig& cfg);

// Class is the argmax output, ties going to real (index 0).
PredictiveOutput predict(const BayesianClassifier& model, const Vector& x);
// sigma^2_j = 1 / Sigma + g_j^T A^{-1} g_j with g_j = grad_w f_j at w_MAP.
Eigen::Vector2d predictive_variance(const BayesianClassifier& model, const Vector& x);
// Mean winning output over the rows of x.
double confidence(const BayesianClassifier& model, const Matrix& x);
double confidence_of_outputs(const Matrix& outputs);
Vector fake_scores(const Matrix& outputs);
Labels predicted_classes(const Matrix& outputs);

std::string serialize_model(const BayesianClassifier& model);
BayesianClassifier deserialize_model(const std::string& blob);
void save_model(const BayesianClassifier& model, const std::string& path);
BayesianClassifier load_model(const std::string& path);

}  // namespace concealfuse

#endif  // CONCEALFUSE_BAYESNET_HPP
