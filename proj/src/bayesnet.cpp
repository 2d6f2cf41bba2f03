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

#include "concealfuse/bayesnet.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "concealfuse/config.hpp"
#include "concealfuse/metrics.hpp"

namespace concealfuse {

using nlohmann::json;

void validate(const TrainConfig& cfg) {
  if (!(cfg.learning_rate > 0.0)) throw ValidationError("learning_rate", "must be positive");
  if (cfg.max_epochs < 1) throw ValidationError("max_epochs", "must be >= 1");
  if (cfg.patience < 1) throw ValidationError("patience", "must be >= 1");
  if (!(cfg.plateau_threshold > 0.0)) throw ValidationError("plateau_threshold", "must be positive");
  if (!(cfg.min_learning_rate > 0.0)) throw ValidationError("min_learning_rate", "must be positive");
  if (!(cfg.init_scale > 0.0)) throw ValidationError("init_scale", "must be positive");
  if (cfg.hidden < 1) throw ValidationError("hidden", "must be >= 1");
  if (!(cfg.prior_precision > 0.0)) throw ValidationError("prior_precision", "must be positive");
  if (!(cfg.noise_precision > 0.0)) throw ValidationError("noise_precision", "must be positive");
}

BayesianClassifier::BayesianClassifier(Network net, double prior_precision, double noise_precision)
    : net_(std::move(net)), mu_(prior_precision), sigma_(noise_precision) {
  if (!(mu_ > 0.0)) throw ValidationError("prior_precision", "must be positive");
  if (!(sigma_ > 0.0)) throw ValidationError("noise_precision", "must be positive");
}

Matrix one_hot_targets(const Labels& labels) {
  Matrix t = Matrix::Zero(labels.size(), 2);
  for (Index n = 0; n < labels.size(); ++n) {
    if (labels(n) != kReal && labels(n) != kFake)
      throw ValidationError("labels", "labels must be 0 (real) or 1 (fake)");
    t(n, labels(n)) = 1.0;
  }
  return t;
}

namespace {

void check_dataset(const Network& net, const Matrix& x, const Matrix& targets) {
  if (x.rows() == 0) throw ValidationError("dataset", "empty dataset");
  if (x.rows() != targets.rows()) throw ValidationError("targets", "row count differs from inputs");
  if (targets.cols() != 2) throw ValidationError("targets", "expected 2 columns");
  if (x.cols() != net.inputs()) throw ValidationError("inputs", "dimension differs from network");
}

struct ForwardPass {
  Matrix hidden;
  Matrix out;
};

ForwardPass forward_pass(const Network& net, const Matrix& x) {
  ForwardPass fp;
  fp.hidden = ((x * net.w1.transpose()).rowwise() + net.b1.transpose()).array().tanh().matrix();
  fp.out = (fp.hidden * net.w2.transpose()).rowwise() + net.b2.transpose();
  return fp;
}

double objective_from(const Network& net, const Matrix& out, const Matrix& targets, double mu,
                      double sigma) {
  return 0.5 * sigma * (targets - out).squaredNorm() + 0.5 * mu * net.squared_norm();
}

Network gradient_network(const Network& net, const Matrix& x, const ForwardPass& fp,
                         const Matrix& targets, double mu, double sigma) {
  const Matrix d_out = sigma * (fp.out - targets);  // N x 2
  Network g(net.inputs(), net.hidden());
  g.w2 = d_out.transpose() * fp.hidden + mu * net.w2;
  g.b2 = d_out.colwise().sum().transpose() + mu * net.b2;
  const Matrix d_hidden =
      ((d_out * net.w2).array() * (1.0 - fp.hidden.array().square())).matrix();  // N x H
  g.w1 = d_hidden.transpose() * x + mu * net.w1;
  g.b1 = d_hidden.colwise().sum().transpose() + mu * net.b1;
  return g;
}

}  // namespace

double map_objective(const Network& net, const Matrix& x, const Matrix& targets,
                     double prior_precision, double noise_precision) {
  check_dataset(net, x, targets);
  return objective_from(net, net.forward(x), targets, prior_precision, noise_precision);
}

Vector gradient(const Network& net, const Matrix& x, const Matrix& targets, double prior_precision,
                double noise_precision) {
  check_dataset(net, x, targets);
  return gradient_network(net, x, forward_pass(net, x), targets, prior_precision, noise_precision)
      .flatten();
}

Eigen::Matrix<double, 2, Eigen::Dynamic> output_jacobian(const Network& net, const Vector& x) {
  if (x.size() != net.inputs()) throw ValidationError("inputs", "dimension differs from network");
  const Index in = net.inputs();
  const Index hid = net.hidden();
  const Vector h = (net.w1 * x + net.b1).array().tanh().matrix();
  const Vector slope = 1.0 - h.array().square();
  Eigen::Matrix<double, 2, Eigen::Dynamic> j =
      Eigen::Matrix<double, 2, Eigen::Dynamic>::Zero(2, net.parameter_count());
  for (Index out = 0; out < 2; ++out) {
    Index o = 0;
    for (Index k = 0; k < hid; ++k) {
      const double back = net.w2(out, k) * slope(k);
      for (Index i = 0; i < in; ++i) j(out, o++) = back * x(i);
    }
    for (Index k = 0; k < hid; ++k) j(out, o++) = net.w2(out, k) * slope(k);
    o += out * hid;
    for (Index k = 0; k < hid; ++k) j(out, o + k) = h(k);
    j(out, hid * in + hid + 2 * hid + out) = 1.0;
  }
  return j;
}

Matrix gauss_newton(const Network& net, const Matrix& x) {
  const Index p = net.parameter_count();
  Matrix h = Matrix::Zero(p, p);
  for (Index n = 0; n < x.rows(); ++n) {
    const Matrix jt = output_jacobian(net, x.row(n).transpose()).transpose();  // P x 2
    h.selfadjointView<Eigen::Lower>().rankUpdate(jt);
  }
  h.triangularView<Eigen::StrictlyUpper>() = h.transpose().triangularView<Eigen::StrictlyUpper>();
  return h;
}

void BayesianClassifier::fit_laplace(const Matrix& x) {
  Matrix a = sigma_ * gauss_newton(net_, x);
  a.diagonal().array() += mu_;
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success)
    throw RuntimeFailure("Cholesky factorization of the posterior precision failed");
  factor_ = llt.matrixL();
  trained_ = true;
  training_confidence_ = confidence_of_outputs(outputs(x));
}

void BayesianClassifier::restore(const TrainConfig& cfg, const Matrix& factor,
                                 double training_confidence) {
  if (factor.rows() != net_.parameter_count() || factor.cols() != net_.parameter_count())
    throw ValidationError("hessian_factor", "dimension differs from parameter count");
  if ((factor.diagonal().array() <= 0.0).any())
    throw ValidationError("hessian_factor", "diagonal must be positive");
  config_ = cfg;
  factor_ = factor;
  factor_.triangularView<Eigen::StrictlyUpper>().setZero();
  training_confidence_ = training_confidence;
  trained_ = true;
}

TrainResult train(const ProjectedMatrix& x, const Labels& labels, const TrainConfig& cfg) {
  return train(x.values, labels, cfg);
}

TrainResult train(const Matrix& x, const Labels& labels, const TrainConfig& cfg) {
  validate(cfg);
  if (x.rows() < 2) throw ValidationError("dataset", "need at least 2 samples");
  if (x.rows() != labels.size()) throw ValidationError("labels", "count differs from inputs");
  const Index n_fake = (labels.array() == kFake).count();
  if (n_fake == 0 || n_fake == labels.size())
    throw ValidationError("labels", "both classes must be present");
  if (!x.allFinite()) throw ValidationError("inputs", "non-finite entries");

  const Matrix targets = one_hot_targets(labels);
  const double mu = cfg.prior_precision;
  const double sigma = cfg.noise_precision;
  const double n = static_cast<double>(x.rows());

  Network net(x.cols(), cfg.hidden);
  {
    Rng rng(cfg.seed);
    std::uniform_real_distribution<double> init(-cfg.init_scale, cfg.init_scale);
    Vector p(net.parameter_count());
    for (Index i = 0; i < p.size(); ++i) p(i) = init(rng);
    net.assign(p);
  }

  TrainTrace trace;
  double lr = cfg.learning_rate;
  double best = std::numeric_limits<double>::infinity();
  int stale = 0;
  trace.stop_reason = "max_epochs";
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const ForwardPass fp = forward_pass(net, x);
    const double loss = objective_from(net, fp.out, targets, mu, sigma);
    if (!std::isfinite(loss)) {
      throw RuntimeFailure("training diverged at epoch " + std::to_string(epoch) +
                           " (learning rate " + std::to_string(lr) + ")");
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = loss;
    rec.learning_rate = lr;
    rec.confidence = confidence_of_outputs(fp.out);
    rec.train_map = mean_average_precision(fake_scores(fp.out), labels);
    trace.epochs.push_back(rec);
    if (trace.converged_epoch < 0 && rec.train_map >= cfg.convergence_map) trace.converged_epoch = epoch;

    const Network g = gradient_network(net, x, fp, targets, mu, sigma);
    const double step = lr / n;
    net.w1 -= step * g.w1;
    net.b1 -= step * g.b1;
    net.w2 -= step * g.w2;
    net.b2 -= step * g.b2;

    if (loss < best * (1.0 - cfg.plateau_threshold)) {
      best = loss;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      lr /= kLearningRateDecay;
      stale = 0;
      // Relative slack so that lr0 / 10^k compares equal to a decimal min_learning_rate.
      if (lr < cfg.min_learning_rate * (1.0 - 1e-9)) {
        trace.stop_reason = "min_learning_rate";
        break;
      }
    }
  }

  BayesianClassifier model(std::move(net), mu, sigma);
  model.set_config(cfg);
  model.fit_laplace(x);
  return {std::move(model), std::move(trace)};
}

PredictiveOutput predict(const BayesianClassifier& model, const Vector& x) {
  if (!model.trained()) throw ValidationError("model", "model is not trained");
  if (x.size() != model.network().inputs())
    throw ValidationError("inputs", "dimension differs from network");
  PredictiveOutput p;
  p.outputs = model.network().forward(x.transpose()).row(0).transpose();
  p.cls = p.outputs(1) > p.outputs(0) ? kFake : kReal;
  p.confidence = p.outputs(p.cls);
  p.variance = predictive_variance(model, x);
  return p;
}

Eigen::Vector2d predictive_variance(const BayesianClassifier& model, const Vector& x) {
  if (!model.trained()) throw ValidationError("model", "model is not trained");
  const auto j = output_jacobian(model.network(), x);
  const Matrix& l = model.hessian_factor();
  Eigen::Vector2d var;
  for (Index out = 0; out < 2; ++out) {
    const Vector v = l.triangularView<Eigen::Lower>().solve(j.row(out).transpose());
    var(out) = 1.0 / model.noise_precision() + v.squaredNorm();
  }
  return var;
}

double confidence_of_outputs(const Matrix& outputs) {
  if (outputs.rows() == 0) throw ValidationError("inputs", "empty matrix");
  return outputs.rowwise().maxCoeff().mean();
}

double confidence(const BayesianClassifier& model, const Matrix& x) {
  if (x.rows() == 0) throw ValidationError("inputs", "empty matrix");
  return confidence_of_outputs(model.outputs(x));
}

Vector fake_scores(const Matrix& outputs) { return outputs.col(1) - outputs.col(0); }

Labels predicted_classes(const Matrix& outputs) {
  Labels c(outputs.rows());
  for (Index n = 0; n < outputs.rows(); ++n) c(n) = outputs(n, 1) > outputs(n, 0) ? kFake : kReal;
  return c;
}

std::string serialize_model(const BayesianClassifier& model) {
  const Network& net = model.network();
  json w1 = json::array();
  for (Index h = 0; h < net.hidden(); ++h) {
    std::vector<double> row;
    for (Index i = 0; i < net.inputs(); ++i) row.push_back(net.w1(h, i));
    w1.push_back(row);
  }
  json w2 = json::array();
  for (Index j = 0; j < 2; ++j) {
    std::vector<double> row;
    for (Index h = 0; h < net.hidden(); ++h) row.push_back(net.w2(j, h));
    w2.push_back(row);
  }
  std::vector<double> lower;
  const Matrix& l = model.hessian_factor();
  for (Index r = 0; r < l.rows(); ++r)
    for (Index c = 0; c <= r; ++c) lower.push_back(l(r, c));
  json doc{
      {"config", to_json(model.config())},
      {"input_dim", net.inputs()},
      {"hidden", net.hidden()},
      {"weights",
       {{"w1", w1},
        {"b1", std::vector<double>(net.b1.data(), net.b1.data() + net.b1.size())},
        {"w2", w2},
        {"b2", std::vector<double>{net.b2(0), net.b2(1)}}}},
      {"mu", model.prior_precision()},
      {"sigma_precision", model.noise_precision()},
      {"hessian_factor", lower},
      {"training_confidence", model.training_confidence()},
      {"trained", model.trained()},
  };
  return doc.dump(1);
}

BayesianClassifier deserialize_model(const std::string& blob) {
  json doc;
  try {
    doc = json::parse(blob);
  } catch (const json::parse_error& e) {
    throw ValidationError("model", std::string("malformed JSON: ") + e.what());
  }
  try {
    const Index in = doc.at("input_dim").get<Index>();
    const Index hid = doc.at("hidden").get<Index>();
    if (in < 1 || hid < 1) throw ValidationError("model", "invalid dimensions");
    Network net(in, hid);
    const auto& w = doc.at("weights");
    const auto w1 = w.at("w1").get<std::vector<std::vector<double>>>();
    const auto b1 = w.at("b1").get<std::vector<double>>();
    const auto w2 = w.at("w2").get<std::vector<std::vector<double>>>();
    const auto b2 = w.at("b2").get<std::vector<double>>();
    if (static_cast<Index>(w1.size()) != hid || static_cast<Index>(b1.size()) != hid ||
        w2.size() != 2 || b2.size() != 2)
      throw ValidationError("weights", "shape mismatch");
    for (Index h = 0; h < hid; ++h) {
      if (static_cast<Index>(w1[h].size()) != in) throw ValidationError("weights.w1", "ragged row");
      for (Index i = 0; i < in; ++i) net.w1(h, i) = w1[h][i];
      net.b1(h) = b1[h];
    }
    for (Index j = 0; j < 2; ++j) {
      if (static_cast<Index>(w2[j].size()) != hid) throw ValidationError("weights.w2", "ragged row");
      for (Index h = 0; h < hid; ++h) net.w2(j, h) = w2[j][h];
      net.b2(j) = b2[j];
    }
    BayesianClassifier model(std::move(net), doc.at("mu").get<double>(),
                             doc.at("sigma_precision").get<double>());
    const TrainConfig cfg = train_config_from_json(doc.at("config"));
    if (doc.value("trained", false)) {
      const auto lower = doc.at("hessian_factor").get<std::vector<double>>();
      const Index p = model.network().parameter_count();
      if (static_cast<Index>(lower.size()) != p * (p + 1) / 2)
        throw ValidationError("hessian_factor", "expected lower-triangular array of the parameter count");
      Matrix l = Matrix::Zero(p, p);
      std::size_t o = 0;
      for (Index r = 0; r < p; ++r)
        for (Index c = 0; c <= r; ++c) l(r, c) = lower[o++];
      model.restore(cfg, l, doc.at("training_confidence").get<double>());
    } else {
      model.set_config(cfg);
    }
    return model;
  } catch (const json::exception& e) {
    throw ValidationError("model", std::string("malformed model file: ") + e.what());
  }
}

void save_model(const BayesianClassifier& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("model", "cannot write " + path);
  out << serialize_model(model) << '\n';
}

BayesianClassifier load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("model", "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize_model(ss.str());
}

}  // namespace concealfuse
