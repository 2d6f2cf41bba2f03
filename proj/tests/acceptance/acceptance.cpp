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

// Acceptance runner: one line per criterion, PASS / FAIL, or XFAIL / XPASS
// for criteria listed in known_failures.txt. Exits non-zero on FAIL or XPASS.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "../cli_runner.hpp"
#include "../fixtures.hpp"
#include "concealfuse/attacks.hpp"
#include "concealfuse/bayesnet.hpp"
#include "concealfuse/conceal.hpp"
#include "concealfuse/io.hpp"
#include "concealfuse/keyspace.hpp"
#include "concealfuse/metrics.hpp"
#include "concealfuse/pipeline.hpp"
#include "concealfuse/studies.hpp"

using namespace concealfuse;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double budget_seconds;
  std::function<Outcome()> run;
};

int threads() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os.precision(digits);
  os << v;
  return os.str();
}

std::string join(const std::vector<double>& v, int digits = 3) {
  std::string out;
  for (double x : v) out += (out.empty() ? "" : " ") + fmt(x, digits);
  return out;
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Seed-mean of `metric` at every parameter of the study, in study order.
std::vector<double> mean_curve(const StudyResult& r, const std::string& metric) {
  std::vector<double> out;
  for (const auto& p : r.parameters()) out.push_back(mean(r.values(metric, p)));
  return out;
}

Vector as_vector(const std::vector<double>& v) { return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size())); }

std::vector<double> sweep_values(int first, int last) {
  std::vector<double> out;
  for (int v = first; v <= last; ++v) out.push_back(v);
  return out;
}

// ---- individual criteria -------------------------------------------------

Outcome projection_oracle() {
  Rng rng(1);
  std::uniform_int_distribution<int> models(1, 6), degree(1, 8), rows(1, 40);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int k = models(rng);
    const FusionKey key = generate_key(k, degree(rng), derive_seed(7, static_cast<std::uint64_t>(trial)));
    Matrix m(rows(rng), 2 * k);
    for (Index r = 0; r < m.rows(); ++r)
      for (int j = 0; j < k; ++j) {
        m(r, 2 * j + 1) = u(rng);
        m(r, 2 * j) = 1.0 - m(r, 2 * j + 1);
      }
    const Matrix got = project_matrix(PosteriorMatrix(m), key).values;
    for (Index r = 0; r < m.rows(); ++r)
      for (Index c = 0; c < m.cols(); ++c) {
        const ModelKey& mk = key.model_keys[static_cast<std::size_t>(c / 2)];
        long double ref = 0.0L;
        for (std::size_t i = 0; i < mk.alphas.size(); ++i) {
          long double power = 1.0L;
          for (int e = 0; e < mk.betas[i]; ++e) power *= m(r, c);
          ref += mk.alphas[i] * power;
        }
        const double err = static_cast<double>(std::abs(got(r, c) - ref) / std::max(1.0L, std::abs(ref)));
        worst = std::max(worst, err);
      }
  }
  return {worst <= 1e-12, "worst relative error " + fmt(worst, 3) + " over 1000 (key, matrix) pairs"};
}

Outcome identity_equivalence() {
  PipelineConfig cfg = fixtures::fusion().with_seed(0);
  cfg.key.identity = true;
  const DataSplit data = prepare_data(cfg);
  const FitOutput fit = fit_pipeline(cfg, data.train);
  const double keyed = evaluate(fit.pipeline, data.test).fusion_map;
  const TrainResult raw = train(fit.train_posteriors, data.train.labels, cfg.head);
  const Matrix test_post = bank_posteriors(fit.pipeline.bank, data.test.pixels).values();
  const double unprotected = mean_average_precision(fake_scores(raw.model.outputs(test_post)), data.test.labels);
  const double diff = std::abs(keyed - unprotected);
  return {diff <= 1e-12, "identity-key mAP " + fmt(keyed, 6) + ", unprotected " + fmt(unprotected, 6) +
                             ", |diff| " + fmt(diff, 3)};
}

Outcome gradient_check() {
  Rng rng(3);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const Index inputs = 1 + trial % 4, hidden = 1 + trial % 5, n = 3 + trial % 6;
    Matrix x(n, inputs);
    for (Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
    Labels y(n);
    for (Index i = 0; i < n; ++i) y(i) = static_cast<int>(i % 2);
    const Matrix t = one_hot_targets(y);
    Network net(inputs, hidden);
    Vector w(net.parameter_count());
    for (Index i = 0; i < w.size(); ++i) w(i) = u(rng);
    net.assign(w);
    const Vector analytic = gradient(net, x, t, 0.1, 10.0);
    Vector fd(w.size());
    for (Index i = 0; i < w.size(); ++i) {
      Network a = net, b = net;
      Vector wa = w, wb = w;
      wa(i) += 1e-6;
      wb(i) -= 1e-6;
      a.assign(wa);
      b.assign(wb);
      fd(i) = (map_objective(a, x, t, 0.1, 10.0) - map_objective(b, x, t, 0.1, 10.0)) / 2e-6;
    }
    worst = std::max(worst, (analytic - fd).norm() / std::max(fd.norm(), 1e-12));
  }
  return {worst < 1e-6, "worst relative error " + fmt(worst, 3) + " over 50 instances"};
}

Outcome laplace_oracle() {
  // K = 1: two posterior columns in, H = 2.
  Rng rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Index n = 60;
  Matrix x(n, 2);
  Labels y(n);
  for (Index i = 0; i < n; ++i) {
    y(i) = static_cast<int>(i % 2);
    const double p = std::clamp((y(i) == kFake ? 0.7 : 0.3) + 0.4 * (u(rng) - 0.5), 0.0, 1.0);
    x(i, 1) = p;
    x(i, 0) = 1.0 - p;
  }
  const FusionKey key = generate_key(1, 3, 4);
  const Matrix xp = project_matrix(PosteriorMatrix(x), key).values;
  TrainConfig cfg;
  cfg.hidden = 2;
  cfg.seed = 4;
  const TrainResult r = train(xp, y, cfg);
  const Network& net = r.model.network();
  const Vector w = net.flatten();
  const Index p = w.size();
  auto jacobian = [&](const Vector& in) {
    Matrix j(2, p);
    for (Index i = 0; i < p; ++i) {
      Network a = net, b = net;
      Vector wa = w, wb = w;
      wa(i) += 1e-6;
      wb(i) -= 1e-6;
      a.assign(wa);
      b.assign(wb);
      j.col(i) = (a.forward(in.transpose()).row(0) - b.forward(in.transpose()).row(0)).transpose() / 2e-6;
    }
    return j;
  };
  Matrix a = r.model.prior_precision() * Matrix::Identity(p, p);
  for (Index i = 0; i < n; ++i) {
    const Matrix j = jacobian(xp.row(i).transpose());
    a += r.model.noise_precision() * j.transpose() * j;
  }
  const Matrix l_inv_t = Eigen::LLT<Matrix>(a).matrixU().solve(Matrix::Identity(p, p));
  std::normal_distribution<double> g(0.0, 1.0);
  double worst = 0.0;
  for (Index probe : {Index{0}, Index{1}, Index{17}, Index{42}}) {
    const Vector in = xp.row(probe).transpose();
    const Matrix j = jacobian(in);
    Eigen::Vector2d sum = Eigen::Vector2d::Zero(), sum_sq = Eigen::Vector2d::Zero();
    const int samples = 100000;
    Vector z(p);
    for (int s = 0; s < samples; ++s) {
      for (Index k = 0; k < p; ++k) z(k) = g(rng);
      const Eigen::Vector2d df = j * (l_inv_t * z);
      sum += df;
      sum_sq += df.cwiseProduct(df);
    }
    const Eigen::Vector2d mc = (sum_sq - sum.cwiseProduct(sum) / samples) / (samples - 1) +
                               Eigen::Vector2d::Constant(1.0 / r.model.noise_precision());
    const Eigen::Vector2d analytic = predictive_variance(r.model, in);
    for (int k = 0; k < 2; ++k) worst = std::max(worst, std::abs(analytic(k) - mc(k)) / mc(k));
  }
  return {worst <= 0.05, "worst relative gap " + fmt(worst, 3) + " at 4 probes, 1e5 samples each"};
}

// AP as an exact fraction over the common denominator lcm(1..12); ranks are
// counted pairwise, ties going to the lower index.
constexpr long long kLcm = 27720;

std::pair<long long, long long> exact_ap(const std::vector<double>& s, const std::vector<int>& y, int positive) {
  long long total = 0, positives = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != positive) continue;
    ++positives;
    long long rank = 1, hits = 1;
    for (std::size_t j = 0; j < s.size(); ++j)
      if (j != i && (s[j] > s[i] || (s[j] == s[i] && j < i))) {
        ++rank;
        hits += y[j] == positive;
      }
    total += hits * (kLcm / rank);
  }
  return {total, kLcm * positives};
}

Outcome map_oracle() {
  Rng rng(5);
  std::uniform_int_distribution<int> level(0, 3);  // coarse levels force ties
  std::uniform_real_distribution<double> cont(0.0, 1.0);
  // Floating evaluation of an exact fraction: allow two roundings.
  const double kRounding = 4 * std::numeric_limits<double>::epsilon();
  long sets = 0, mismatches = 0;
  double worst = 0.0;
  for (int n = 2; n <= 12; ++n)
    for (unsigned mask = 0; mask < (1u << n); ++mask) {
      std::vector<int> y(n);
      for (int i = 0; i < n; ++i) y[i] = (mask >> i) & 1u;
      const long fakes = std::count(y.begin(), y.end(), 1);
      if (fakes == 0 || fakes == n) continue;
      std::vector<double> s(n), neg(n);
      for (int i = 0; i < n; ++i) {
        s[i] = (mask & 1u) ? level(rng) / 3.0 : cont(rng);
        neg[i] = -s[i];
      }
      const auto [fn, fd] = exact_ap(s, y, kFake);
      const auto [rn, rd] = exact_ap(neg, y, kReal);
      const double ref = static_cast<double>(fn * rd + rn * fd) / static_cast<double>(2 * fd * rd);
      const Labels yl = Eigen::Map<const Labels>(y.data(), n);
      const double got = mean_average_precision(Eigen::Map<const Vector>(s.data(), n), yl);
      worst = std::max(worst, std::abs(got - ref));
      mismatches += std::abs(got - ref) > kRounding;
      ++sets;
    }
  std::normal_distribution<double> g(0.0, 1.0);
  long variant = 0;
  for (int t = 0; t < 100; ++t) {
    const Index n = 10 + t;
    Vector s(n);
    Labels y(n);
    for (Index i = 0; i < n; ++i) {
      s(i) = g(rng);
      y(i) = static_cast<int>(i % 2);
    }
    const double base = mean_average_precision(s, y);
    variant += mean_average_precision(Vector(s.array().exp()), y) != base;
    variant += mean_average_precision(Vector(s.array().atan() * 3.0 + 1.0), y) != base;
  }
  return {mismatches == 0 && variant == 0, std::to_string(sets) + " labelled sets, " + std::to_string(mismatches) +
                                               " oracle mismatches (worst gap " + fmt(worst, 3) + "), " + std::to_string(variant) +
                                               " monotone-transform changes"};
}

Outcome fusion_advantage() {
  const StudyResult r = split_sweep(fixtures::fusion(), {0.1}, seed_range(0, 10), threads());
  int wins = 0;
  std::vector<double> margins;
  for (const auto& row : r.rows) {
    const double margin = row.values[r.metric_index("fusion_map")] - row.values[r.metric_index("best_single_map")];
    wins += margin >= 0.0;
    margins.push_back(margin);
  }
  return {wins >= 8, std::to_string(wins) + "/10 seeds with fusion >= best single; margins " + join(margins)};
}

Outcome key_requirement() {
  const StudyResult r = wrong_key_study(fixtures::fusion(), seed_range(0, 10), threads());
  int low = 0, clean_ok = 0;
  std::vector<double> decoy;
  for (const auto& row : r.rows) {
    const double d = row.values[r.metric_index("random_decoy_map")];
    low += d <= 0.65;
    clean_ok += row.values[r.metric_index("clean_map")] >= 0.9;
    decoy.push_back(d);
  }
  return {low >= 9 && clean_ok == 10, "random decoy <= 0.65 in " + std::to_string(low) + "/10 seeds, clean >= 0.9 in " +
                                          std::to_string(clean_ok) + "/10; decoy mAPs " + join(decoy)};
}

Outcome key_length_trend() {
  KeyLengthOptions opts;  // degrees 1, 3, 7, 15 with K = 6: P = 12, 36, 84, 180
  const StudyResult r = key_length_study(fixtures::fusion(), opts, seed_range(0, 10), threads());
  std::vector<double> medians;
  for (const auto& p : r.parameters()) medians.push_back(median(r.values("attempts", p)));
  bool monotone = true;
  for (std::size_t i = 1; i < medians.size(); ++i) monotone = monotone && medians[i] >= medians[i - 1];
  const std::vector<double> p36 = r.values("attempts", "36");
  const long first = std::count(p36.begin(), p36.end(), 1.0);
  return {monotone && first >= 8, "median attempts at P=12,36,84,180: " + join(medians) + "; P=36 first-attempt " +
                                      std::to_string(first) + "/10"};
}

Outcome trace_coupling() {
  const StudyResult r = train_trace_study(fixtures::fusion().with_seed(0));
  std::vector<double> loss, conf;
  for (const auto& row : r.rows) {
    loss.push_back(row.values[r.metric_index("loss")]);
    conf.push_back(row.values[r.metric_index("confidence")]);
  }
  const double rho = spearman(moving_average(as_vector(loss), 25), moving_average(as_vector(conf), 25));
  return {rho <= -0.8, "Spearman " + fmt(rho) + " over " + std::to_string(r.rows.size()) + " epochs"};
}

Outcome poisoning_trend() {
  AttackConfig a;
  a.kind = AttackKind::poisoning;
  const std::vector<double> props{0.1, 0.2, 0.3, 0.4, 0.5};
  const StudyResult r = attack_sweep(fixtures::attack(), a, props, seed_range(0, 10), threads());
  const std::vector<double> rate = mean_curve(r, "success_rate"), acc = mean_curve(r, "training_accuracy");
  const double rho = spearman(as_vector(props), as_vector(rate));
  bool nonincreasing = true;
  for (std::size_t i = 1; i < acc.size(); ++i) nonincreasing = nonincreasing && acc[i] <= acc[i - 1];
  return {rho >= 0.8 && nonincreasing,
          "Spearman " + fmt(rho) + "; mean success " + join(rate) + "; mean training accuracy " + join(acc)};
}

Outcome perturbation_gap() {
  AttackConfig a;
  a.kind = AttackKind::perturbation;
  a.noise_sigma = 0.5;
  a.blur_radius = 2;
  const StudyResult r = attack_sweep(fixtures::attack(), a, {}, seed_range(0, 10), threads());
  int below = 0;
  for (const auto& row : r.rows) {
    const double sc = row.values[r.metric_index("success_confidence")];
    below += !std::isnan(sc) && sc < row.values[r.metric_index("training_confidence")];
  }
  return {below >= 9, "success confidence below training confidence in " + std::to_string(below) +
                          "/10 seeds; mean success rate " + fmt(mean_curve(r, "success_rate")[0], 3)};
}

Outcome reverse_majority() {
  AttackConfig a;
  a.kind = AttackKind::reverse;
  a.reverse_mode = ReverseMode::weight_surgery;
  const StudyResult r = attack_sweep(fixtures::attack(), a, sweep_values(1, 6), seed_range(0, 10), threads());
  const std::vector<double> rate = mean_curve(r, "success_rate"), tc = mean_curve(r, "training_confidence");
  bool early = false, late = false;
  for (std::size_t i = 0; i < rate.size(); ++i) {
    const bool crosses = rate[i] >= tc[i];
    (i + 1 <= 3 ? early : late) |= crosses;
  }
  return {!early && late, "mean success rate m=1..6: " + join(rate) + "; training confidence " + fmt(tc[0], 3)};
}

Outcome backdoor_growth() {
  AttackConfig a;
  a.kind = AttackKind::backdoor;
  const std::vector<double> ms = sweep_values(1, 6);
  const StudyResult r = attack_sweep(fixtures::attack(), a, ms, seed_range(0, 10), threads());
  const std::vector<double> sc = mean_curve(r, "success_confidence");
  const double rho = spearman(as_vector(ms), as_vector(sc));
  return {rho >= 0.8, "Spearman " + fmt(rho) + "; mean success confidence " + join(sc) + "; mean success rate " +
                          join(mean_curve(r, "success_rate"))};
}

// Every subcommand, twice, in separate directories.
Outcome cli_determinism() {
  using concealfuse::testing::run_cli;
  using concealfuse::testing::ScratchDir;
  const std::vector<std::string> steps = {
      "--seed 3 keygen --out key.json",
      "--seed 4 gen-data --n 200 --gamma 0.8 --out data.bin",
      "--seed 5 train-bank --data data.bin --out bank.json",
      "posteriors --bank bank.json --data data.bin --out post.csv",
      "project --in post.csv --key key.json --out proj.csv",
      "--seed 6 train --in proj.csv --out model.json --trace trace.csv",
      "predict --model model.json --in proj.csv --out scores.csv",
      "evaluate --scores scores.csv --out eval_scores.csv",
      "--seed 7 evaluate --config pipe.json --save-pipeline pipe.out.json --out eval_pipe.csv",
      "--seed 7 attack --config attack.json --pipeline pipe.json --out report.csv",
      "--seed 8 --threads 2 study --kind split_sweep --config pipe.json --seeds 2 --fractions 0.3 0.6 --out sweep.csv",
      "--seed 8 study --kind wrong_key --config pipe.json --seeds 1 --out wk.csv",
      "--seed 8 study --kind train_trace --config pipe.json --out tt.csv",
      "--seed 8 study --kind key_length --config pipe.json --seeds 1 --degrees 1 3 --out kl.csv",
      "--seed 8 study --kind attack_sweep --config pipe.json --attack attack.json --seeds 1 --out as.csv"};
  const std::vector<std::string> csvs = {"post.csv",  "proj.csv",   "trace.csv", "scores.csv", "eval_scores.csv",
                                         "eval_pipe.csv", "report.csv", "sweep.csv", "wk.csv",  "tt.csv",
                                         "kl.csv",    "as.csv"};
  const std::vector<std::string> blobs = {"key.json", "data.bin", "bank.json", "model.json", "pipe.out.json"};

  std::vector<std::map<std::string, std::string>> runs;
  for (int rep = 0; rep < 2; ++rep) {
    ScratchDir dir("acceptance_det_" + std::to_string(rep));
    concealfuse::testing::write_text(dir / "pipe.json",
                                     R"({"data": {"n": 200, "gamma": 0.8}, "split": {"train_fraction": 0.5}})");
    concealfuse::testing::write_text(dir / "attack.json", R"({"kind": "backdoor", "sweep": [1, 3]})");
    for (const auto& step : steps)
      if (int code = run_cli(dir, step); code != 0) return {false, "`" + step + "` exited with " + std::to_string(code)};
    std::map<std::string, std::string> out;
    for (const auto& f : csvs) out[f] = csv_body(dir / f);
    for (const auto& f : blobs) out[f] = concealfuse::testing::slurp(dir / f);
    runs.push_back(std::move(out));
  }
  std::string differing;
  for (const auto& [file, content] : runs[0])
    if (content.empty() || runs[1][file] != content) differing += " " + file;
  return {differing.empty(), differing.empty() ? std::to_string(steps.size()) + " invocations, " +
                                                     std::to_string(csvs.size() + blobs.size()) +
                                                     " outputs identical across reruns"
                                               : "differs or empty:" + differing};
}

std::map<int, std::string> known_failures() {
  std::map<int, std::string> out;
  std::ifstream in(CONCEALFUSE_KNOWN_FAILURES);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    std::string tag;
    is >> tag;
    if (tag.rfind("AC", 0) != 0) continue;
    std::string reason;
    std::getline(is, reason);
    out[std::stoi(tag.substr(2))] = reason.substr(reason.find_first_not_of(' ') == std::string::npos
                                                      ? reason.size()
                                                      : reason.find_first_not_of(' '));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "projection matches a naive term-by-term oracle", 5, projection_oracle},
      {2, "identity key reproduces the unprotected pipeline", 30, identity_equivalence},
      {3, "analytic gradient matches central differences", 10, gradient_check},
      {4, "predictive variance matches Monte-Carlo Laplace", 60, laplace_oracle},
      {5, "mAP matches exhaustive enumeration; monotone invariant", 10, map_oracle},
      {6, "fusion beats the best single detector at 10% training data", 300, fusion_advantage},
      {7, "a random decoy key drops mAP to near chance", 300, key_requirement},
      {8, "longer keys need no fewer attempts; P=36 converges at once", 600, key_length_trend},
      {9, "smoothed loss and confidence are anti-correlated", 60, trace_coupling},
      {10, "poisoning success grows with the infection proportion", 600, poisoning_trend},
      {11, "perturbation flips are less confident than training", 300, perturbation_gap},
      {12, "reverse-model success needs a majority of the models", 600, reverse_majority},
      {13, "backdoor confidence grows with attacked models", 600, backdoor_growth},
      {14, "CLI reruns give identical outputs", 60, cli_determinism},
  };
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));

  const auto xfail = known_failures();
  int unexpected = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs < c.budget_seconds;
    const bool pass = o.pass && in_time;
    const bool expected_fail = xfail.count(c.id) > 0;
    const char* verdict = pass ? (expected_fail ? "XPASS" : "PASS") : (expected_fail ? "XFAIL" : "FAIL");
    if ((!pass && !expected_fail) || (pass && expected_fail)) ++unexpected;
    std::printf("AC%02d %-5s %s: %s [%.1f s of %.0f s%s]\n", c.id, verdict, c.name.c_str(), o.detail.c_str(), secs,
                c.budget_seconds, in_time ? "" : ", over budget");
    if (expected_fail && !pass) std::printf("       known failure: %s\n", xfail.at(c.id).c_str());
    std::fflush(stdout);
  }
  return unexpected == 0 ? 0 : 1;
}
