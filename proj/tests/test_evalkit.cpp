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

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <random>
#include <set>

#include "concealfuse/io.hpp"
#include "concealfuse/metrics.hpp"
#include "concealfuse/pipeline.hpp"
#include "concealfuse/studies.hpp"
#include "fixtures.hpp"

using namespace concealfuse;

namespace {

// Exact rational AP: precision at each positive, with ranks counted pairwise
// (j outranks i when its score is higher, or equal with a lower index). Every
// rank is at most 12, so all terms share the denominator lcm(1..12).
constexpr long long kLcm = 27720;

struct Fraction {
  long long num = 0;
  long long den = 1;
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

Fraction oracle_ap(const std::vector<double>& s, const std::vector<int>& y, int positive) {
  const std::size_t n = s.size();
  long long total = 0;
  long long positives = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (y[i] != positive) continue;
    ++positives;
    long long rank = 1, hits = 1;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      if (s[j] > s[i] || (s[j] == s[i] && j < i)) {
        ++rank;
        if (y[j] == positive) ++hits;
      }
    }
    total += hits * (kLcm / rank);
  }
  return {total, kLcm * positives};
}

// mAP as an exact fraction, rounded once at the end.
double oracle_map(const std::vector<double>& s, const std::vector<int>& y) {
  std::vector<double> neg(s.size());
  std::transform(s.begin(), s.end(), neg.begin(), [](double v) { return -v; });
  const Fraction f = oracle_ap(s, y, kFake), r = oracle_ap(neg, y, kReal);
  return static_cast<double>(f.num * r.den + r.num * f.den) / static_cast<double>(2 * f.den * r.den);
}

// Two roundings of a value in [0, 1].
constexpr double kRounding = 4 * std::numeric_limits<double>::epsilon();

Vector to_vector(const std::vector<double>& v) { return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size())); }
Labels to_labels(const std::vector<int>& v) { return Eigen::Map<const Labels>(v.data(), static_cast<Index>(v.size())); }

Labels balanced(int n) {
  Labels y(n);
  for (int i = 0; i < n; ++i) y(i) = i % 2;
  return y;
}

const StudyResult& wrong_key_fixture() {
  static const StudyResult r = wrong_key_study(fixtures::fusion(), seed_range(0, 10));
  return r;
}

std::filesystem::path scratch() {
  auto dir = std::filesystem::temp_directory_path() / "concealfuse_unit";
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_SUITE("evalkit") {

TEST_CASE("average precision worked example") {
  const Vector s = (Vector(4) << 0.9, 0.8, 0.7, 0.1).finished();
  const Labels y = (Labels(4) << 1, 0, 1, 0).finished();
  const ApReport r = average_precision_report(s, y);
  CHECK(r.ap_fake == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
  // Real ranking under -s: 0.1 (real), 0.7, 0.8 (real), 0.9 -> (1 + 2/3) / 2.
  CHECK(r.ap_real == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
  CHECK(std::abs(r.map - oracle_map({0.9, 0.8, 0.7, 0.1}, {1, 0, 1, 0})) <= kRounding);
  CHECK(mean_average_precision((Vector(4) << 0.9, 0.8, 0.2, 0.1).finished(), (Labels(4) << 1, 1, 0, 0).finished()) ==
        1.0);
}

TEST_CASE("ties are broken by sample order") {
  const Vector s = Vector::Constant(4, 0.5);
  CHECK(average_precision(s, (Labels(4) << 1, 1, 0, 0).finished(), kFake) == 1.0);
  CHECK(average_precision(s, (Labels(4) << 0, 0, 1, 1).finished(), kFake) == doctest::Approx((1.0 / 3 + 2.0 / 4) / 2));
}

TEST_CASE("mAP matches the exhaustive oracle for every labelling up to 12 samples") {
  Rng rng(17);
  std::uniform_int_distribution<int> level(0, 4);  // coarse levels force ties
  std::uniform_real_distribution<double> u(0.0, 1.0);
  long checked = 0;
  for (int n = 2; n <= 12; ++n) {
    for (unsigned mask = 0; mask < (1u << n); ++mask) {
      std::vector<int> y(n);
      for (int i = 0; i < n; ++i) y[i] = (mask >> i) & 1u;
      const int fakes = std::count(y.begin(), y.end(), 1);
      if (fakes == 0 || fakes == n) continue;
      std::vector<double> s(n);
      const bool ties = (mask & 1u) != 0;
      for (double& v : s) v = ties ? level(rng) / 4.0 : u(rng);
      const double got = mean_average_precision(to_vector(s), to_labels(y));
      if (std::abs(got - oracle_map(s, y)) > kRounding) {
        FAIL("mismatch at n=" << n << " mask=" << mask);
      }
      ++checked;
    }
  }
  CHECK(checked > 8000);
}

TEST_CASE("mAP is invariant under strictly increasing transforms") {
  Rng rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    const int n = 20 + t;
    Vector s(n);
    for (Index i = 0; i < n; ++i) s(i) = g(rng);
    const Labels y = balanced(n);
    const double base = mean_average_precision(s, y);
    const Vector e = s.array().exp();
    const Vector c = (s.array().pow(3) * 2.0 + 7.0).matrix();
    const Vector a = s.array().atan();
    CHECK(mean_average_precision(e, y) == base);
    CHECK(mean_average_precision(c, y) == base);
    CHECK(mean_average_precision(a, y) == base);
  }
}

TEST_CASE("random scores give chance-level mAP") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Vector s(1000);
    for (Index i = 0; i < s.size(); ++i) s(i) = u(rng);
    const double m = mean_average_precision(s, balanced(1000));
    CHECK(m >= 0.45);
    CHECK(m <= 0.60);
  }
}

TEST_CASE("mAP rejects single-class input") {
  CHECK_THROWS_AS(mean_average_precision(Vector::Ones(3), Labels::Zero(3)), ValidationError);
  CHECK_THROWS_AS(mean_average_precision(Vector::Ones(3), Labels::Ones(3)), ValidationError);
}

TEST_CASE("stratified split") {
  const Labels y = balanced(140);
  SplitSpec spec;
  spec.train_fraction = 0.8;
  spec.seed = 9;
  const SplitIndices s = split(y, spec);
  REQUIRE(s.train.size() == 112);
  REQUIRE(s.test.size() == 28);
  auto fakes = [&](const std::vector<Index>& rows) {
    return std::count_if(rows.begin(), rows.end(), [&](Index r) { return y(r) == kFake; });
  };
  CHECK(fakes(s.train) == 56);
  CHECK(fakes(s.test) == 14);

  std::set<Index> all(s.train.begin(), s.train.end());
  for (Index r : s.test) CHECK(all.insert(r).second);
  CHECK(all.size() == 140);
  CHECK(*all.rbegin() == 139);

  const SplitIndices again = split(y, spec);
  CHECK(again.train == s.train);
  CHECK(again.test == s.test);
  spec.seed = 10;
  CHECK(split(y, spec).train != s.train);

  // Class proportions agree within one sample on odd-sized classes.
  const Labels uneven = (Labels(15) << 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1).finished();
  spec.train_fraction = 0.5;
  const SplitIndices u = split(uneven, spec);
  const double train_fake = static_cast<double>(std::count_if(u.train.begin(), u.train.end(),
                                                              [&](Index r) { return uneven(r) == kFake; }));
  CHECK(std::abs(train_fake - 6.0 * u.train.size() / 15.0) <= 1.0);
}

TEST_CASE("split errors") {
  SplitSpec spec;
  spec.train_fraction = 0.001;
  CHECK_THROWS_AS(split(balanced(140), spec), ValidationError);
  spec.train_fraction = 0.999;
  CHECK_THROWS_AS(split(balanced(140), spec), ValidationError);
  spec.train_fraction = 0.5;
  CHECK_THROWS_AS(split(Labels::Zero(10), spec), ValidationError);
  spec.train_fraction = 1.0;
  CHECK_THROWS_AS(split(balanced(10), spec), ValidationError);
}

TEST_CASE("fusion at a generous split stays close to the best detector") {
  const StudyResult r = split_sweep(fixtures::fusion(), {0.8}, {0});
  REQUIRE(r.rows.size() == 1);
  const double fusion = r.rows[0].values[r.metric_index("fusion_map")];
  const double best = r.rows[0].values[r.metric_index("best_single_map")];
  CHECK(fusion >= best - 0.02);
  CHECK(fusion <= 1.0);
}

TEST_CASE("study rows replay from their seed and config hash") {
  const PipelineConfig base = fixtures::fusion(0.3);
  const StudyResult both = split_sweep(base, {0.3}, {4, 5}, 2);
  const StudyResult alone = split_sweep(base, {0.3}, {5});
  REQUIRE(both.rows.size() == 2);
  const StudyRow& row = both.rows[1];
  CHECK(row.seed == 5);
  PipelineConfig replay = base.with_seed(row.seed);
  CHECK(config_hash(to_json(replay)) == row.config_hash);
  CHECK(alone.rows[0].config_hash == row.config_hash);
  for (std::size_t m = 0; m < row.values.size(); ++m) CHECK(std::abs(alone.rows[0].values[m] - row.values[m]) <= 1e-12);
  CHECK(both.rows[0].config_hash != row.config_hash);
}

TEST_CASE("identity key reproduces the unprotected pipeline") {
  PipelineConfig cfg = fixtures::fusion().with_seed(2);
  cfg.key.identity = true;
  const DataSplit data = prepare_data(cfg);
  const FitOutput fit = fit_pipeline(cfg, data.train);
  const Matrix test_post = bank_posteriors(fit.pipeline.bank, data.test.pixels).values();

  const TrainResult raw = train(fit.train_posteriors, data.train.labels, cfg.head);
  const Matrix raw_out = raw.model.outputs(test_post);
  const Matrix keyed_out = pipeline_outputs(fit.pipeline, data.test.pixels);
  CHECK((raw_out - keyed_out).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(std::abs(mean_average_precision(fake_scores(raw_out), data.test.labels) -
                 evaluate(fit.pipeline, data.test).fusion_map) <= 1e-12);
}

TEST_CASE("identity row of the key-length study matches the unprotected run") {
  KeyLengthOptions opts;
  opts.degrees = {3};
  opts.include_identity = true;
  const StudyResult r = key_length_study(fixtures::fusion(), opts, {0, 1}, 2);
  REQUIRE(r.rows.size() == 4);
  for (const StudyRow& row : r.rows) {
    if (row.parameter == "identity") {
      CHECK(row.values[r.metric_index("attempts")] == row.values[r.metric_index("unprotected_attempts")]);
    } else {
      CHECK(row.parameter == "36");
      CHECK(row.values[r.metric_index("key_length")] == 36.0);
      CHECK(std::isnan(row.values[r.metric_index("unprotected_attempts")]));
    }
    CHECK(row.values[r.metric_index("attempts")] >= 1.0);
    CHECK(row.values[r.metric_index("attempts")] <= 5.0);
  }
  opts.attempt_cap = 0;
  CHECK_THROWS_AS(key_length_study(fixtures::fusion(), opts, {0}), ValidationError);
}

TEST_CASE("training trace") {
  const PipelineConfig cfg = fixtures::fusion().with_seed(0);
  const StudyResult r = train_trace_study(cfg);
  const DataSplit data = prepare_data(cfg);
  const FitOutput fit = fit_pipeline(cfg, data.train);
  REQUIRE(r.rows.size() == fit.trace.epochs.size());
  for (std::size_t i = 0; i < r.rows.size(); ++i) CHECK(r.rows[i].parameter == std::to_string(i));

  const std::size_t conf = r.metric_index("confidence");
  CHECK(r.rows.back().values[conf] > r.rows.front().values[conf]);

  const std::size_t lr = r.metric_index("learning_rate");
  for (std::size_t i = 1; i < r.rows.size(); ++i) {
    const double prev = r.rows[i - 1].values[lr], cur = r.rows[i].values[lr];
    CHECK(cur <= prev);
    if (cur != prev) CHECK(prev / cur == doctest::Approx(10.0));
  }
}

TEST_CASE("wrong-key probe") {
  const PipelineConfig cfg = fixtures::fusion().with_seed(1);
  const DataSplit data = prepare_data(cfg);
  const Pipeline p = fit_pipeline(cfg, data.train).pipeline;
  const Matrix post = bank_posteriors(p.bank, data.test.pixels).values();
  CHECK(wrong_key_probe(p, post, data.test.labels, p.key) == evaluate(p, data.test).fusion_map);

  const FusionKey decoy = random_decoy(p.key, 99);
  CHECK(decoy.degrees() == p.key.degrees());
  CHECK_FALSE(decoy == p.key);
  const FusionKey one = single_beta_decoy(p.key, 99);
  int changed = 0;
  for (std::size_t k = 0; k < one.model_keys.size(); ++k) {
    CHECK(one.model_keys[k].alphas == p.key.model_keys[k].alphas);
    for (std::size_t i = 0; i < one.model_keys[k].betas.size(); ++i)
      changed += one.model_keys[k].betas[i] != p.key.model_keys[k].betas[i];
  }
  CHECK(changed == 1);
  validate(one);

  CHECK_THROWS_AS(wrong_key_probe(p, post, data.test.labels, generate_key(6, 2, 5)), ValidationError);
  CHECK_THROWS_AS(wrong_key_probe(p, post, data.test.labels, generate_key(5, 3, 5)), ValidationError);
}

TEST_CASE("random decoys fall to chance across seeds" * doctest::may_fail()) {
  const StudyResult& r = wrong_key_fixture();
  int low = 0;
  for (const StudyRow& row : r.rows) {
    CHECK(row.values[r.metric_index("clean_map")] >= 0.9);
    CHECK(row.values[r.metric_index("true_key_map")] == row.values[r.metric_index("clean_map")]);
    low += row.values[r.metric_index("random_decoy_map")] <= 0.65;
  }
  CHECK(low >= 9);
}

TEST_CASE("a single changed exponent degrades mAP across seeds" * doctest::may_fail()) {
  const StudyResult& r = wrong_key_fixture();
  int below = 0;
  for (const StudyRow& row : r.rows)
    below += row.values[r.metric_index("single_beta_decoy_map")] < row.values[r.metric_index("clean_map")];
  CHECK(below >= 8);
}

TEST_CASE("study CSV layout") {
  StudyResult r;
  r.kind = "demo";
  r.metrics = {"a", "b"};
  r.rows.push_back(StudyRow{"0.5", 3, "abc", {0.25, std::numeric_limits<double>::quiet_NaN()}});
  const std::string path = (scratch() / "study.csv").string();
  write_study_csv(r, path, "feed");
  const CsvTable t = read_csv(path);
  CHECK(t.header == std::vector<std::string>{"kind", "parameter", "seed", "config_hash", "a", "b"});
  REQUIRE(t.rows.size() == 1);
  CHECK(t.rows[0] == std::vector<std::string>{"demo", "0.5", "3", "abc", "0.25", "undefined"});
  const std::string text = read_text_file(path);
  CHECK(text.find("# config_hash=feed") != std::string::npos);
  CHECK(csv_body(path).find('#') == std::string::npos);
}

TEST_CASE("parallel study cells do not depend on the thread count") {
  const StudyResult one = split_sweep(fixtures::fusion(), {0.2, 0.4}, {7}, 1);
  const StudyResult many = split_sweep(fixtures::fusion(), {0.2, 0.4}, {7}, 3);
  REQUIRE(one.rows.size() == many.rows.size());
  for (std::size_t i = 0; i < one.rows.size(); ++i) CHECK(one.rows[i].values == many.rows[i].values);
}

}  // TEST_SUITE
