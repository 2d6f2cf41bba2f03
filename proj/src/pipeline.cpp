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

#include "concealfuse/pipeline.hpp"

#include <algorithm>

#include "concealfuse/metrics.hpp"

namespace concealfuse {

using nlohmann::json;

DataSplit prepare_data(const PipelineConfig& cfg) {
  const SyntheticDataset all = generate_dataset(cfg.data);
  const SplitIndices idx = split(all.labels, cfg.split);
  return {all.subset(idx.train), all.subset(idx.test)};
}

FusionKey make_key(const KeySpec& spec, int model_count) {
  if (spec.identity) return identity_key(model_count);
  KeyGenOptions opts;
  opts.beta_max = spec.beta_max;
  return generate_key(model_count, spec.degree, spec.seed, opts);
}

namespace {

std::vector<int> stratified_folds(const Labels& labels, int folds, std::uint64_t seed) {
  std::vector<int> fold(static_cast<std::size_t>(labels.size()), 0);
  Rng rng(seed);
  for (int cls : {kReal, kFake}) {
    std::vector<Index> members;
    for (Index i = 0; i < labels.size(); ++i)
      if (labels(i) == cls) members.push_back(i);
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t j = 0; j < members.size(); ++j)
      fold[static_cast<std::size_t>(members[j])] = static_cast<int>(j % static_cast<std::size_t>(folds));
  }
  return fold;
}

std::vector<Index> rows_where(const std::vector<int>& fold, int f, bool inside) {
  std::vector<Index> out;
  for (std::size_t i = 0; i < fold.size(); ++i)
    if ((fold[i] == f) == inside) out.push_back(static_cast<Index>(i));
  return out;
}

struct BankFit {
  ToyBank bank;
  Matrix posteriors;
};

BankFit fit_bank_with_posteriors(const BankConfig& cfg, const std::vector<DetectorTrainingSet>& sets,
                                 const Matrix& head_pixels, const Labels& head_labels, int width,
                                 int height, int folds, std::uint64_t fold_seed) {
  validate(cfg);
  if (static_cast<int>(sets.size()) != cfg.models)
    throw ValidationError("models", "one training set per detector is required");
  const std::vector<int> fold =
      folds > 0 ? stratified_folds(head_labels, folds, fold_seed) : std::vector<int>{};
  BankFit out;
  out.bank.width = width;
  out.bank.height = height;
  out.bank.config = cfg;
  out.posteriors.resize(head_pixels.rows(), 2 * cfg.models);
  for (int k = 0; k < cfg.models; ++k) {
    const DetectorTrainingSet& set = sets[static_cast<std::size_t>(k)];
    if (set.pixels->rows() != head_pixels.rows() && folds > 0)
      throw ValidationError("sets", "detector training rows must line up with the head rows");
    const Detector shell = make_detector(cfg, k, width, height);
    const Matrix own = extract_features(shell, *set.pixels, width, height);
    const Matrix head_features =
        set.pixels == &head_pixels ? own : extract_features(shell, head_pixels, width, height);
    Detector full = fit_decision_layer(shell, own, *set.labels, cfg);
    if (folds == 0) {
      out.posteriors.middleCols(2 * k, 2) = posteriors_from_features(full, head_features);
    } else {
      for (int f = 0; f < folds; ++f) {
        const std::vector<Index> fit_rows = rows_where(fold, f, false);
        const std::vector<Index> held = rows_where(fold, f, true);
        const Detector d =
            fit_decision_layer(shell, take_rows(own, fit_rows), take_rows(*set.labels, fit_rows), cfg);
        const Matrix p = posteriors_from_features(d, take_rows(head_features, held));
        for (std::size_t i = 0; i < held.size(); ++i)
          out.posteriors.block(held[i], 2 * k, 1, 2) = p.row(static_cast<Index>(i));
      }
    }
    out.bank.detectors.push_back(std::move(full));
  }
  return out;
}

}  // namespace

Matrix cross_fit_posteriors(const BankConfig& cfg, const std::vector<DetectorTrainingSet>& sets,
                            const Matrix& head_pixels, const Labels& head_labels, int width, int height,
                            int folds, std::uint64_t seed) {
  return fit_bank_with_posteriors(cfg, sets, head_pixels, head_labels, width, height, folds, seed).posteriors;
}

Matrix design_matrix(const Matrix& posteriors, const FusionKey& key, const std::optional<ColumnStats>& stats) {
  Matrix x = project(posteriors, key);
  if (stats) x = standardize_values(x, *stats);
  return x;
}

Matrix design_matrix(const Pipeline& p, const Matrix& posteriors) {
  return design_matrix(posteriors, p.key, p.stats);
}

FitOutput fit_head(const PipelineConfig& cfg, ToyBank bank, const Matrix& train_posteriors,
                   const Labels& labels) {
  FitOutput out;
  out.pipeline.config = cfg;
  out.pipeline.bank = std::move(bank);
  out.pipeline.key = make_key(cfg.key, out.pipeline.bank.model_count());
  const Matrix projected = project(train_posteriors, out.pipeline.key);
  if (cfg.standardize) out.pipeline.stats = column_stats(projected);
  TrainResult r = train(design_matrix(out.pipeline, train_posteriors), labels, cfg.head);
  out.pipeline.head = std::move(r.model);
  out.trace = std::move(r.trace);
  out.train_posteriors = train_posteriors;
  return out;
}

FitOutput fit_pipeline(const PipelineConfig& cfg, const std::vector<DetectorTrainingSet>& sets,
                       const Matrix& head_pixels, const Labels& head_labels, int width, int height) {
  validate(cfg);
  BankFit fit = fit_bank_with_posteriors(cfg.bank, sets, head_pixels, head_labels, width, height,
                                         cfg.cross_fit_folds, derive_seed(cfg.bank.seed, "folds"));
  return fit_head(cfg, std::move(fit.bank), fit.posteriors, head_labels);
}

FitOutput fit_pipeline(const PipelineConfig& cfg, const SyntheticDataset& train) {
  const std::vector<DetectorTrainingSet> sets(static_cast<std::size_t>(cfg.bank.models),
                                              DetectorTrainingSet{&train.pixels, &train.labels});
  return fit_pipeline(cfg, sets, train.pixels, train.labels, train.width, train.height);
}

Matrix pipeline_outputs_from_posteriors(const Pipeline& p, const Matrix& posteriors) {
  return p.head.outputs(design_matrix(p, posteriors));
}

Matrix pipeline_outputs(const Pipeline& p, const Matrix& pixels) {
  return pipeline_outputs_from_posteriors(p, bank_posteriors(p.bank, pixels).values());
}

double Evaluation::best_single() const {
  return single_map.empty() ? 0.0 : *std::max_element(single_map.begin(), single_map.end());
}

Evaluation evaluate_posteriors(const Pipeline& p, const Matrix& posteriors, const Labels& labels) {
  const Matrix out = pipeline_outputs_from_posteriors(p, posteriors);
  Evaluation e;
  e.fusion_map = mean_average_precision(fake_scores(out), labels);
  e.fusion_accuracy = (predicted_classes(out).array() == labels.array()).cast<double>().mean();
  for (Index k = 0; k < posteriors.cols() / 2; ++k)
    e.single_map.push_back(mean_average_precision(posteriors.col(2 * k + 1), labels));
  return e;
}

Evaluation evaluate(const Pipeline& p, const SyntheticDataset& test) {
  return evaluate_posteriors(p, bank_posteriors(p.bank, test.pixels).values(), test.labels);
}

double wrong_key_probe(const Pipeline& p, const Matrix& test_posteriors, const Labels& labels,
                       const FusionKey& decoy) {
  if (decoy.degrees() != p.key.degrees())
    throw ValidationError("decoy", "decoy key must have the same model count and degrees");
  const Matrix out = p.head.outputs(design_matrix(test_posteriors, decoy, p.stats));
  return mean_average_precision(fake_scores(out), labels);
}

std::string serialize_pipeline(const Pipeline& p) {
  json doc{{"config", to_json(p.config)},
           {"bank", json::parse(serialize_bank(p.bank))},
           {"key", json::parse(serialize_key(p.key))},
           {"head", json::parse(serialize_model(p.head))}};
  if (p.stats) {
    doc["stats"] = {{"mean", std::vector<double>(p.stats->mean.data(), p.stats->mean.data() + p.stats->mean.size())},
                    {"stddev", std::vector<double>(p.stats->stddev.data(),
                                                   p.stats->stddev.data() + p.stats->stddev.size())}};
  }
  return doc.dump(1);
}

Pipeline deserialize_pipeline(const std::string& blob) {
  try {
    const json doc = json::parse(blob);
    Pipeline p;
    p.config = pipeline_config_from_json(doc.at("config"));
    p.bank = deserialize_bank(doc.at("bank").dump());
    p.key = deserialize_key(doc.at("key").dump());
    p.head = deserialize_model(doc.at("head").dump());
    if (doc.contains("stats")) {
      const auto mean = doc.at("stats").at("mean").get<std::vector<double>>();
      const auto sd = doc.at("stats").at("stddev").get<std::vector<double>>();
      if (mean.size() != sd.size()) throw ValidationError("stats", "mean/stddev length mismatch");
      ColumnStats s;
      s.mean = Eigen::Map<const Vector>(mean.data(), static_cast<Index>(mean.size()));
      s.stddev = Eigen::Map<const Vector>(sd.data(), static_cast<Index>(sd.size()));
      p.stats = s;
    }
    if (p.key.model_count() != p.bank.model_count())
      throw ValidationError("key", "key and bank model counts differ");
    return p;
  } catch (const json::exception& e) {
    throw ValidationError("pipeline", std::string("malformed pipeline file: ") + e.what());
  }
}

}  // namespace concealfuse
