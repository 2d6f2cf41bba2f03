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

#ifndef CONCEALFUSE_PIPELINE_HPP
#define CONCEALFUSE_PIPELINE_HPP

#include <optional>
#include <string>
#include <vector>

#include "concealfuse/bayesnet.hpp"
#include "concealfuse/conceal.hpp"
#include "concealfuse/config.hpp"
#include "concealfuse/keyspace.hpp"
#include "concealfuse/modelbank.hpp"

namespace concealfuse {

// Trained bank, key, optional column statistics and Bayesian head.
struct Pipeline {
  PipelineConfig config;
  ToyBank bank;
  FusionKey key;
  std::optional<ColumnStats> stats;
  BayesianClassifier head;

  double training_confidence() const { return head.training_confidence(); }
};

struct DataSplit {
  SyntheticDataset train;
  SyntheticDataset test;
};

DataSplit prepare_data(const PipelineConfig& cfg);
FusionKey make_key(const KeySpec& spec, int model_count);

// Images and labels one detector is trained on. Rows must line up with the
// rows the head is trained on (fold membership is shared).
struct DetectorTrainingSet {
  const Matrix* pixels = nullptr;
  const Labels* labels = nullptr;
};

// Posteriors of `head_pixels` where each row comes from detectors that did not
// see it: stratified folds over `head_labels`, detector k refit per fold on
// its own training set. With folds == 0 the full-data detectors are used.
Matrix cross_fit_posteriors(const BankConfig& cfg, const std::vector<DetectorTrainingSet>& sets,
                            const Matrix& head_pixels, const Labels& head_labels, int width, int height,
                            int folds, std::uint64_t seed);

struct FitOutput {
  Pipeline pipeline;
  Matrix train_posteriors;  // the (cross-fitted) posteriors the head saw
  TrainTrace trace;
};

// Trains every detector on `train`, then the head on concealed posteriors.
FitOutput fit_pipeline(const PipelineConfig& cfg, const SyntheticDataset& train);
// Detector k is trained on sets[k]; the head on (head_pixels, head_labels).
FitOutput fit_pipeline(const PipelineConfig& cfg, const std::vector<DetectorTrainingSet>& sets,
                       const Matrix& head_pixels, const Labels& head_labels, int width, int height);
// Head only, on posteriors that are already available.
FitOutput fit_head(const PipelineConfig& cfg, ToyBank bank, const Matrix& train_posteriors,
                   const Labels& labels);

// Design matrix the head consumes: projection, then optional z-scoring.
Matrix design_matrix(const Pipeline& p, const Matrix& posteriors);
Matrix design_matrix(const Matrix& posteriors, const FusionKey& key, const std::optional<ColumnStats>& stats);

Matrix pipeline_outputs(const Pipeline& p, const Matrix& pixels);
Matrix pipeline_outputs_from_posteriors(const Pipeline& p, const Matrix& posteriors);

struct Evaluation {
  double fusion_map = 0.0;
  double fusion_accuracy = 0.0;
  std::vector<double> single_map;  // held-out mAP of each detector alone

  double best_single() const;
};

Evaluation evaluate(const Pipeline& p, const SyntheticDataset& test);
Evaluation evaluate_posteriors(const Pipeline& p, const Matrix& posteriors, const Labels& labels);

// Score a trained head with test posteriors concealed under another key of
// the same shape.
double wrong_key_probe(const Pipeline& p, const Matrix& test_posteriors, const Labels& labels,
                       const FusionKey& decoy);

// Bank, key, statistics and head in one JSON document.
std::string serialize_pipeline(const Pipeline& p);
Pipeline deserialize_pipeline(const std::string& blob);

}  // namespace concealfuse

#endif  // CONCEALFUSE_PIPELINE_HPP
