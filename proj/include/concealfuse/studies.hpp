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

#ifndef CONCEALFUSE_STUDIES_HPP
#define CONCEALFUSE_STUDIES_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "concealfuse/attacks.hpp"
#include "concealfuse/config.hpp"
#include "concealfuse/pipeline.hpp"

namespace concealfuse {

// One (parameter, seed) cell. `values` follows StudyResult::metrics; NaN
// marks an undefined metric. `config_hash` identifies the cell's full config.
struct StudyRow {
  std::string parameter;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<double> values;
};

struct StudyResult {
  std::string kind;
  std::vector<std::string> metrics;
  std::vector<StudyRow> rows;

  std::size_t metric_index(const std::string& name) const;
  // Values of `metric` over the rows whose parameter equals `parameter`, in row order.
  std::vector<double> values(const std::string& metric, const std::string& parameter) const;
  std::vector<std::string> parameters() const;  // distinct, in first-seen order
};

void write_study_csv(const StudyResult& study, const std::string& path, const std::string& config_hash);

// Runs fn(0..n-1) on up to `threads` workers. Callers write results by index,
// so the outcome does not depend on scheduling.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

std::string format_parameter(double v);

// Per (fraction, seed): fusion mAP, accuracy, each single detector's mAP and the best of them.
StudyResult split_sweep(const PipelineConfig& base, const std::vector<double>& fractions,
                        const std::vector<std::uint64_t>& seeds, int threads = 1);

struct KeyLengthOptions {
  std::vector<int> degrees{1, 3, 7, 15};
  int attempt_cap = 5;
  int beta_max = 16;
  // Adds a row per seed for the identity key next to an unprotected head
  // trained with the same attempt seeds.
  bool include_identity = false;
};

// Attempts until the head reaches the convergence mAP on its training set,
// each attempt drawing a fresh key and a fresh initialisation.
StudyResult key_length_study(const PipelineConfig& base, const KeyLengthOptions& options,
                             const std::vector<std::uint64_t>& seeds, int threads = 1);

// One row per executed epoch of the head's training.
StudyResult train_trace_study(const PipelineConfig& cfg);

FusionKey random_decoy(const FusionKey& key, std::uint64_t seed, int beta_max = kDefaultBetaMax);
// Copy of `key` with one exponent of one model replaced by an unused value.
FusionKey single_beta_decoy(const FusionKey& key, std::uint64_t seed, int beta_max = kDefaultBetaMax);

// Per seed: clean test mAP, mAP under a random decoy and under a single-exponent decoy.
StudyResult wrong_key_study(const PipelineConfig& base, const std::vector<std::uint64_t>& seeds, int threads = 1);

// Per (value, seed): the attack report. Empty `values` runs the config as is.
StudyResult attack_sweep(const PipelineConfig& base, const AttackConfig& attack, const std::vector<double>& values,
                         const std::vector<std::uint64_t>& seeds, int threads = 1);

std::vector<std::uint64_t> seed_range(std::uint64_t first, int count);

}  // namespace concealfuse

#endif  // CONCEALFUSE_STUDIES_HPP
