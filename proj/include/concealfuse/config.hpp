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

#ifndef CONCEALFUSE_CONFIG_HPP
#define CONCEALFUSE_CONFIG_HPP

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "concealfuse/bayesnet.hpp"
#include "concealfuse/metrics.hpp"
#include "concealfuse/modelbank.hpp"

namespace concealfuse {

// How the fusion key of a pipeline is produced.
struct KeySpec {
  int degree = 3;
  int beta_max = kDefaultBetaMax;
  std::uint64_t seed = 0;
  bool identity = false;
};

// Everything needed to rebuild a pipeline from scratch.
struct PipelineConfig {
  DatasetSpec data;
  SplitSpec split;
  BankConfig bank;
  KeySpec key;
  TrainConfig head;
  bool standardize = false;
  // 0 trains the head on the bank's own training-set posteriors; k >= 2 uses
  // out-of-fold posteriors from k stratified folds instead.
  int cross_fit_folds = 0;

  // Copy with every component seed derived from `master`.
  PipelineConfig with_seed(std::uint64_t master) const;
};

void validate(const PipelineConfig& cfg);

enum class AttackKind { poisoning, perturbation, reverse, backdoor };
enum class ReverseMode { weight_surgery, angle_deform };

struct PatchSpec {
  int row = 4;
  int col = 4;
  int size = 8;
  double value = 0.0;
};

// Only the fields of `kind` are read. Model indices are zero-based.
struct AttackConfig {
  AttackKind kind = AttackKind::poisoning;
  double infection_proportion = 0.1;
  double noise_sigma = 0.5;
  int blur_radius = 2;
  std::vector<int> known_models;
  ReverseMode reverse_mode = ReverseMode::weight_surgery;
  double strength = 180.0;  // degrees, angle_deform only
  PatchSpec patch;
  double trigger_fraction = 0.3;
  int target_label = kReal;
  std::vector<int> attacked_models;
  std::uint64_t seed = 0;
  // Optional sweep over the kind's main parameter (proportion, sigma, or a
  // model count for reverse/backdoor, taking the first m of a seeded order).
  std::vector<double> sweep;
};

void validate(const AttackConfig& cfg);

std::string to_string(AttackKind kind);
AttackKind attack_kind_from_string(const std::string& name);
std::string to_string(ReverseMode mode);
ReverseMode reverse_mode_from_string(const std::string& name);

// JSON conversion. Missing fields keep their defaults; wrongly typed fields
// raise ValidationError naming the field.
nlohmann::json to_json(const TrainConfig& cfg);
nlohmann::json to_json(const DatasetSpec& spec);
nlohmann::json to_json(const SplitSpec& spec);
nlohmann::json to_json(const BankConfig& cfg);
nlohmann::json to_json(const KeySpec& spec);
nlohmann::json to_json(const PipelineConfig& cfg);
nlohmann::json to_json(const AttackConfig& cfg);

TrainConfig train_config_from_json(const nlohmann::json& j);
DatasetSpec dataset_spec_from_json(const nlohmann::json& j);
SplitSpec split_spec_from_json(const nlohmann::json& j);
BankConfig bank_config_from_json(const nlohmann::json& j);
KeySpec key_spec_from_json(const nlohmann::json& j);
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);
AttackConfig attack_config_from_json(const nlohmann::json& j);

nlohmann::json read_json_file(const std::string& path);

// 16 hex digits of the FNV-1a hash of the compact JSON dump.
std::string config_hash(const nlohmann::json& j);

}  // namespace concealfuse

#endif  // CONCEALFUSE_CONFIG_HPP
