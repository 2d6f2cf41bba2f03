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

#include "concealfuse/config.hpp"

#include "concealfuse/io.hpp"

namespace concealfuse {

using nlohmann::json;

namespace {

template <typename T>
void read_field(const json& j, const char* name, T& out) {
  const auto it = j.find(name);
  if (it == j.end() || it->is_null()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw ValidationError(name, "wrong type");
  }
}

void require_object(const json& j, const char* what) {
  if (!j.is_object()) throw ValidationError(what, "expected a JSON object");
}

}  // namespace

PipelineConfig PipelineConfig::with_seed(std::uint64_t master) const {
  PipelineConfig out = *this;
  out.data.seed = derive_seed(master, "data");
  out.split.seed = derive_seed(master, "split");
  out.bank.seed = derive_seed(master, "bank");
  out.key.seed = derive_seed(master, "key");
  out.head.seed = derive_seed(master, "head");
  return out;
}

void validate(const PipelineConfig& cfg) {
  validate(cfg.data);
  validate(cfg.bank);
  validate(cfg.head);
  if (!(cfg.split.train_fraction > 0.0 && cfg.split.train_fraction < 1.0))
    throw ValidationError("split.train_fraction", "must lie in (0, 1)");
  if (cfg.key.degree < 1) throw ValidationError("key.degree", "must be >= 1");
  if (cfg.key.beta_max < 1 || cfg.key.beta_max > 255) throw ValidationError("key.beta_max", "must lie in [1, 255]");
  if (!cfg.key.identity && cfg.key.degree > cfg.key.beta_max)
    throw ValidationError("key.degree", "cannot exceed beta_max");
  if (cfg.cross_fit_folds == 1 || cfg.cross_fit_folds < 0)
    throw ValidationError("cross_fit_folds", "must be 0 (off) or >= 2");
}

void validate(const AttackConfig& cfg) {
  auto unit = [](double v, const char* field) {
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError(field, "must lie in [0, 1]");
  };
  unit(cfg.infection_proportion, "infection_proportion");
  if (!(cfg.noise_sigma >= 0.0)) throw ValidationError("noise_sigma", "must be >= 0");
  if (cfg.blur_radius < 0) throw ValidationError("blur_radius", "must be >= 0");
  if (!(cfg.trigger_fraction >= 0.0 && cfg.trigger_fraction < 1.0))
    throw ValidationError("trigger_fraction", "must lie in [0, 1)");
  if (cfg.target_label != kReal && cfg.target_label != kFake)
    throw ValidationError("target_label", "must be 0 (real) or 1 (fake)");
  if (cfg.patch.size < 1) throw ValidationError("patch.size", "must be >= 1");
}

std::string to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::poisoning: return "poison";
    case AttackKind::perturbation: return "perturb";
    case AttackKind::reverse: return "reverse";
    case AttackKind::backdoor: return "backdoor";
  }
  return "?";
}

AttackKind attack_kind_from_string(const std::string& name) {
  if (name == "poison" || name == "poisoning") return AttackKind::poisoning;
  if (name == "perturb" || name == "perturbation") return AttackKind::perturbation;
  if (name == "reverse") return AttackKind::reverse;
  if (name == "backdoor") return AttackKind::backdoor;
  throw ValidationError("kind", "unknown attack kind '" + name + "'");
}

std::string to_string(ReverseMode mode) {
  return mode == ReverseMode::angle_deform ? "angle_deform" : "weight_surgery";
}

ReverseMode reverse_mode_from_string(const std::string& name) {
  if (name == "weight_surgery") return ReverseMode::weight_surgery;
  if (name == "angle_deform") return ReverseMode::angle_deform;
  throw ValidationError("mode", "unknown reverse mode '" + name + "'");
}

json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"max_epochs", c.max_epochs},
          {"patience", c.patience},           {"plateau_threshold", c.plateau_threshold},
          {"min_learning_rate", c.min_learning_rate}, {"init_scale", c.init_scale},
          {"seed", c.seed},                   {"hidden", c.hidden},
          {"prior_precision", c.prior_precision}, {"noise_precision", c.noise_precision},
          {"convergence_map", c.convergence_map}};
}

TrainConfig train_config_from_json(const json& j) {
  require_object(j, "head");
  TrainConfig c;
  read_field(j, "learning_rate", c.learning_rate);
  read_field(j, "max_epochs", c.max_epochs);
  read_field(j, "patience", c.patience);
  read_field(j, "plateau_threshold", c.plateau_threshold);
  read_field(j, "min_learning_rate", c.min_learning_rate);
  read_field(j, "init_scale", c.init_scale);
  read_field(j, "seed", c.seed);
  read_field(j, "hidden", c.hidden);
  read_field(j, "prior_precision", c.prior_precision);
  read_field(j, "noise_precision", c.noise_precision);
  read_field(j, "convergence_map", c.convergence_map);
  return c;
}

json to_json(const DatasetSpec& s) {
  return {{"seed", s.seed},   {"n", s.n},         {"gamma", s.gamma},
          {"noise", s.noise}, {"width", s.width}, {"height", s.height},
          {"artifact_amplitude", s.artifact_amplitude}, {"artifact_size", s.artifact_size},
          {"smoothing", s.smoothing}, {"contrast", s.contrast}};
}

DatasetSpec dataset_spec_from_json(const json& j) {
  require_object(j, "data");
  DatasetSpec s;
  read_field(j, "seed", s.seed);
  read_field(j, "n", s.n);
  read_field(j, "gamma", s.gamma);
  read_field(j, "noise", s.noise);
  read_field(j, "width", s.width);
  read_field(j, "height", s.height);
  read_field(j, "artifact_amplitude", s.artifact_amplitude);
  read_field(j, "artifact_size", s.artifact_size);
  read_field(j, "smoothing", s.smoothing);
  read_field(j, "contrast", s.contrast);
  return s;
}

json to_json(const SplitSpec& s) {
  return {{"train_fraction", s.train_fraction}, {"seed", s.seed}, {"stratified", s.stratified}};
}

SplitSpec split_spec_from_json(const json& j) {
  require_object(j, "split");
  SplitSpec s;
  read_field(j, "train_fraction", s.train_fraction);
  read_field(j, "seed", s.seed);
  read_field(j, "stratified", s.stratified);
  if (!s.stratified) throw ValidationError("stratified", "only stratified splits are supported");
  return s;
}

json to_json(const BankConfig& c) {
  return {{"models", c.models}, {"features", c.features}, {"conv_detectors", c.conv_detectors},
          {"epochs", c.epochs}, {"learning_rate", c.learning_rate}, {"l2", c.l2},
          {"residual_rms", c.residual_rms}, {"seed", c.seed}};
}

BankConfig bank_config_from_json(const json& j) {
  require_object(j, "bank");
  BankConfig c;
  read_field(j, "models", c.models);
  read_field(j, "features", c.features);
  read_field(j, "conv_detectors", c.conv_detectors);
  read_field(j, "epochs", c.epochs);
  read_field(j, "learning_rate", c.learning_rate);
  read_field(j, "l2", c.l2);
  read_field(j, "residual_rms", c.residual_rms);
  read_field(j, "seed", c.seed);
  return c;
}

json to_json(const KeySpec& s) {
  return {{"degree", s.degree}, {"beta_max", s.beta_max}, {"seed", s.seed}, {"identity", s.identity}};
}

KeySpec key_spec_from_json(const json& j) {
  require_object(j, "key");
  KeySpec s;
  read_field(j, "degree", s.degree);
  read_field(j, "beta_max", s.beta_max);
  read_field(j, "seed", s.seed);
  read_field(j, "identity", s.identity);
  return s;
}

json to_json(const PipelineConfig& c) {
  return {{"data", to_json(c.data)}, {"split", to_json(c.split)},   {"bank", to_json(c.bank)},
          {"key", to_json(c.key)},   {"head", to_json(c.head)},     {"standardize", c.standardize},
          {"cross_fit_folds", c.cross_fit_folds}};
}

PipelineConfig pipeline_config_from_json(const json& j) {
  require_object(j, "pipeline");
  PipelineConfig c;
  if (j.contains("data")) c.data = dataset_spec_from_json(j.at("data"));
  if (j.contains("split")) c.split = split_spec_from_json(j.at("split"));
  if (j.contains("bank")) c.bank = bank_config_from_json(j.at("bank"));
  if (j.contains("key")) c.key = key_spec_from_json(j.at("key"));
  if (j.contains("head")) c.head = train_config_from_json(j.at("head"));
  read_field(j, "standardize", c.standardize);
  read_field(j, "cross_fit_folds", c.cross_fit_folds);
  return c;
}

json to_json(const AttackConfig& c) {
  return {{"kind", to_string(c.kind)},
          {"infection_proportion", c.infection_proportion},
          {"noise_sigma", c.noise_sigma},
          {"blur_radius", c.blur_radius},
          {"known_models", c.known_models},
          {"mode", to_string(c.reverse_mode)},
          {"strength", c.strength},
          {"patch", {{"row", c.patch.row}, {"col", c.patch.col}, {"size", c.patch.size}, {"value", c.patch.value}}},
          {"trigger_fraction", c.trigger_fraction},
          {"target_label", c.target_label},
          {"attacked_models", c.attacked_models},
          {"seed", c.seed},
          {"sweep", c.sweep}};
}

AttackConfig attack_config_from_json(const json& j) {
  require_object(j, "attack");
  AttackConfig c;
  std::string kind = to_string(c.kind);
  read_field(j, "kind", kind);
  c.kind = attack_kind_from_string(kind);
  read_field(j, "infection_proportion", c.infection_proportion);
  read_field(j, "noise_sigma", c.noise_sigma);
  read_field(j, "blur_radius", c.blur_radius);
  read_field(j, "known_models", c.known_models);
  std::string mode = to_string(c.reverse_mode);
  read_field(j, "mode", mode);
  c.reverse_mode = reverse_mode_from_string(mode);
  read_field(j, "strength", c.strength);
  if (j.contains("patch")) {
    const json& p = j.at("patch");
    require_object(p, "patch");
    read_field(p, "row", c.patch.row);
    read_field(p, "col", c.patch.col);
    read_field(p, "size", c.patch.size);
    read_field(p, "value", c.patch.value);
  }
  read_field(j, "trigger_fraction", c.trigger_fraction);
  read_field(j, "target_label", c.target_label);
  read_field(j, "attacked_models", c.attacked_models);
  read_field(j, "seed", c.seed);
  read_field(j, "sweep", c.sweep);
  return c;
}

json read_json_file(const std::string& path) {
  try {
    return json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ValidationError(path, std::string("invalid JSON: ") + e.what());
  }
}

std::string config_hash(const json& j) { return hex64(fnv1a(j.dump())); }

}  // namespace concealfuse
