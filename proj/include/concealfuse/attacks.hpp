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

#ifndef CONCEALFUSE_ATTACKS_HPP
#define CONCEALFUSE_ATTACKS_HPP

#include <optional>
#include <vector>

#include "concealfuse/config.hpp"
#include "concealfuse/modelbank.hpp"
#include "concealfuse/pipeline.hpp"

namespace concealfuse {

// Nothing in this module touches a FusionKey: attacked pipelines reuse the
// defender's key object untouched, the attacker never reads it.

struct AttackReport {
  Index n_eligible = 0;  // correctly detected before the attack
  Index n_flipped = 0;   // eligible and miss-detected after it
  std::optional<double> success_rate;        // undefined when nothing is eligible
  std::optional<double> success_confidence;  // mean winning output over flipped samples
  double training_confidence = 0.0;
  std::optional<double> training_accuracy;  // poisoning only, against the true labels
};

AttackReport attack_report(const Matrix& before_outputs, const Matrix& after_outputs, const Labels& labels,
                           double training_confidence);

// Flips floor(proportion * N) labels chosen uniformly at random.
SyntheticDataset poison(const SyntheticDataset& train, double proportion, std::uint64_t seed);

// Gaussian pixel noise clamped to [0, 1], then a (2r+1)^2 box blur with
// edge replication.
Matrix perturb(const Matrix& pixels, int width, int height, double noise_sigma, int blur_radius,
               std::uint64_t seed);
Matrix box_blur(const Matrix& pixels, int width, int height, int radius);

// Decision-layer manipulation of the known detectors only.
//  weight_surgery: swaps the two output rows (and biases).
//  angle_deform:   rotates w_fake - w_real by `strength_degrees` toward the
//                  direction that lowers the margin of the target samples,
//                  keeping w_fake + w_real fixed.
ToyBank reverse_attack(const ToyBank& bank, const std::vector<int>& known_models, ReverseMode mode,
                       double strength_degrees, const Matrix& target_pixels, const Labels& target_labels);

Matrix stamp_patch(const Matrix& pixels, int width, int height, const PatchSpec& patch);

struct BackdoorData {
  SyntheticDataset tainted;          // training set with stamped, relabelled samples
  std::vector<Index> tainted_rows;
  SyntheticDataset trigger_clean;    // non-target test samples, unstamped
  SyntheticDataset trigger_test;     // the same samples with the patch applied
};

BackdoorData backdoor(const SyntheticDataset& train, const SyntheticDataset& test, const PatchSpec& patch,
                      double trigger_fraction, int target_label, std::uint64_t seed);

// Seeded order of model indices; attack sweeps over m models use the first m.
std::vector<int> model_order(int model_count, std::uint64_t seed);

// A clean pipeline and its data, shared by the attack runners.
struct AttackContext {
  PipelineConfig config;
  DataSplit data;
  Pipeline clean;
  Matrix clean_test_outputs;
};

AttackContext make_attack_context(const PipelineConfig& cfg);

AttackReport run_poisoning(const AttackContext& ctx, double proportion, std::uint64_t seed);
AttackReport run_perturbation(const AttackContext& ctx, double noise_sigma, int blur_radius, std::uint64_t seed);
AttackReport run_reverse(const AttackContext& ctx, const std::vector<int>& known_models, ReverseMode mode,
                         double strength_degrees);
AttackReport run_backdoor(const AttackContext& ctx, const PatchSpec& patch, double trigger_fraction,
                          int target_label, const std::vector<int>& attacked_models, std::uint64_t seed);

// Runs `cfg`; when `parameter` is given it replaces the kind's main
// parameter (proportion, sigma, or the first-m model count).
AttackReport run_attack(const AttackContext& ctx, const AttackConfig& cfg,
                        std::optional<double> parameter = std::nullopt);

}  // namespace concealfuse

#endif  // CONCEALFUSE_ATTACKS_HPP
