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

#include "concealfuse/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>

namespace concealfuse {

AttackReport attack_report(const Matrix& before_outputs, const Matrix& after_outputs, const Labels& labels,
                           double training_confidence) {
  if (before_outputs.rows() != labels.size() || after_outputs.rows() != labels.size())
    throw ValidationError("outputs", "before/after outputs must cover the same samples");
  const Labels before = predicted_classes(before_outputs);
  const Labels after = predicted_classes(after_outputs);
  AttackReport r;
  r.training_confidence = training_confidence;
  double conf_sum = 0.0;
  for (Index i = 0; i < labels.size(); ++i) {
    if (before(i) != labels(i)) continue;
    ++r.n_eligible;
    if (after(i) != labels(i)) {
      ++r.n_flipped;
      conf_sum += after_outputs(i, after(i));
    }
  }
  if (r.n_eligible > 0) r.success_rate = static_cast<double>(r.n_flipped) / static_cast<double>(r.n_eligible);
  if (r.n_flipped > 0) r.success_confidence = conf_sum / static_cast<double>(r.n_flipped);
  return r;
}

SyntheticDataset poison(const SyntheticDataset& train, double proportion, std::uint64_t seed) {
  if (!(proportion >= 0.0 && proportion <= 1.0)) throw ValidationError("infection_proportion", "must lie in [0, 1]");
  SyntheticDataset out = train;
  std::vector<Index> order(static_cast<std::size_t>(train.size()));
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto count = static_cast<std::size_t>(std::floor(proportion * static_cast<double>(train.size()) + 1e-9));
  for (std::size_t i = 0; i < count; ++i) out.labels(order[i]) = 1 - out.labels(order[i]);
  return out;
}

Matrix box_blur(const Matrix& pixels, int width, int height, int radius) {
  if (radius < 0) throw ValidationError("blur_radius", "must be >= 0");
  if (radius == 0) return pixels;
  Matrix out(pixels.rows(), pixels.cols());
  const double area = static_cast<double>((2 * radius + 1) * (2 * radius + 1));
  for (Index n = 0; n < pixels.rows(); ++n) {
    for (int r = 0; r < height; ++r)
      for (int c = 0; c < width; ++c) {
        double s = 0.0;
        for (int dr = -radius; dr <= radius; ++dr)
          for (int dc = -radius; dc <= radius; ++dc) {
            const int rr = std::clamp(r + dr, 0, height - 1);
            const int cc = std::clamp(c + dc, 0, width - 1);
            s += pixels(n, rr * width + cc);
          }
        out(n, r * width + c) = s / area;
      }
  }
  return out;
}

Matrix perturb(const Matrix& pixels, int width, int height, double noise_sigma, int blur_radius,
               std::uint64_t seed) {
  if (!(noise_sigma >= 0.0)) throw ValidationError("noise_sigma", "must be >= 0");
  Matrix noisy = pixels;
  if (noise_sigma > 0.0) {
    Rng rng(seed);
    std::normal_distribution<double> gauss(0.0, noise_sigma);
    for (Index n = 0; n < noisy.rows(); ++n)
      for (Index p = 0; p < noisy.cols(); ++p) noisy(n, p) = std::clamp(noisy(n, p) + gauss(rng), 0.0, 1.0);
  }
  return box_blur(noisy, width, height, blur_radius);
}

namespace {

void check_subset(const std::vector<int>& models, int model_count, const char* field) {
  if (models.empty()) throw ValidationError(field, "subset must not be empty");
  std::set<int> seen;
  for (int k : models) {
    if (k < 0 || k >= model_count) throw ValidationError(field, "unknown model index " + std::to_string(k));
    if (!seen.insert(k).second) throw ValidationError(field, "duplicate model index " + std::to_string(k));
  }
}

void angle_deform(Detector& d, double degrees, const Matrix& features, const Labels& labels) {
  const Eigen::RowVectorXd u = d.weights.row(1) - d.weights.row(0);
  const Eigen::RowVectorXd s = d.weights.row(1) + d.weights.row(0);
  // Direction that lowers the fake-minus-real margin of the correct class.
  Eigen::RowVectorXd toward = Eigen::RowVectorXd::Zero(u.size());
  for (Index i = 0; i < features.rows(); ++i)
    toward -= (labels(i) == kFake ? 1.0 : -1.0) * d.feature_scale * features.row(i);
  const double norm = u.norm();
  const double theta = degrees * std::numbers::pi / 180.0;
  Eigen::RowVectorXd rotated;
  if (norm == 0.0) {
    rotated = u;
  } else {
    const Eigen::RowVectorXd e1 = u / norm;
    Eigen::RowVectorXd perp = toward - toward.dot(e1) * e1;
    if (perp.norm() <= 1e-12 * std::max(1.0, toward.norm())) {
      rotated = std::cos(theta) * u;
    } else {
      perp.normalize();
      rotated = norm * (std::cos(theta) * e1 + std::sin(theta) * perp);
    }
  }
  d.weights.row(1) = 0.5 * (s + rotated);
  d.weights.row(0) = 0.5 * (s - rotated);
}

}  // namespace

ToyBank reverse_attack(const ToyBank& bank, const std::vector<int>& known_models, ReverseMode mode,
                       double strength_degrees, const Matrix& target_pixels, const Labels& target_labels) {
  check_subset(known_models, bank.model_count(), "known_models");
  ToyBank out = bank;
  for (int k : known_models) {
    Detector& d = out.detectors[static_cast<std::size_t>(k)];
    if (mode == ReverseMode::weight_surgery) {
      d.weights.row(0).swap(d.weights.row(1));
      std::swap(d.bias(0), d.bias(1));
    } else {
      angle_deform(d, strength_degrees, extract_features(d, target_pixels, bank.width, bank.height),
                   target_labels);
    }
  }
  return out;
}

Matrix stamp_patch(const Matrix& pixels, int width, int height, const PatchSpec& patch) {
  if (patch.size < 1 || patch.row < 0 || patch.col < 0 || patch.row + patch.size > height ||
      patch.col + patch.size > width)
    throw ValidationError("patch", "patch lies outside the image");
  Matrix out = pixels;
  for (Index n = 0; n < out.rows(); ++n)
    for (int r = patch.row; r < patch.row + patch.size; ++r)
      for (int c = patch.col; c < patch.col + patch.size; ++c) out(n, r * width + c) = patch.value;
  return out;
}

BackdoorData backdoor(const SyntheticDataset& train, const SyntheticDataset& test, const PatchSpec& patch,
                      double trigger_fraction, int target_label, std::uint64_t seed) {
  if (!(trigger_fraction >= 0.0 && trigger_fraction < 1.0))
    throw ValidationError("trigger_fraction", "must lie in [0, 1)");
  if (target_label != kReal && target_label != kFake)
    throw ValidationError("target_label", "must be 0 (real) or 1 (fake)");
  // Validates bounds even when nothing gets stamped.
  stamp_patch(Matrix::Zero(0, static_cast<Index>(train.width) * train.height), train.width, train.height, patch);

  BackdoorData out;
  out.tainted = train;
  std::vector<Index> candidates;
  for (Index i = 0; i < train.size(); ++i)
    if (train.labels(i) != target_label) candidates.push_back(i);
  Rng rng(seed);
  std::shuffle(candidates.begin(), candidates.end(), rng);
  const auto count =
      static_cast<std::size_t>(std::floor(trigger_fraction * static_cast<double>(candidates.size()) + 1e-9));
  out.tainted_rows.assign(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(count));
  std::sort(out.tainted_rows.begin(), out.tainted_rows.end());
  if (!out.tainted_rows.empty()) {
    const Matrix stamped = stamp_patch(take_rows(train.pixels, out.tainted_rows), train.width, train.height, patch);
    for (std::size_t i = 0; i < out.tainted_rows.size(); ++i) {
      out.tainted.pixels.row(out.tainted_rows[i]) = stamped.row(static_cast<Index>(i));
      out.tainted.labels(out.tainted_rows[i]) = target_label;
    }
  }

  std::vector<Index> victims;
  for (Index i = 0; i < test.size(); ++i)
    if (test.labels(i) != target_label) victims.push_back(i);
  out.trigger_clean = test.subset(victims);
  out.trigger_test = out.trigger_clean;
  out.trigger_test.pixels = stamp_patch(out.trigger_clean.pixels, test.width, test.height, patch);
  return out;
}

std::vector<int> model_order(int model_count, std::uint64_t seed) {
  std::vector<int> order(static_cast<std::size_t>(model_count));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

AttackContext make_attack_context(const PipelineConfig& cfg) {
  AttackContext ctx;
  ctx.config = cfg;
  ctx.data = prepare_data(cfg);
  ctx.clean = fit_pipeline(cfg, ctx.data.train).pipeline;
  ctx.clean_test_outputs = pipeline_outputs(ctx.clean, ctx.data.test.pixels);
  return ctx;
}

AttackReport run_poisoning(const AttackContext& ctx, double proportion, std::uint64_t seed) {
  const SyntheticDataset& train = ctx.data.train;
  const SyntheticDataset poisoned = poison(train, proportion, seed);
  const Pipeline attacked = fit_pipeline(ctx.config, poisoned).pipeline;
  AttackReport r = attack_report(ctx.clean_test_outputs, pipeline_outputs(attacked, ctx.data.test.pixels),
                                 ctx.data.test.labels, ctx.clean.training_confidence());
  const Labels on_train = predicted_classes(pipeline_outputs(attacked, train.pixels));
  r.training_accuracy = (on_train.array() == train.labels.array()).cast<double>().mean();
  return r;
}

AttackReport run_perturbation(const AttackContext& ctx, double noise_sigma, int blur_radius, std::uint64_t seed) {
  const SyntheticDataset& test = ctx.data.test;
  const Matrix corrupted = perturb(test.pixels, test.width, test.height, noise_sigma, blur_radius, seed);
  return attack_report(ctx.clean_test_outputs, pipeline_outputs(ctx.clean, corrupted), test.labels,
                       ctx.clean.training_confidence());
}

AttackReport run_reverse(const AttackContext& ctx, const std::vector<int>& known_models, ReverseMode mode,
                         double strength_degrees) {
  const SyntheticDataset& test = ctx.data.test;
  Pipeline attacked = ctx.clean;
  attacked.bank = reverse_attack(ctx.clean.bank, known_models, mode, strength_degrees, test.pixels, test.labels);
  return attack_report(ctx.clean_test_outputs, pipeline_outputs(attacked, test.pixels), test.labels,
                       ctx.clean.training_confidence());
}

AttackReport run_backdoor(const AttackContext& ctx, const PatchSpec& patch, double trigger_fraction,
                          int target_label, const std::vector<int>& attacked_models, std::uint64_t seed) {
  const SyntheticDataset& train = ctx.data.train;
  check_subset(attacked_models, ctx.config.bank.models, "attacked_models");
  const BackdoorData bd = backdoor(train, ctx.data.test, patch, trigger_fraction, target_label, seed);
  std::vector<DetectorTrainingSet> sets(static_cast<std::size_t>(ctx.config.bank.models),
                                        DetectorTrainingSet{&train.pixels, &train.labels});
  for (int k : attacked_models)
    sets[static_cast<std::size_t>(k)] = DetectorTrainingSet{&bd.tainted.pixels, &bd.tainted.labels};
  const Pipeline attacked =
      fit_pipeline(ctx.config, sets, bd.tainted.pixels, bd.tainted.labels, train.width, train.height).pipeline;
  return attack_report(pipeline_outputs(ctx.clean, bd.trigger_clean.pixels),
                       pipeline_outputs(attacked, bd.trigger_test.pixels), bd.trigger_clean.labels,
                       ctx.clean.training_confidence());
}

namespace {

std::vector<int> first_models(const AttackContext& ctx, const AttackConfig& cfg, double count) {
  const int k = ctx.config.bank.models;
  const int m = static_cast<int>(std::llround(count));
  if (m < 1 || m > k) throw ValidationError("sweep", "model count must lie in [1, " + std::to_string(k) + "]");
  std::vector<int> order = model_order(k, derive_seed(cfg.seed, "models"));
  order.resize(static_cast<std::size_t>(m));
  return order;
}

}  // namespace

AttackReport run_attack(const AttackContext& ctx, const AttackConfig& cfg, std::optional<double> parameter) {
  validate(cfg);
  switch (cfg.kind) {
    case AttackKind::poisoning:
      return run_poisoning(ctx, parameter.value_or(cfg.infection_proportion), cfg.seed);
    case AttackKind::perturbation:
      return run_perturbation(ctx, parameter.value_or(cfg.noise_sigma), cfg.blur_radius, cfg.seed);
    case AttackKind::reverse:
      return run_reverse(ctx, parameter ? first_models(ctx, cfg, *parameter) : cfg.known_models, cfg.reverse_mode,
                         cfg.strength);
    case AttackKind::backdoor:
      return run_backdoor(ctx, cfg.patch, cfg.trigger_fraction, cfg.target_label,
                          parameter ? first_models(ctx, cfg, *parameter) : cfg.attacked_models, cfg.seed);
  }
  throw ValidationError("kind", "unknown attack kind");
}

}  // namespace concealfuse
