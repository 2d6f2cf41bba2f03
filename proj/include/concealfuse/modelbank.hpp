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

#ifndef CONCEALFUSE_MODELBANK_HPP
#define CONCEALFUSE_MODELBANK_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "concealfuse/conceal.hpp"
#include "concealfuse/core.hpp"

namespace concealfuse {

// Synthetic real/fake generator. Real images are low-pass filtered seeded
// noise; fakes additionally carry a pixel-grid checker artifact of amplitude
// gamma * artifact_amplitude inside a square at a seeded location.
struct DatasetSpec {
  std::uint64_t seed = 0;
  int n = 400;
  double gamma = 1.0;
  double noise = 0.1;  // white pixel noise added to both classes
  int width = 32;
  int height = 32;
  double artifact_amplitude = 0.35;
  int artifact_size = 12;
  double smoothing = 3.0;  // Gaussian sigma of the background field, pixels
  double contrast = 0.15;  // background standard deviation around 0.5
};

void validate(const DatasetSpec& spec);

struct SyntheticImage {
  Matrix pixels;  // height x width, values in [0, 1]
  int label = kReal;
  std::uint64_t id = 0;
};

// Images are stored flattened, one per row (pixel (r, c) at r * width + c).
struct SyntheticDataset {
  DatasetSpec spec;
  int width = 0;
  int height = 0;
  Matrix pixels;
  Labels labels;
  std::vector<std::uint64_t> ids;

  Index size() const noexcept { return pixels.rows(); }
  SyntheticImage image(Index n) const;
  SyntheticDataset subset(const std::vector<Index>& rows) const;
};

// Even N, alternating real/fake so that classes are balanced.
SyntheticDataset generate_dataset(const DatasetSpec& spec);

void save_dataset(const SyntheticDataset& data, const std::string& path);
SyntheticDataset load_dataset(const std::string& path);

enum class DetectorKind { projection, conv };

struct BankConfig {
  int models = 6;
  int features = 64;       // projection detectors only
  int conv_detectors = 0;  // the last `conv_detectors` models use the conv variant
  int epochs = 300;
  double learning_rate = 0.025;
  double l2 = 0.2;
  double residual_rms = 0.1;
  std::uint64_t seed = 0;
};

void validate(const BankConfig& cfg);

// A fixed random feature extractor followed by a trained 2-way softmax layer.
//  projection: high-pass residual (x - 3x3 box blur), rescaled to a fixed RMS,
//              then a seeded Gaussian random projection to `features` values.
//  conv:       four seeded zero-mean 3x3 filters, ReLU, 2x2 average pooling.
struct Detector {
  DetectorKind kind = DetectorKind::projection;
  std::uint64_t seed = 0;
  int features = 0;
  double feature_scale = 1.0;  // fixed at training time: 1 / RMS of training features
  double residual_rms = 0.1;
  Eigen::Matrix<double, 2, Eigen::Dynamic> weights;  // rows: real, fake
  Eigen::Vector2d bias = Eigen::Vector2d::Zero();
};

struct ToyBank {
  int width = 0;
  int height = 0;
  BankConfig config;
  std::vector<Detector> detectors;

  int model_count() const noexcept { return static_cast<int>(detectors.size()); }
};

// Unscaled features of `pixels` (N x width*height) under the detector's extractor.
Matrix extract_features(const Detector& detector, const Matrix& pixels, int width, int height);

// Untrained detector shell for model `k` of a bank.
Detector make_detector(const BankConfig& cfg, int k, int width, int height);
// Fits the softmax layer on `pixels`; resets the decision layer first.
Detector train_detector(Detector detector, const Matrix& pixels, const Labels& labels, int width,
                        int height, const BankConfig& cfg);
// Same, from features already produced by extract_features.
Detector fit_decision_layer(Detector detector, const Matrix& raw_features, const Labels& labels,
                            const BankConfig& cfg);

// N x 2 softmax outputs (real, fake), computed as (1 - p, p) so rows sum to 1.
Matrix detector_posteriors(const Detector& detector, const Matrix& pixels, int width, int height);
Matrix posteriors_from_features(const Detector& detector, const Matrix& raw_features);
// Standalone decision: fake iff the fake logit exceeds the real logit.
Labels detector_predict(const Detector& detector, const Matrix& pixels, int width, int height);

ToyBank train_bank(const Matrix& pixels, const Labels& labels, int width, int height,
                   const BankConfig& cfg);
ToyBank train_bank(const SyntheticDataset& data, const BankConfig& cfg);

PosteriorMatrix bank_posteriors(const ToyBank& bank, const Matrix& pixels);

std::string serialize_bank(const ToyBank& bank);
ToyBank deserialize_bank(const std::string& blob);
void save_bank(const ToyBank& bank, const std::string& path);
ToyBank load_bank(const std::string& path);

struct PosteriorTable {
  PosteriorMatrix matrix;
  Labels labels;  // -1 where the label column is empty
  std::vector<std::string> sample_ids;

  bool fully_labeled() const { return labels.size() > 0 && (labels.array() >= 0).all(); }
};

inline constexpr double kIngestSumTolerance = 1e-6;

// Reads the posterior CSV layout; K is inferred from the header.
PosteriorTable load_posteriors(const std::string& path);
void save_posteriors(const PosteriorTable& table, const std::string& path,
                     const std::string& config_hash = "");

}  // namespace concealfuse

#endif  // CONCEALFUSE_MODELBANK_HPP
