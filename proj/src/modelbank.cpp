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

#include "concealfuse/modelbank.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "concealfuse/config.hpp"
#include "concealfuse/io.hpp"

namespace concealfuse {

using nlohmann::json;

void validate(const DatasetSpec& spec) {
  if (spec.n < 2 || spec.n % 2 != 0) throw ValidationError("n", "must be even and >= 2 (class balance)");
  if (!(spec.gamma > 0.0 && spec.gamma <= 1.0)) throw ValidationError("gamma", "must lie in (0, 1]");
  if (spec.noise < 0.0) throw ValidationError("noise", "must be >= 0");
  if (spec.width < 4 || spec.height < 4) throw ValidationError("size", "images must be at least 4x4");
  if (spec.artifact_size < 1 || spec.artifact_size > std::min(spec.width, spec.height))
    throw ValidationError("artifact_size", "must fit inside the image");
  if (!(spec.smoothing > 0.0)) throw ValidationError("smoothing", "must be positive");
}

SyntheticImage SyntheticDataset::image(Index n) const {
  SyntheticImage img;
  const Eigen::RowVectorXd row = pixels.row(n);
  img.pixels = Eigen::Map<const RowMatrix>(row.data(), height, width);
  img.label = labels(n);
  img.id = ids[static_cast<std::size_t>(n)];
  return img;
}

SyntheticDataset SyntheticDataset::subset(const std::vector<Index>& rows) const {
  SyntheticDataset out;
  out.spec = spec;
  out.width = width;
  out.height = height;
  out.pixels = take_rows(pixels, rows);
  out.labels = take_rows(labels, rows);
  for (Index r : rows) out.ids.push_back(ids[static_cast<std::size_t>(r)]);
  return out;
}

namespace {

// Separable Gaussian filter with periodic boundaries.
RowMatrix gaussian_wrap(const RowMatrix& img, double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
    total += kernel[static_cast<std::size_t>(i + radius)];
  }
  for (double& k : kernel) k /= total;
  const Index h = img.rows();
  const Index w = img.cols();
  RowMatrix tmp(h, w);
  RowMatrix out(h, w);
  for (Index r = 0; r < h; ++r)
    for (Index c = 0; c < w; ++c) {
      double s = 0.0;
      for (int i = -radius; i <= radius; ++i) s += kernel[static_cast<std::size_t>(i + radius)] * img(r, ((c + i) % w + w) % w);
      tmp(r, c) = s;
    }
  for (Index r = 0; r < h; ++r)
    for (Index c = 0; c < w; ++c) {
      double s = 0.0;
      for (int i = -radius; i <= radius; ++i) s += kernel[static_cast<std::size_t>(i + radius)] * tmp(((r + i) % h + h) % h, c);
      out(r, c) = s;
    }
  return out;
}

}  // namespace

SyntheticDataset generate_dataset(const DatasetSpec& spec) {
  validate(spec);
  SyntheticDataset data;
  data.spec = spec;
  data.width = spec.width;
  data.height = spec.height;
  const Index npix = static_cast<Index>(spec.width) * spec.height;
  data.pixels.resize(spec.n, npix);
  data.labels.resize(spec.n);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int n = 0; n < spec.n; ++n) {
    Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(n)));
    RowMatrix field(spec.height, spec.width);
    for (Index i = 0; i < field.size(); ++i) field.data()[i] = gauss(rng);
    field = gaussian_wrap(field, spec.smoothing);
    const double mean = field.mean();
    const double sd = std::sqrt((field.array() - mean).square().mean());
    RowMatrix img = (0.5 + spec.contrast * (field.array() - mean) / (sd > 0.0 ? sd : 1.0)).matrix();

    const int label = n % 2 == 0 ? kReal : kFake;
    if (label == kFake) {
      std::uniform_int_distribution<int> row0(0, spec.height - spec.artifact_size);
      std::uniform_int_distribution<int> col0(0, spec.width - spec.artifact_size);
      const int r0 = row0(rng);
      const int c0 = col0(rng);
      const double amp = spec.gamma * spec.artifact_amplitude;
      for (int r = r0; r < r0 + spec.artifact_size; ++r)
        for (int c = c0; c < c0 + spec.artifact_size; ++c) img(r, c) += ((r + c) % 2 == 0) ? amp : -amp;
    }
    for (Index i = 0; i < img.size(); ++i) {
      img.data()[i] = std::clamp(img.data()[i] + spec.noise * gauss(rng), 0.0, 1.0);
    }
    data.pixels.row(n) = Eigen::Map<const Eigen::RowVectorXd>(img.data(), npix);
    data.labels(n) = label;
    data.ids.push_back(static_cast<std::uint64_t>(n));
  }
  return data;
}

namespace {

constexpr char kDatasetMagic[8] = {'C', 'F', 'D', 'S', '0', '0', '0', '1'};

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ValidationError("dataset", "truncated file");
  return v;
}

}  // namespace

void save_dataset(const SyntheticDataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("dataset", "cannot write " + path);
  out.write(kDatasetMagic, sizeof(kDatasetMagic));
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(data.width));
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(data.height));
  write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(data.size()));
  const std::string spec = to_json(data.spec).dump();
  write_pod<std::uint64_t>(out, spec.size());
  out.write(spec.data(), static_cast<std::streamsize>(spec.size()));
  for (Index n = 0; n < data.size(); ++n) {
    write_pod<std::uint64_t>(out, data.ids[static_cast<std::size_t>(n)]);
    write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(data.labels(n)));
    for (Index p = 0; p < data.pixels.cols(); ++p) write_pod<double>(out, data.pixels(n, p));
  }
}

SyntheticDataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("dataset", "cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kDatasetMagic, sizeof(magic)) != 0)
    throw ValidationError("dataset", "not a dataset file: " + path);
  SyntheticDataset data;
  data.width = static_cast<int>(read_pod<std::uint32_t>(in));
  data.height = static_cast<int>(read_pod<std::uint32_t>(in));
  const auto n = read_pod<std::uint64_t>(in);
  const auto spec_len = read_pod<std::uint64_t>(in);
  if (spec_len > (1u << 20)) throw ValidationError("dataset", "corrupt header");
  std::string spec(spec_len, '\0');
  in.read(spec.data(), static_cast<std::streamsize>(spec_len));
  try {
    data.spec = dataset_spec_from_json(json::parse(spec));
  } catch (const json::exception& e) {
    throw ValidationError("dataset", std::string("corrupt generator spec: ") + e.what());
  }
  const Index npix = static_cast<Index>(data.width) * data.height;
  data.pixels.resize(static_cast<Index>(n), npix);
  data.labels.resize(static_cast<Index>(n));
  for (Index i = 0; i < static_cast<Index>(n); ++i) {
    data.ids.push_back(read_pod<std::uint64_t>(in));
    const auto label = read_pod<std::uint8_t>(in);
    if (label > 1) throw ValidationError("dataset", "invalid label");
    data.labels(i) = label;
    for (Index p = 0; p < npix; ++p) data.pixels(i, p) = read_pod<double>(in);
  }
  return data;
}

void validate(const BankConfig& cfg) {
  if (cfg.models < 1) throw ValidationError("models", "must be >= 1");
  if (cfg.features < 1) throw ValidationError("features", "must be >= 1");
  if (cfg.conv_detectors < 0 || cfg.conv_detectors > cfg.models)
    throw ValidationError("conv_detectors", "must lie in [0, models]");
  if (cfg.epochs < 1) throw ValidationError("epochs", "must be >= 1");
  if (!(cfg.learning_rate > 0.0)) throw ValidationError("learning_rate", "must be positive");
  if (cfg.l2 < 0.0) throw ValidationError("l2", "must be >= 0");
  if (!(cfg.residual_rms > 0.0)) throw ValidationError("residual_rms", "must be positive");
}

namespace {

constexpr int kConvFilters = 4;

// Rows of the residual operator x - box3(x), periodic boundaries, rescaled to RMS `rms`.
Matrix normalized_residuals(const Matrix& pixels, int width, int height, double rms) {
  Matrix out(pixels.rows(), pixels.cols());
  const double target_norm = rms * std::sqrt(static_cast<double>(pixels.cols()));
  for (Index n = 0; n < pixels.rows(); ++n) {
    const Eigen::RowVectorXd row = pixels.row(n);
    const double* x = row.data();
    Eigen::RowVectorXd res(pixels.cols());
    for (int r = 0; r < height; ++r)
      for (int c = 0; c < width; ++c) {
        double s = 0.0;
        for (int dr = -1; dr <= 1; ++dr)
          for (int dc = -1; dc <= 1; ++dc)
            s += x[((r + dr + height) % height) * width + (c + dc + width) % width];
        res(r * width + c) = x[r * width + c] - s / 9.0;
      }
    const double norm = res.norm();
    out.row(n) = norm > 0.0 ? (res * (target_norm / norm)).eval() : res;
  }
  return out;
}

Matrix projection_matrix(std::uint64_t seed, int features, Index inputs) {
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0 / std::sqrt(static_cast<double>(inputs)));
  Matrix r(features, inputs);
  for (Index i = 0; i < r.rows(); ++i)
    for (Index j = 0; j < r.cols(); ++j) r(i, j) = gauss(rng);
  return r;
}

std::vector<Eigen::Matrix3d> conv_filters(std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<Eigen::Matrix3d> filters(kConvFilters);
  for (auto& f : filters) {
    for (int i = 0; i < 9; ++i) f(i / 3, i % 3) = gauss(rng);
    f.array() -= f.mean();
    f /= f.norm();
  }
  return filters;
}

Matrix conv_features(std::uint64_t seed, const Matrix& pixels, int width, int height) {
  const auto filters = conv_filters(seed);
  const int ph = height / 2;
  const int pw = width / 2;
  Matrix out(pixels.rows(), static_cast<Index>(kConvFilters) * ph * pw);
  for (Index n = 0; n < pixels.rows(); ++n) {
    const Eigen::RowVectorXd row = pixels.row(n);
    const double* x = row.data();
    Index o = 0;
    for (const auto& f : filters) {
      for (int pr = 0; pr < ph; ++pr)
        for (int pc = 0; pc < pw; ++pc) {
          double pooled = 0.0;
          for (int r = 2 * pr; r < 2 * pr + 2; ++r)
            for (int c = 2 * pc; c < 2 * pc + 2; ++c) {
              double s = 0.0;
              for (int dr = -1; dr <= 1; ++dr)
                for (int dc = -1; dc <= 1; ++dc)
                  s += f(dr + 1, dc + 1) * x[((r + dr + height) % height) * width + (c + dc + width) % width];
              pooled += std::max(0.0, s);
            }
          out(n, o++) = 0.25 * pooled;
        }
    }
  }
  return out;
}

}  // namespace

Matrix extract_features(const Detector& detector, const Matrix& pixels, int width, int height) {
  if (pixels.cols() != static_cast<Index>(width) * height)
    throw ValidationError("pixels", "image dimensions do not match the detector");
  if (detector.kind == DetectorKind::conv) return conv_features(detector.seed, pixels, width, height);
  const Matrix proj = projection_matrix(detector.seed, detector.features, pixels.cols());
  return normalized_residuals(pixels, width, height, detector.residual_rms) * proj.transpose();
}

Detector make_detector(const BankConfig& cfg, int k, int width, int height) {
  Detector d;
  d.kind = k >= cfg.models - cfg.conv_detectors ? DetectorKind::conv : DetectorKind::projection;
  d.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(k));
  d.features = d.kind == DetectorKind::conv ? kConvFilters * (height / 2) * (width / 2) : cfg.features;
  d.residual_rms = cfg.residual_rms;
  d.weights = Eigen::Matrix<double, 2, Eigen::Dynamic>::Zero(2, d.features);
  return d;
}

Detector fit_decision_layer(Detector detector, const Matrix& raw_features, const Labels& labels,
                            const BankConfig& cfg) {
  if (raw_features.rows() != labels.size()) throw ValidationError("labels", "count differs from images");
  const Index n_fake = (labels.array() == kFake).count();
  if (n_fake == 0 || n_fake == labels.size())
    throw ValidationError("labels", "degenerate dataset: both classes must be present");
  const double rms = std::sqrt(raw_features.array().square().mean());
  detector.feature_scale = rms > 0.0 ? 1.0 / rms : 1.0;
  const Matrix z = raw_features * detector.feature_scale;
  const double n = static_cast<double>(z.rows());
  Eigen::Matrix<double, 2, Eigen::Dynamic> w = Eigen::Matrix<double, 2, Eigen::Dynamic>::Zero(2, z.cols());
  Eigen::Vector2d b = Eigen::Vector2d::Zero();
  Matrix resid(z.rows(), 2);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const Vector logit = z * (w.row(1) - w.row(0)).transpose() + Vector::Constant(z.rows(), b(1) - b(0));
    for (Index i = 0; i < z.rows(); ++i) {
      const double p = 1.0 / (1.0 + std::exp(-logit(i)));
      const double y = labels(i) == kFake ? 1.0 : 0.0;
      resid(i, 1) = p - y;
      resid(i, 0) = y - p;
    }
    const Eigen::Matrix<double, 2, Eigen::Dynamic> gw = resid.transpose() * z / n + cfg.l2 * w;
    const Eigen::Vector2d gb = resid.colwise().sum().transpose() / n;
    w -= cfg.learning_rate * gw;
    b -= cfg.learning_rate * gb;
  }
  detector.weights = w;
  detector.bias = b;
  return detector;
}

Detector train_detector(Detector detector, const Matrix& pixels, const Labels& labels, int width,
                        int height, const BankConfig& cfg) {
  Matrix features = extract_features(detector, pixels, width, height);
  return fit_decision_layer(std::move(detector), features, labels, cfg);
}

Matrix posteriors_from_features(const Detector& detector, const Matrix& raw_features) {
  const Vector logit = raw_features * detector.feature_scale *
                           (detector.weights.row(1) - detector.weights.row(0)).transpose() +
                       Vector::Constant(raw_features.rows(), detector.bias(1) - detector.bias(0));
  Matrix out(raw_features.rows(), 2);
  for (Index i = 0; i < out.rows(); ++i) {
    const double p = 1.0 / (1.0 + std::exp(-logit(i)));
    out(i, 1) = p;
    out(i, 0) = 1.0 - p;
  }
  return out;
}

Matrix detector_posteriors(const Detector& detector, const Matrix& pixels, int width, int height) {
  return posteriors_from_features(detector, extract_features(detector, pixels, width, height));
}

Labels detector_predict(const Detector& detector, const Matrix& pixels, int width, int height) {
  const Matrix z = extract_features(detector, pixels, width, height) * detector.feature_scale;
  const Matrix logits = (z * detector.weights.transpose()).rowwise() + detector.bias.transpose();
  Labels out(z.rows());
  for (Index i = 0; i < z.rows(); ++i) out(i) = logits(i, 1) > logits(i, 0) ? kFake : kReal;
  return out;
}

ToyBank train_bank(const Matrix& pixels, const Labels& labels, int width, int height,
                   const BankConfig& cfg) {
  validate(cfg);
  ToyBank bank;
  bank.width = width;
  bank.height = height;
  bank.config = cfg;
  for (int k = 0; k < cfg.models; ++k) {
    bank.detectors.push_back(
        train_detector(make_detector(cfg, k, width, height), pixels, labels, width, height, cfg));
  }
  return bank;
}

ToyBank train_bank(const SyntheticDataset& data, const BankConfig& cfg) {
  return train_bank(data.pixels, data.labels, data.width, data.height, cfg);
}

PosteriorMatrix bank_posteriors(const ToyBank& bank, const Matrix& pixels) {
  if (pixels.cols() != static_cast<Index>(bank.width) * bank.height)
    throw ValidationError("pixels", "image dimensions do not match the bank");
  Matrix values(pixels.rows(), 2 * bank.model_count());
  for (int k = 0; k < bank.model_count(); ++k) {
    values.middleCols(2 * k, 2) = detector_posteriors(bank.detectors[static_cast<std::size_t>(k)], pixels,
                                                      bank.width, bank.height);
  }
  return PosteriorMatrix(std::move(values));
}

std::string serialize_bank(const ToyBank& bank) {
  json dets = json::array();
  for (const auto& d : bank.detectors) {
    json w = json::array();
    for (Index r = 0; r < 2; ++r) {
      std::vector<double> row(static_cast<std::size_t>(d.weights.cols()));
      for (Index c = 0; c < d.weights.cols(); ++c) row[static_cast<std::size_t>(c)] = d.weights(r, c);
      w.push_back(row);
    }
    dets.push_back({{"kind", d.kind == DetectorKind::conv ? "conv" : "projection"},
                    {"seed", d.seed},
                    {"features", d.features},
                    {"feature_scale", d.feature_scale},
                    {"residual_rms", d.residual_rms},
                    {"weights", w},
                    {"bias", std::vector<double>{d.bias(0), d.bias(1)}}});
  }
  return json{{"width", bank.width}, {"height", bank.height}, {"config", to_json(bank.config)},
              {"detectors", dets}}
      .dump(1);
}

ToyBank deserialize_bank(const std::string& blob) {
  try {
    const json doc = json::parse(blob);
    ToyBank bank;
    bank.width = doc.at("width").get<int>();
    bank.height = doc.at("height").get<int>();
    bank.config = bank_config_from_json(doc.at("config"));
    for (const auto& d : doc.at("detectors")) {
      Detector det;
      const std::string kind = d.at("kind").get<std::string>();
      if (kind != "conv" && kind != "projection") throw ValidationError("kind", "unknown detector kind " + kind);
      det.kind = kind == "conv" ? DetectorKind::conv : DetectorKind::projection;
      det.seed = d.at("seed").get<std::uint64_t>();
      det.features = d.at("features").get<int>();
      det.feature_scale = d.at("feature_scale").get<double>();
      det.residual_rms = d.at("residual_rms").get<double>();
      const auto w = d.at("weights").get<std::vector<std::vector<double>>>();
      const auto b = d.at("bias").get<std::vector<double>>();
      if (w.size() != 2 || b.size() != 2) throw ValidationError("weights", "expected 2 output rows");
      det.weights.resize(2, det.features);
      for (Index r = 0; r < 2; ++r) {
        if (static_cast<int>(w[r].size()) != det.features) throw ValidationError("weights", "ragged row");
        for (Index c = 0; c < det.features; ++c) det.weights(r, c) = w[r][c];
      }
      det.bias = Eigen::Vector2d(b[0], b[1]);
      bank.detectors.push_back(std::move(det));
    }
    if (bank.detectors.empty()) throw ValidationError("detectors", "bank has no detectors");
    return bank;
  } catch (const json::exception& e) {
    throw ValidationError("bank", std::string("malformed bank file: ") + e.what());
  }
}

void save_bank(const ToyBank& bank, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("bank", "cannot write " + path);
  out << serialize_bank(bank) << '\n';
}

ToyBank load_bank(const std::string& path) { return deserialize_bank(read_text_file(path)); }

PosteriorTable load_posteriors(const std::string& path) {
  MatrixTable m = read_matrix_csv(path);
  PosteriorTable t{PosteriorMatrix(std::move(m.values), kIngestSumTolerance), std::move(m.labels),
                   std::move(m.sample_ids)};
  return t;
}

void save_posteriors(const PosteriorTable& table, const std::string& path,
                     const std::string& config_hash) {
  write_matrix_csv(path, MatrixTable{table.sample_ids, table.labels, table.matrix.values()}, config_hash);
}

}  // namespace concealfuse
