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

#include "concealfuse/conceal.hpp"

#include <string>

namespace concealfuse {

PosteriorMatrix::PosteriorMatrix(Matrix values, double sum_tolerance) : values_(std::move(values)) {
  if (values_.cols() == 0 || values_.cols() % 2 != 0)
    throw ValidationError("posteriors", "column count must be a positive multiple of 2");
  for (Index n = 0; n < values_.rows(); ++n) {
    for (Index c = 0; c < values_.cols(); ++c) {
      const double v = values_(n, c);
      if (!std::isfinite(v) || v < 0.0 || v > 1.0)
        throw ValidationError("row " + std::to_string(n),
                              "posterior outside [0, 1] in column " + std::to_string(c));
    }
    for (Index k = 0; k < values_.cols() / 2; ++k) {
      const double s = values_(n, 2 * k) + values_(n, 2 * k + 1);
      if (std::abs(s - 1.0) > sum_tolerance)
        throw ValidationError("row " + std::to_string(n),
                              "posteriors of model " + std::to_string(k) + " sum to " +
                                  std::to_string(s));
    }
  }
}

ProjectedMatrix project_matrix(const PosteriorMatrix& posteriors, const FusionKey& key) {
  return {project(posteriors.values(), key), key_fingerprint(key)};
}

ColumnStats column_stats(const Matrix& values) {
  ColumnStats stats;
  const double n = static_cast<double>(values.rows());
  stats.mean = values.colwise().mean().transpose();
  stats.stddev =
      ((values.rowwise() - stats.mean.transpose()).array().square().colwise().sum() / n)
          .sqrt()
          .transpose();
  return stats;
}

Matrix standardize_values(const Matrix& values, const ColumnStats& stats) {
  if (stats.mean.size() != values.cols() || stats.stddev.size() != values.cols())
    throw ValidationError("stats", "dimension does not match matrix columns");
  Matrix out = values;
  for (Index c = 0; c < values.cols(); ++c) {
    if (stats.stddev(c) > 0.0) out.col(c) = (values.col(c).array() - stats.mean(c)) / stats.stddev(c);
  }
  return out;
}

Matrix unstandardize_values(const Matrix& values, const ColumnStats& stats) {
  if (stats.mean.size() != values.cols() || stats.stddev.size() != values.cols())
    throw ValidationError("stats", "dimension does not match matrix columns");
  Matrix out = values;
  for (Index c = 0; c < values.cols(); ++c) {
    if (stats.stddev(c) > 0.0) out.col(c) = values.col(c).array() * stats.stddev(c) + stats.mean(c);
  }
  return out;
}

std::pair<ProjectedMatrix, ColumnStats> standardize(const ProjectedMatrix& projected,
                                                    const std::optional<ColumnStats>& stats) {
  ColumnStats used = stats ? *stats : column_stats(projected.values);
  return {ProjectedMatrix{standardize_values(projected.values, used), projected.key_fingerprint},
          std::move(used)};
}

}  // namespace concealfuse
