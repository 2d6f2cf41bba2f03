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

#ifndef CONCEALFUSE_CONCEAL_HPP
#define CONCEALFUSE_CONCEAL_HPP

#include <cmath>
#include <cstdint>
#include <optional>
#include <utility>

#include "concealfuse/core.hpp"
#include "concealfuse/keyspace.hpp"

namespace concealfuse {

inline constexpr double kPosteriorSumTolerance = 1e-9;

// N x 2K matrix of per-model (real, fake) posteriors. Columns (2k, 2k+1)
// belong to model k. Construction validates range and per-model sums.
class PosteriorMatrix {
 public:
  PosteriorMatrix() = default;
  explicit PosteriorMatrix(Matrix values, double sum_tolerance = kPosteriorSumTolerance);

  const Matrix& values() const noexcept { return values_; }
  Index rows() const noexcept { return values_.rows(); }
  int model_count() const noexcept { return static_cast<int>(values_.cols() / 2); }

 private:
  Matrix values_;
};

// The concealed design matrix; same shape as its source.
struct ProjectedMatrix {
  Matrix values;
  std::uint64_t key_fingerprint = 0;

  Index rows() const noexcept { return values.rows(); }
  int model_count() const noexcept { return static_cast<int>(values.cols() / 2); }
};

// rho(v) = sum_i alpha_i v^beta_i, terms summed in key order.
template <typename Scalar>
Scalar project_scalar(Scalar v, const ModelKey& key) {
  if (!std::isfinite(static_cast<double>(v))) throw ValidationError("value", "non-finite input");
  Scalar sum(0);
  for (std::size_t i = 0; i < key.alphas.size(); ++i) {
    // Exponentiation by squaring; betas are small positive integers.
    Scalar result(1);
    Scalar base = v;
    for (unsigned e = static_cast<unsigned>(key.betas[i]); e != 0; e >>= 1) {
      if (e & 1u) result *= base;
      base *= base;
    }
    sum += Scalar(key.alphas[i]) * result;
  }
  return sum;
}

// Entry (n, 2k + j) = project_scalar(X(n, 2k + j), key.model_keys[k]).
template <typename Derived>
typename Derived::PlainObject project(const Eigen::MatrixBase<Derived>& values,
                                      const FusionKey& key) {
  using Scalar = typename Derived::Scalar;
  if (values.cols() != 2 * static_cast<Index>(key.model_keys.size()))
    throw ValidationError("key", "model count " + std::to_string(key.model_keys.size()) +
                                     " does not match " + std::to_string(values.cols()) +
                                     " posterior columns");
  typename Derived::PlainObject out(values.rows(), values.cols());
  for (Index c = 0; c < values.cols(); ++c) {
    const ModelKey& mk = key.model_keys[static_cast<std::size_t>(c / 2)];
    for (Index n = 0; n < values.rows(); ++n) out(n, c) = project_scalar<Scalar>(values(n, c), mk);
  }
  return out;
}

ProjectedMatrix project_matrix(const PosteriorMatrix& posteriors, const FusionKey& key);

// Per-column mean and population standard deviation.
struct ColumnStats {
  Vector mean;
  Vector stddev;
};

ColumnStats column_stats(const Matrix& values);

// z-scores columns with `stats` (computed from `values` when absent). Columns
// with zero standard deviation are passed through unchanged.
std::pair<ProjectedMatrix, ColumnStats> standardize(const ProjectedMatrix& projected,
                                                    const std::optional<ColumnStats>& stats = {});
Matrix standardize_values(const Matrix& values, const ColumnStats& stats);
Matrix unstandardize_values(const Matrix& values, const ColumnStats& stats);

}  // namespace concealfuse

#endif  // CONCEALFUSE_CONCEAL_HPP
