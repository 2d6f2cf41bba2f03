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

#ifndef CONCEALFUSE_METRICS_HPP
#define CONCEALFUSE_METRICS_HPP

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "concealfuse/core.hpp"

namespace concealfuse {

// Average precision of `positive` when samples are ranked by decreasing score.
// Equal scores keep sample order (stable sort), so the ranking is total.
template <typename DS, typename DL>
double average_precision(const Eigen::MatrixBase<DS>& scores, const Eigen::MatrixBase<DL>& labels,
                         int positive) {
  const Index n = scores.size();
  if (labels.size() != n) throw ValidationError("labels", "size differs from scores");
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return scores(a) > scores(b); });
  double hits = 0.0;
  double sum = 0.0;
  for (Index rank = 0; rank < n; ++rank) {
    if (labels(order[static_cast<std::size_t>(rank)]) == positive) {
      hits += 1.0;
      sum += hits / static_cast<double>(rank + 1);
    }
  }
  if (hits == 0.0) throw ValidationError("labels", "no sample of the positive class");
  return sum / hits;
}

struct ApReport {
  double ap_fake = 0.0;
  double ap_real = 0.0;
  double map = 0.0;
};

// Binary mAP: mean of AP(fake) ranked by `fake_scores` and AP(real) ranked by
// the complementary scores (negated, which preserves ties).
template <typename DS, typename DL>
ApReport average_precision_report(const Eigen::MatrixBase<DS>& fake_scores,
                                  const Eigen::MatrixBase<DL>& labels) {
  for (Index i = 0; i < labels.size(); ++i) {
    if (labels(i) != kReal && labels(i) != kFake)
      throw ValidationError("labels", "labels must be 0 (real) or 1 (fake)");
  }
  const Eigen::VectorXd s = fake_scores.template cast<double>();
  ApReport r;
  r.ap_fake = average_precision(s, labels, kFake);
  r.ap_real = average_precision((-s).eval(), labels, kReal);
  r.map = 0.5 * (r.ap_fake + r.ap_real);
  return r;
}

template <typename DS, typename DL>
double mean_average_precision(const Eigen::MatrixBase<DS>& fake_scores,
                              const Eigen::MatrixBase<DL>& labels) {
  return average_precision_report(fake_scores, labels).map;
}

// Average ranks with ties sharing the mean rank.
Vector ranks(const Vector& values);
// Spearman rank correlation; 0 when either side is constant.
double spearman(const Vector& a, const Vector& b);
// Centered moving average; the window shrinks at the ends.
Vector moving_average(const Vector& values, int window);

struct SplitSpec {
  double train_fraction = 0.5;
  std::uint64_t seed = 0;
  bool stratified = true;
};

struct SplitIndices {
  std::vector<Index> train;
  std::vector<Index> test;
};

// Stratified, seeded, disjoint and exhaustive. Each class contributes
// round(train_fraction * class_count) samples to the training side.
SplitIndices split(const Labels& labels, const SplitSpec& spec);

}  // namespace concealfuse

#endif  // CONCEALFUSE_METRICS_HPP
