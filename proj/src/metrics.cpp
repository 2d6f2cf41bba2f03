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

#include "concealfuse/metrics.hpp"

#include <cmath>
#include <cstdio>

namespace concealfuse {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

Vector ranks(const Vector& values) {
  const Index n = values.size();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return values(a) < values(b); });
  Vector r(n);
  Index i = 0;
  while (i < n) {
    Index j = i;
    while (j + 1 < n && values(order[j + 1]) == values(order[i])) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (Index k = i; k <= j; ++k) r(order[k]) = avg;
    i = j + 1;
  }
  return r;
}

double spearman(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw ValidationError("spearman", "size mismatch");
  if (a.size() < 2) return 0.0;
  const Vector ra = ranks(a);
  const Vector rb = ranks(b);
  const Vector ca = ra.array() - ra.mean();
  const Vector cb = rb.array() - rb.mean();
  const double den = std::sqrt(ca.squaredNorm() * cb.squaredNorm());
  if (den == 0.0) return 0.0;
  return ca.dot(cb) / den;
}

Vector moving_average(const Vector& values, int window) {
  const Index n = values.size();
  const Index half = std::max(0, window / 2);
  Vector out(n);
  for (Index i = 0; i < n; ++i) {
    const Index lo = std::max<Index>(0, i - half);
    const Index hi = std::min<Index>(n - 1, i + half);
    out(i) = values.segment(lo, hi - lo + 1).mean();
  }
  return out;
}

SplitIndices split(const Labels& labels, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
    throw ValidationError("train_fraction", "must lie in (0, 1)");
  Rng rng(spec.seed);
  SplitIndices out;
  for (int cls : {kReal, kFake}) {
    std::vector<Index> members;
    for (Index i = 0; i < labels.size(); ++i) {
      if (labels(i) == cls) members.push_back(i);
    }
    if (members.empty()) throw ValidationError("labels", "both classes must be present");
    std::shuffle(members.begin(), members.end(), rng);
    const auto n_train =
        static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(members.size())));
    if (n_train == 0 || n_train == members.size())
      throw ValidationError("train_fraction", "leaves one side of the split without class " +
                                                  std::to_string(cls));
    out.train.insert(out.train.end(), members.begin(), members.begin() + static_cast<long>(n_train));
    out.test.insert(out.test.end(), members.begin() + static_cast<long>(n_train), members.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

}  // namespace concealfuse
