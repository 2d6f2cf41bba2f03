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

#ifndef CONCEALFUSE_TESTS_FIXTURES_HPP
#define CONCEALFUSE_TESTS_FIXTURES_HPP

#include "concealfuse/config.hpp"

namespace concealfuse::fixtures {

// Moderate artifact, 800 images, six projection detectors, Q = 3 keys.
inline PipelineConfig fusion(double train_fraction = 0.5) {
  PipelineConfig cfg;
  cfg.data.n = 800;
  cfg.data.gamma = 0.6;
  cfg.split.train_fraction = train_fraction;
  return cfg;
}

// Weaker artifact; the head is trained on out-of-fold bank posteriors so its
// training confidence reflects unseen data.
inline PipelineConfig attack() {
  PipelineConfig cfg;
  cfg.data.n = 800;
  cfg.data.gamma = 0.4;
  cfg.split.train_fraction = 0.5;
  cfg.cross_fit_folds = 5;
  return cfg;
}

// Strong artifact, small: nearly separable.
inline PipelineConfig separable() {
  PipelineConfig cfg;
  cfg.data.n = 240;
  cfg.data.gamma = 1.0;
  cfg.split.train_fraction = 0.5;
  return cfg;
}

}  // namespace concealfuse::fixtures

#endif  // CONCEALFUSE_TESTS_FIXTURES_HPP
