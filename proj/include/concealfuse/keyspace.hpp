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

#ifndef CONCEALFUSE_KEYSPACE_HPP
#define CONCEALFUSE_KEYSPACE_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "concealfuse/core.hpp"

namespace concealfuse {

inline constexpr int kAlphaMin = -128;
inline constexpr int kAlphaMax = 127;
inline constexpr int kDefaultBetaMax = 8;
inline constexpr int kBitsPerInteger = 8;

// Coefficients and exponents of one model's polynomial
//   rho(v) = sum_i alphas[i] * v^betas[i].
// Nonzero alphas in [-128, 127]; pairwise distinct betas in [1, 255].
struct ModelKey {
  std::vector<int> alphas;
  std::vector<int> betas;

  int degree() const noexcept { return static_cast<int>(alphas.size()); }
  bool operator==(const ModelKey&) const = default;
};

// The concealment secret: one ModelKey per model of the bank. `seed` is
// bookkeeping only and does not take part in equality.
struct FusionKey {
  std::vector<ModelKey> model_keys;
  std::uint64_t seed = 0;

  int model_count() const noexcept { return static_cast<int>(model_keys.size()); }
  std::vector<int> degrees() const;
  bool operator==(const FusionKey& other) const { return model_keys == other.model_keys; }
};

struct KeyLength {
  int integer_count = 0;
  int bit_length = 0;
  bool operator==(const KeyLength&) const = default;
};

struct KeyGenOptions {
  int alpha_min = kAlphaMin;
  int alpha_max = kAlphaMax;
  int beta_max = kDefaultBetaMax;
};

FusionKey generate_key(const std::vector<int>& degrees, std::uint64_t seed,
                       const KeyGenOptions& options = {});
// Uniform degree for all `model_count` models.
FusionKey generate_key(int model_count, int degree, std::uint64_t seed,
                       const KeyGenOptions& options = {});

// alphas = {1}, betas = {1} for every model: projection becomes the identity.
FusionKey identity_key(int model_count);

KeyLength key_length(const FusionKey& key);

// Throws ValidationError naming the offending field.
void validate(const ModelKey& key, int beta_max = 255);
void validate(const FusionKey& key, int beta_max = 255);

// JSON layout: {"seed": u64, "models": [{"alphas": [...], "betas": [...]}, ...]}
std::string serialize_key(const FusionKey& key);
FusionKey deserialize_key(const std::string& blob);

FusionKey load_key(const std::string& path);
void save_key(const FusionKey& key, const std::string& path);

// Stable 64-bit digest of the secret part of the key.
std::uint64_t key_fingerprint(const FusionKey& key);

}  // namespace concealfuse

#endif  // CONCEALFUSE_KEYSPACE_HPP
