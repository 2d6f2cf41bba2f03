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

#include "concealfuse/keyspace.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

namespace concealfuse {

using nlohmann::json;

std::vector<int> FusionKey::degrees() const {
  std::vector<int> out;
  out.reserve(model_keys.size());
  for (const auto& mk : model_keys) out.push_back(mk.degree());
  return out;
}

FusionKey generate_key(const std::vector<int>& degrees, std::uint64_t seed,
                       const KeyGenOptions& options) {
  if (degrees.empty()) throw ValidationError("models", "at least one model is required");
  if (options.beta_max < 1 || options.beta_max > 255)
    throw ValidationError("beta_max", "must lie in [1, 255]");
  if (options.alpha_min > options.alpha_max || options.alpha_min < kAlphaMin ||
      options.alpha_max > kAlphaMax || (options.alpha_min == 0 && options.alpha_max == 0))
    throw ValidationError("alpha_range", "must be a nonempty subrange of [-128, 127] with a nonzero value");
  for (int q : degrees) {
    if (q < 1) throw ValidationError("degree", "must be >= 1");
    if (q > options.beta_max)
      throw ValidationError("degree", "exceeds beta_max; distinct exponents cannot be drawn");
  }

  Rng rng(seed);
  std::uniform_int_distribution<int> alpha_dist(options.alpha_min, options.alpha_max);
  std::vector<int> pool(static_cast<std::size_t>(options.beta_max));
  FusionKey key;
  key.seed = seed;
  key.model_keys.reserve(degrees.size());
  for (int q : degrees) {
    ModelKey mk;
    mk.alphas.reserve(q);
    while (static_cast<int>(mk.alphas.size()) < q) {
      const int a = alpha_dist(rng);
      if (a != 0) mk.alphas.push_back(a);
    }
    // Partial Fisher-Yates over {1..beta_max}: a uniform q-subset in random order.
    std::iota(pool.begin(), pool.end(), 1);
    for (int i = 0; i < q; ++i) {
      std::uniform_int_distribution<int> pick(i, options.beta_max - 1);
      std::swap(pool[i], pool[pick(rng)]);
    }
    mk.betas.assign(pool.begin(), pool.begin() + q);
    key.model_keys.push_back(std::move(mk));
  }
  return key;
}

FusionKey generate_key(int model_count, int degree, std::uint64_t seed,
                       const KeyGenOptions& options) {
  if (model_count < 1) throw ValidationError("models", "at least one model is required");
  return generate_key(std::vector<int>(static_cast<std::size_t>(model_count), degree), seed,
                      options);
}

FusionKey identity_key(int model_count) {
  if (model_count < 1) throw ValidationError("models", "at least one model is required");
  FusionKey key;
  key.model_keys.assign(static_cast<std::size_t>(model_count), ModelKey{{1}, {1}});
  return key;
}

KeyLength key_length(const FusionKey& key) {
  int total = 0;
  for (const auto& mk : key.model_keys) total += mk.degree();
  return {2 * total, kBitsPerInteger * 2 * total};
}

void validate(const ModelKey& key, int beta_max) {
  if (key.alphas.empty()) throw ValidationError("alphas", "empty polynomial");
  if (key.alphas.size() != key.betas.size())
    throw ValidationError("betas", "length differs from alphas");
  for (int a : key.alphas) {
    if (a == 0) throw ValidationError("alphas", "zero coefficient");
    if (a < kAlphaMin || a > kAlphaMax) throw ValidationError("alphas", "coefficient out of range");
  }
  std::set<int> seen;
  for (int b : key.betas) {
    if (b < 1 || b > beta_max) throw ValidationError("betas", "exponent out of range");
    if (!seen.insert(b).second) throw ValidationError("betas", "duplicate exponent");
  }
}

void validate(const FusionKey& key, int beta_max) {
  if (key.model_keys.empty()) throw ValidationError("models", "at least one model is required");
  for (std::size_t k = 0; k < key.model_keys.size(); ++k) {
    try {
      validate(key.model_keys[k], beta_max);
    } catch (const ValidationError& e) {
      throw ValidationError("models[" + std::to_string(k) + "]." + e.field(),
                            std::string(e.what()).substr(e.field().size() + 2));
    }
  }
}

std::string serialize_key(const FusionKey& key) {
  json models = json::array();
  for (const auto& mk : key.model_keys) models.push_back({{"alphas", mk.alphas}, {"betas", mk.betas}});
  return json{{"seed", key.seed}, {"models", models}}.dump(2);
}

namespace {

std::vector<int> read_int_array(const json& node, const std::string& field) {
  if (!node.is_array()) throw ValidationError(field, "expected an array of integers");
  std::vector<int> out;
  for (const auto& v : node) {
    if (!v.is_number_integer()) throw ValidationError(field, "expected an array of integers");
    const auto x = v.get<std::int64_t>();
    if (x < -1000000 || x > 1000000) throw ValidationError(field, "integer out of range");
    out.push_back(static_cast<int>(x));
  }
  return out;
}

}  // namespace

FusionKey deserialize_key(const std::string& blob) {
  json doc;
  try {
    doc = json::parse(blob);
  } catch (const json::parse_error& e) {
    throw ValidationError("key", std::string("malformed JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ValidationError("key", "expected a JSON object");
  FusionKey key;
  if (doc.contains("seed")) {
    if (!doc["seed"].is_number_unsigned() && !doc["seed"].is_number_integer())
      throw ValidationError("seed", "expected an unsigned integer");
    key.seed = doc["seed"].get<std::uint64_t>();
  }
  if (!doc.contains("models") || !doc["models"].is_array())
    throw ValidationError("models", "missing array");
  for (std::size_t k = 0; k < doc["models"].size(); ++k) {
    const auto& m = doc["models"][k];
    const std::string prefix = "models[" + std::to_string(k) + "].";
    if (!m.is_object() || !m.contains("alphas") || !m.contains("betas"))
      throw ValidationError(prefix + "alphas", "model entry needs alphas and betas");
    key.model_keys.push_back(
        {read_int_array(m["alphas"], prefix + "alphas"), read_int_array(m["betas"], prefix + "betas")});
  }
  validate(key);
  return key;
}

FusionKey load_key(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("key", "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize_key(ss.str());
}

void save_key(const FusionKey& key, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("key", "cannot write " + path);
  out << serialize_key(key) << '\n';
}

std::uint64_t key_fingerprint(const FusionKey& key) {
  std::string bytes;
  for (const auto& mk : key.model_keys) {
    bytes += 'M';
    for (std::size_t i = 0; i < mk.alphas.size(); ++i) {
      bytes += std::to_string(mk.alphas[i]) + "^" + std::to_string(mk.betas[i]) + ";";
    }
  }
  return fnv1a(bytes);
}

}  // namespace concealfuse
