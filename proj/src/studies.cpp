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

#include "concealfuse/studies.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <set>
#include <thread>

#include "concealfuse/io.hpp"
#include "concealfuse/metrics.hpp"

namespace concealfuse {

namespace {

constexpr double kUndefined = std::numeric_limits<double>::quiet_NaN();

double or_undefined(const std::optional<double>& v) { return v ? *v : kUndefined; }

}  // namespace

std::size_t StudyResult::metric_index(const std::string& name) const {
  const auto it = std::find(metrics.begin(), metrics.end(), name);
  if (it == metrics.end()) throw ValidationError("metric", "unknown metric " + name);
  return static_cast<std::size_t>(it - metrics.begin());
}

std::vector<double> StudyResult::values(const std::string& metric, const std::string& parameter) const {
  const std::size_t m = metric_index(metric);
  std::vector<double> out;
  for (const auto& row : rows)
    if (row.parameter == parameter) out.push_back(row.values[m]);
  return out;
}

std::vector<std::string> StudyResult::parameters() const {
  std::vector<std::string> out;
  for (const auto& row : rows)
    if (std::find(out.begin(), out.end(), row.parameter) == out.end()) out.push_back(row.parameter);
  return out;
}

void write_study_csv(const StudyResult& study, const std::string& path, const std::string& config_hash) {
  CsvTable t;
  t.header = {"kind", "parameter", "seed", "config_hash"};
  t.header.insert(t.header.end(), study.metrics.begin(), study.metrics.end());
  for (const auto& row : study.rows) {
    std::vector<std::string> cells{study.kind, row.parameter, std::to_string(row.seed), row.config_hash};
    for (double v : row.values) cells.push_back(std::isnan(v) ? "undefined" : format_double(v));
    t.rows.push_back(std::move(cells));
  }
  write_csv(path, t, config_hash);
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, threads)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

std::string format_parameter(double v) { return format_double(v); }

std::vector<std::uint64_t> seed_range(std::uint64_t first, int count) {
  std::vector<std::uint64_t> out;
  for (int i = 0; i < count; ++i) out.push_back(first + static_cast<std::uint64_t>(i));
  return out;
}

StudyResult split_sweep(const PipelineConfig& base, const std::vector<double>& fractions,
                        const std::vector<std::uint64_t>& seeds, int threads) {
  StudyResult study;
  study.kind = "split_sweep";
  study.metrics = {"fusion_map", "fusion_accuracy", "best_single_map"};
  for (int k = 0; k < base.bank.models; ++k) study.metrics.push_back("single_map_m" + std::to_string(k));
  study.rows.resize(fractions.size() * seeds.size());
  parallel_for(study.rows.size(), threads, [&](std::size_t cell) {
    const double fraction = fractions[cell / seeds.size()];
    const std::uint64_t seed = seeds[cell % seeds.size()];
    PipelineConfig cfg = base.with_seed(seed);
    cfg.split.train_fraction = fraction;
    const DataSplit data = prepare_data(cfg);
    const Pipeline p = fit_pipeline(cfg, data.train).pipeline;
    const Evaluation e = evaluate(p, data.test);
    StudyRow row{format_parameter(fraction), seed, config_hash(to_json(cfg)),
                 {e.fusion_map, e.fusion_accuracy, e.best_single()}};
    row.values.insert(row.values.end(), e.single_map.begin(), e.single_map.end());
    study.rows[cell] = std::move(row);
  });
  return study;
}

namespace {

struct AttemptOutcome {
  int attempts = 0;
  bool converged = false;
  double final_map = 0.0;
};

// `design(a)` returns the head's training design matrix for attempt a.
AttemptOutcome attempt_until_converged(const std::function<Matrix(int)>& design, const Labels& labels,
                                       const TrainConfig& head, int cap) {
  AttemptOutcome out;
  for (int a = 1; a <= cap; ++a) {
    TrainConfig cfg = head;
    cfg.seed = derive_seed(head.seed, static_cast<std::uint64_t>(a));
    const TrainResult r = train(design(a), labels, cfg);
    out.attempts = a;
    out.final_map = r.trace.epochs.empty() ? 0.0 : r.trace.epochs.back().train_map;
    if (r.trace.converged()) {
      out.converged = true;
      break;
    }
  }
  return out;
}

}  // namespace

StudyResult key_length_study(const PipelineConfig& base, const KeyLengthOptions& options,
                             const std::vector<std::uint64_t>& seeds, int threads) {
  if (options.attempt_cap < 1) throw ValidationError("attempt_cap", "must be >= 1");
  for (int q : options.degrees)
    if (q < 1 || q > options.beta_max) throw ValidationError("degrees", "each degree must lie in [1, beta_max]");
  StudyResult study;
  study.kind = "key_length";
  study.metrics = {"key_length", "attempts", "censored", "final_train_map", "unprotected_attempts"};
  const std::size_t per_seed = options.degrees.size() + (options.include_identity ? 1 : 0);
  study.rows.resize(per_seed * seeds.size());
  parallel_for(seeds.size(), threads, [&](std::size_t s) {
    const std::uint64_t seed = seeds[s];
    const PipelineConfig cfg = base.with_seed(seed);
    const DataSplit data = prepare_data(cfg);
    const std::vector<DetectorTrainingSet> sets(static_cast<std::size_t>(cfg.bank.models),
                                                DetectorTrainingSet{&data.train.pixels, &data.train.labels});
    const Matrix posteriors =
        cross_fit_posteriors(cfg.bank, sets, data.train.pixels, data.train.labels, data.train.width,
                             data.train.height, cfg.cross_fit_folds, derive_seed(cfg.bank.seed, "folds"));
    auto keyed_design = [&](const FusionKey& key) {
      Matrix x = project(posteriors, key);
      if (cfg.standardize) x = standardize_values(x, column_stats(x));
      return x;
    };
    const std::string hash = config_hash(to_json(cfg));
    const int k = cfg.bank.models;
    for (std::size_t d = 0; d < options.degrees.size(); ++d) {
      const int q = options.degrees[d];
      KeyGenOptions kopts;
      kopts.beta_max = options.beta_max;
      const AttemptOutcome o = attempt_until_converged(
          [&](int a) {
            const std::uint64_t key_seed =
                derive_seed(derive_seed(cfg.key.seed, static_cast<std::uint64_t>(q)), static_cast<std::uint64_t>(a));
            return keyed_design(generate_key(k, q, key_seed, kopts));
          },
          data.train.labels, cfg.head, options.attempt_cap);
      study.rows[s * per_seed + d] =
          StudyRow{std::to_string(2 * k * q), seed, hash,
                   {static_cast<double>(2 * k * q), static_cast<double>(o.attempts), o.converged ? 0.0 : 1.0,
                    o.final_map, kUndefined}};
    }
    if (options.include_identity) {
      const FusionKey id = identity_key(k);
      const AttemptOutcome keyed =
          attempt_until_converged([&](int) { return keyed_design(id); }, data.train.labels, cfg.head,
                                  options.attempt_cap);
      const AttemptOutcome raw = attempt_until_converged(
          [&](int) {
            Matrix x = posteriors;
            if (cfg.standardize) x = standardize_values(x, column_stats(x));
            return x;
          },
          data.train.labels, cfg.head, options.attempt_cap);
      study.rows[s * per_seed + options.degrees.size()] =
          StudyRow{"identity", seed, hash,
                   {static_cast<double>(2 * k), static_cast<double>(keyed.attempts), keyed.converged ? 0.0 : 1.0,
                    keyed.final_map, static_cast<double>(raw.attempts)}};
    }
  });
  return study;
}

StudyResult train_trace_study(const PipelineConfig& cfg) {
  const DataSplit data = prepare_data(cfg);
  const FitOutput fit = fit_pipeline(cfg, data.train);
  StudyResult study;
  study.kind = "train_trace";
  study.metrics = {"loss", "learning_rate", "confidence", "train_map"};
  const std::string hash = config_hash(to_json(cfg));
  for (const EpochRecord& e : fit.trace.epochs) {
    study.rows.push_back(StudyRow{std::to_string(e.epoch), cfg.head.seed, hash,
                                  {e.loss, e.learning_rate, e.confidence, e.train_map}});
  }
  return study;
}

FusionKey random_decoy(const FusionKey& key, std::uint64_t seed, int beta_max) {
  KeyGenOptions opts;
  opts.beta_max = beta_max;
  return generate_key(key.degrees(), seed, opts);
}

FusionKey single_beta_decoy(const FusionKey& key, std::uint64_t seed, int beta_max) {
  Rng rng(seed);
  FusionKey out = key;
  std::vector<std::size_t> candidates;
  for (std::size_t k = 0; k < key.model_keys.size(); ++k)
    if (key.model_keys[k].degree() < beta_max) candidates.push_back(k);
  if (candidates.empty()) throw ValidationError("decoy", "every exponent value is already in use");
  const std::size_t k = candidates[std::uniform_int_distribution<std::size_t>(0, candidates.size() - 1)(rng)];
  ModelKey& mk = out.model_keys[k];
  const std::size_t i = std::uniform_int_distribution<std::size_t>(0, mk.betas.size() - 1)(rng);
  const std::set<int> used(mk.betas.begin(), mk.betas.end());
  std::vector<int> free;
  for (int b = 1; b <= beta_max; ++b)
    if (!used.count(b)) free.push_back(b);
  mk.betas[i] = free[std::uniform_int_distribution<std::size_t>(0, free.size() - 1)(rng)];
  return out;
}

StudyResult wrong_key_study(const PipelineConfig& base, const std::vector<std::uint64_t>& seeds, int threads) {
  StudyResult study;
  study.kind = "wrong_key";
  study.metrics = {"clean_map", "true_key_map", "random_decoy_map", "single_beta_decoy_map"};
  study.rows.resize(seeds.size());
  parallel_for(seeds.size(), threads, [&](std::size_t s) {
    const PipelineConfig cfg = base.with_seed(seeds[s]);
    const DataSplit data = prepare_data(cfg);
    const Pipeline p = fit_pipeline(cfg, data.train).pipeline;
    const Matrix post = bank_posteriors(p.bank, data.test.pixels).values();
    const double clean = evaluate_posteriors(p, post, data.test.labels).fusion_map;
    const int beta_max = std::max(cfg.key.beta_max, cfg.key.degree);
    const double same = wrong_key_probe(p, post, data.test.labels, p.key);
    const double random =
        wrong_key_probe(p, post, data.test.labels, random_decoy(p.key, derive_seed(cfg.key.seed, "decoy"), beta_max));
    const double single = wrong_key_probe(p, post, data.test.labels,
                                          single_beta_decoy(p.key, derive_seed(cfg.key.seed, "beta"), beta_max));
    study.rows[s] = StudyRow{"decoy", seeds[s], config_hash(to_json(cfg)), {clean, same, random, single}};
  });
  return study;
}

StudyResult attack_sweep(const PipelineConfig& base, const AttackConfig& attack, const std::vector<double>& values,
                         const std::vector<std::uint64_t>& seeds, int threads) {
  validate(attack);
  StudyResult study;
  study.kind = "attack_" + to_string(attack.kind);
  study.metrics = {"success_rate", "success_confidence", "training_confidence", "training_accuracy",
                   "n_eligible", "n_flipped"};
  const std::size_t per_seed = std::max<std::size_t>(values.size(), 1);
  study.rows.resize(per_seed * seeds.size());
  parallel_for(seeds.size(), threads, [&](std::size_t s) {
    const PipelineConfig cfg = base.with_seed(seeds[s]);
    const AttackContext ctx = make_attack_context(cfg);
    AttackConfig a = attack;
    a.seed = derive_seed(attack.seed, seeds[s]);
    nlohmann::json cell{{"pipeline", to_json(cfg)}, {"attack", to_json(a)}};
    const std::string hash = config_hash(cell);
    for (std::size_t v = 0; v < per_seed; ++v) {
      const std::optional<double> parameter = values.empty() ? std::nullopt : std::optional<double>(values[v]);
      const AttackReport r = run_attack(ctx, a, parameter);
      study.rows[s * per_seed + v] =
          StudyRow{parameter ? format_parameter(*parameter) : std::string("config"), seeds[s], hash,
                   {or_undefined(r.success_rate), or_undefined(r.success_confidence), r.training_confidence,
                    or_undefined(r.training_accuracy), static_cast<double>(r.n_eligible),
                    static_cast<double>(r.n_flipped)}};
    }
  });
  return study;
}

}  // namespace concealfuse
