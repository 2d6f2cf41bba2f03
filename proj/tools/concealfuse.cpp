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

// concealfuse command line: keys, data, bank, projection, head, attacks, studies.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "concealfuse/attacks.hpp"
#include "concealfuse/bayesnet.hpp"
#include "concealfuse/conceal.hpp"
#include "concealfuse/config.hpp"
#include "concealfuse/io.hpp"
#include "concealfuse/keyspace.hpp"
#include "concealfuse/metrics.hpp"
#include "concealfuse/modelbank.hpp"
#include "concealfuse/pipeline.hpp"
#include "concealfuse/studies.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace concealfuse;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  bool seed_given = false;
  int threads = 1;
  std::string out_dir = ".";
};

std::string output_path(const Globals& g, const std::string& path) {
  const fs::path p(path);
  if (p.is_absolute() || g.out_dir.empty()) return path;
  fs::create_directories(g.out_dir);
  return (fs::path(g.out_dir) / p).string();
}

// Config identity of a run: its effective parameters plus the content hash
// of every input file.
std::string run_hash(json params, const std::vector<std::string>& inputs) {
  json files = json::array();
  for (const auto& path : inputs) files.push_back(hex64(fnv1a(read_text_file(path))));
  params["inputs"] = files;
  return config_hash(params);
}

PipelineConfig load_pipeline_config(const std::string& path, const Globals& g) {
  const PipelineConfig cfg = path.empty() ? PipelineConfig{} : pipeline_config_from_json(read_json_file(path));
  validate(cfg);
  return cfg.with_seed(g.seed);
}

void write_report_csv(const std::string& path, const std::string& kind, const std::vector<std::string>& params,
                      const std::vector<AttackReport>& reports, std::uint64_t seed, const std::string& hash) {
  auto cell = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string("undefined"); };
  CsvTable t;
  t.header = {"kind", "parameter", "success_rate", "success_confidence", "training_confidence",
              "training_accuracy", "seed", "n_eligible", "n_flipped"};
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const AttackReport& r = reports[i];
    t.rows.push_back({kind, params[i], cell(r.success_rate), cell(r.success_confidence),
                      format_double(r.training_confidence), cell(r.training_accuracy), std::to_string(seed),
                      std::to_string(r.n_eligible), std::to_string(r.n_flipped)});
  }
  write_csv(path, t, hash);
}

Labels require_labels(const Labels& labels, const std::string& what) {
  if (labels.size() == 0 || (labels.array() < 0).any())
    throw ValidationError(what, "every row needs a label");
  return labels;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Concealed late fusion: keyed polynomial projection and a Bayesian fusion head"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Master seed")->each([&](const std::string&) { g.seed_given = true; });
  app.add_option("--threads", g.threads, "Worker threads for studies")->check(CLI::PositiveNumber);
  app.add_option("--out-dir", g.out_dir, "Directory for relative output paths");

  // keygen
  auto* keygen = app.add_subcommand("keygen", "Generate a fusion key");
  int kg_models = 6, kg_degree = 3, kg_beta_max = kDefaultBetaMax;
  bool kg_identity = false;
  std::string kg_out = "key.json";
  keygen->add_option("--models", kg_models, "Number of fused models K");
  keygen->add_option("--degree", kg_degree, "Polynomial degree per model");
  keygen->add_option("--beta-max", kg_beta_max, "Largest exponent");
  keygen->add_flag("--identity", kg_identity, "Identity key (rho(v) = v)");
  keygen->add_option("--out", kg_out, "Key file");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic real/fake dataset");
  DatasetSpec gd;
  std::string gd_config, gd_out = "data.bin";
  gen->add_option("--config", gd_config, "Generator spec JSON");
  gen->add_option("--n", gd.n, "Number of images (even)");
  gen->add_option("--gamma", gd.gamma, "Artifact strength in (0, 1]");
  gen->add_option("--noise", gd.noise, "White noise level");
  gen->add_option("--out", gd_out, "Dataset file");

  // train-bank
  auto* tb = app.add_subcommand("train-bank", "Train the toy detector bank");
  BankConfig bc;
  std::string tb_data, tb_config, tb_out = "bank.json";
  tb->add_option("--data", tb_data, "Dataset file")->required();
  tb->add_option("--config", tb_config, "Bank config JSON");
  tb->add_option("--k", bc.models, "Number of detectors");
  tb->add_option("--conv", bc.conv_detectors, "How many of them use the conv extractor");
  tb->add_option("--out", tb_out, "Bank file");

  // posteriors
  auto* po = app.add_subcommand("posteriors", "Bank posteriors of a dataset");
  std::string po_bank, po_data, po_out = "posteriors.csv";
  po->add_option("--bank", po_bank, "Bank file")->required();
  po->add_option("--data", po_data, "Dataset file")->required();
  po->add_option("--out", po_out, "Posterior CSV");

  // project
  auto* pr = app.add_subcommand("project", "Conceal a posterior matrix with a key");
  std::string pr_in, pr_key, pr_out = "projected.csv";
  pr->add_option("--in", pr_in, "Posterior CSV")->required();
  pr->add_option("--key", pr_key, "Key file")->required();
  pr->add_option("--out", pr_out, "Projected CSV");

  // train
  auto* tr = app.add_subcommand("train", "Train the Bayesian fusion head");
  std::string tr_in, tr_config, tr_out = "model.json", tr_trace;
  tr->add_option("--in", tr_in, "Projected CSV (labelled)")->required();
  tr->add_option("--config", tr_config, "Training config JSON");
  tr->add_option("--out", tr_out, "Model file");
  tr->add_option("--trace", tr_trace, "Per-epoch trace CSV");

  // predict
  auto* pd = app.add_subcommand("predict", "Score projected samples");
  std::string pd_model, pd_in, pd_out = "scores.csv";
  pd->add_option("--model", pd_model, "Model file")->required();
  pd->add_option("--in", pd_in, "Projected CSV")->required();
  pd->add_option("--out", pd_out, "Scores CSV");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "mAP of a scores file, or of a full pipeline run");
  std::string ev_scores, ev_config, ev_out = "evaluation.csv", ev_save;
  ev->add_option("--scores", ev_scores, "Scores CSV from predict");
  ev->add_option("--config", ev_config, "Pipeline config JSON (runs data, bank, key and head)");
  ev->add_option("--save-pipeline", ev_save, "Write the trained pipeline here");
  ev->add_option("--out", ev_out, "Metrics CSV");

  // attack
  auto* at = app.add_subcommand("attack", "Run a model attack against a freshly trained pipeline");
  std::string at_kind, at_config, at_pipeline, at_out = "report.csv";
  at->add_option("--kind", at_kind, "poison | perturb | reverse | backdoor");
  at->add_option("--config", at_config, "Attack config JSON");
  at->add_option("--pipeline", at_pipeline, "Pipeline config JSON");
  at->add_option("--out", at_out, "Report CSV");

  // study
  auto* st = app.add_subcommand("study", "Run a study grid");
  std::string st_kind, st_config, st_attack, st_out = "study.csv";
  int st_seeds = 10, st_cap = 5, st_beta_max = 16;
  bool st_identity = false;
  std::vector<double> st_fractions{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::vector<int> st_degrees{1, 3, 7, 15};
  std::vector<double> st_values;
  st->add_option("--kind", st_kind, "split_sweep | key_length | train_trace | wrong_key | attack_sweep")
      ->required()
      ->check(CLI::IsMember({"split_sweep", "key_length", "train_trace", "wrong_key", "attack_sweep"}));
  st->add_option("--config", st_config, "Pipeline config JSON");
  st->add_option("--attack", st_attack, "Attack config JSON (attack_sweep)");
  st->add_option("--seeds", st_seeds, "Seeds per cell, counting up from --seed")->check(CLI::PositiveNumber);
  st->add_option("--fractions", st_fractions, "Train fractions (split_sweep)");
  st->add_option("--degrees", st_degrees, "Degrees per model (key_length)");
  st->add_option("--attempt-cap", st_cap, "Attempts before a cell is censored (key_length)");
  st->add_option("--beta-max", st_beta_max, "Largest exponent (key_length)");
  st->add_flag("--identity", st_identity, "Add the identity-key row (key_length)");
  st->add_option("--values", st_values, "Sweep values (attack_sweep); overrides the config's sweep");
  st->add_option("--out", st_out, "Study CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (keygen->parsed()) {
      FusionKey key;
      if (kg_identity) {
        key = identity_key(kg_models);
      } else {
        KeyGenOptions opts;
        opts.beta_max = kg_beta_max;
        key = generate_key(kg_models, kg_degree, g.seed, opts);
      }
      save_key(key, output_path(g, kg_out));
      const KeyLength len = key_length(key);
      std::cout << "key: " << len.integer_count << " integers, " << len.bit_length << " bits\n";
    } else if (gen->parsed()) {
      DatasetSpec spec = gd_config.empty() ? DatasetSpec{} : dataset_spec_from_json(read_json_file(gd_config));
      if (gen->count("--n")) spec.n = gd.n;
      if (gen->count("--gamma")) spec.gamma = gd.gamma;
      if (gen->count("--noise")) spec.noise = gd.noise;
      spec.seed = g.seed;
      const SyntheticDataset data = generate_dataset(spec);
      save_dataset(data, output_path(g, gd_out));
      std::cout << "dataset: " << data.size() << " images " << data.width << "x" << data.height << "\n";
    } else if (tb->parsed()) {
      BankConfig cfg = tb_config.empty() ? BankConfig{} : bank_config_from_json(read_json_file(tb_config));
      if (tb->count("--k")) cfg.models = bc.models;
      if (tb->count("--conv")) cfg.conv_detectors = bc.conv_detectors;
      cfg.seed = g.seed;
      const SyntheticDataset data = load_dataset(tb_data);
      const ToyBank bank = train_bank(data, cfg);
      save_bank(bank, output_path(g, tb_out));
      std::cout << "bank: " << bank.model_count() << " detectors\n";
    } else if (po->parsed()) {
      const ToyBank bank = load_bank(po_bank);
      const SyntheticDataset data = load_dataset(po_data);
      PosteriorTable table{bank_posteriors(bank, data.pixels), data.labels, {}};
      for (auto id : data.ids) table.sample_ids.push_back(std::to_string(id));
      save_posteriors(table, output_path(g, po_out), run_hash({{"command", "posteriors"}}, {po_bank, po_data}));
    } else if (pr->parsed()) {
      const PosteriorTable table = load_posteriors(pr_in);
      const FusionKey key = load_key(pr_key);
      const ProjectedMatrix projected = project_matrix(table.matrix, key);
      write_matrix_csv(output_path(g, pr_out), MatrixTable{table.sample_ids, table.labels, projected.values},
                       run_hash({{"command", "project"}}, {pr_in, pr_key}));
    } else if (tr->parsed()) {
      TrainConfig cfg = tr_config.empty() ? TrainConfig{} : train_config_from_json(read_json_file(tr_config));
      if (g.seed_given || tr_config.empty()) cfg.seed = g.seed;
      const MatrixTable table = read_matrix_csv(tr_in);
      const TrainResult r = train(table.values, require_labels(table.labels, tr_in), cfg);
      save_model(r.model, output_path(g, tr_out));
      if (!tr_trace.empty()) {
        CsvTable t;
        t.header = {"epoch", "loss", "learning_rate", "confidence", "train_map"};
        for (const auto& e : r.trace.epochs)
          t.rows.push_back({std::to_string(e.epoch), format_double(e.loss), format_double(e.learning_rate),
                            format_double(e.confidence), format_double(e.train_map)});
        write_csv(output_path(g, tr_trace), t, run_hash({{"command", "train"}, {"config", to_json(cfg)}}, {tr_in}));
      }
      std::cout << "trained " << r.trace.epochs.size() << " epochs (" << r.trace.stop_reason
                << "), training confidence " << r.model.training_confidence() << "\n";
    } else if (pd->parsed()) {
      const BayesianClassifier model = load_model(pd_model);
      const MatrixTable table = read_matrix_csv(pd_in);
      CsvTable t;
      t.header = {"sample_id", "label", "t_real", "t_fake", "class", "confidence", "var_real", "var_fake"};
      for (Index n = 0; n < table.values.rows(); ++n) {
        const PredictiveOutput o = predict(model, table.values.row(n).transpose());
        t.rows.push_back({table.sample_ids[static_cast<std::size_t>(n)],
                          table.labels(n) < 0 ? std::string() : std::to_string(table.labels(n)),
                          format_double(o.outputs(0)), format_double(o.outputs(1)), std::to_string(o.cls),
                          format_double(o.confidence), format_double(o.variance(0)), format_double(o.variance(1))});
      }
      write_csv(output_path(g, pd_out), t, run_hash({{"command", "predict"}}, {pd_model, pd_in}));
    } else if (ev->parsed()) {
      if (ev_scores.empty() == ev_config.empty())
        throw ValidationError("evaluate", "give exactly one of --scores or --config");
      CsvTable t;
      t.header = {"metric", "value"};
      std::string hash;
      if (!ev_scores.empty()) {
        const CsvTable scores = read_csv(ev_scores);
        const auto col = [&](const std::string& name) {
          const auto it = std::find(scores.header.begin(), scores.header.end(), name);
          if (it == scores.header.end()) throw ValidationError(name, "missing column in " + ev_scores);
          return static_cast<std::size_t>(it - scores.header.begin());
        };
        const std::size_t label_col = col("label"), real_col = col("t_real"), fake_col = col("t_fake");
        Vector s(static_cast<Index>(scores.rows.size()));
        Labels y(static_cast<Index>(scores.rows.size()));
        for (std::size_t i = 0; i < scores.rows.size(); ++i) {
          const auto& row = scores.rows[i];
          s(static_cast<Index>(i)) = parse_double(row[fake_col], "t_fake") - parse_double(row[real_col], "t_real");
          y(static_cast<Index>(i)) = static_cast<int>(parse_int(row[label_col], "label"));
        }
        const ApReport ap = average_precision_report(s, y);
        t.rows = {{"map", format_double(ap.map)}, {"ap_fake", format_double(ap.ap_fake)},
                  {"ap_real", format_double(ap.ap_real)}};
        hash = run_hash({{"command", "evaluate"}}, {ev_scores});
      } else {
        const PipelineConfig cfg = load_pipeline_config(ev_config, g);
        const DataSplit data = prepare_data(cfg);
        const Pipeline p = fit_pipeline(cfg, data.train).pipeline;
        const Evaluation e = evaluate(p, data.test);
        t.rows = {{"fusion_map", format_double(e.fusion_map)},
                  {"fusion_accuracy", format_double(e.fusion_accuracy)},
                  {"best_single_map", format_double(e.best_single())},
                  {"training_confidence", format_double(p.training_confidence())}};
        for (std::size_t k = 0; k < e.single_map.size(); ++k)
          t.rows.push_back({"single_map_m" + std::to_string(k), format_double(e.single_map[k])});
        hash = config_hash(to_json(cfg));
        if (!ev_save.empty()) {
          std::ofstream out(output_path(g, ev_save));
          if (!out) throw ValidationError("save-pipeline", "cannot write " + ev_save);
          out << serialize_pipeline(p) << '\n';
        }
      }
      write_csv(output_path(g, ev_out), t, hash);
    } else if (at->parsed()) {
      AttackConfig cfg = at_config.empty() ? AttackConfig{} : attack_config_from_json(read_json_file(at_config));
      if (!at_kind.empty()) cfg.kind = attack_kind_from_string(at_kind);
      if (at_config.empty() && at_kind.empty()) throw ValidationError("kind", "give --kind or --config");
      if (g.seed_given || at_config.empty()) cfg.seed = g.seed;
      validate(cfg);
      const PipelineConfig pcfg = load_pipeline_config(at_pipeline, g);
      const AttackContext ctx = make_attack_context(pcfg);
      std::vector<std::string> params;
      std::vector<AttackReport> reports;
      if (cfg.sweep.empty()) {
        params.push_back("config");
        reports.push_back(run_attack(ctx, cfg));
      } else {
        for (double v : cfg.sweep) {
          params.push_back(format_parameter(v));
          reports.push_back(run_attack(ctx, cfg, v));
        }
      }
      write_report_csv(output_path(g, at_out), to_string(cfg.kind), params, reports, cfg.seed,
                       config_hash({{"pipeline", to_json(pcfg)}, {"attack", to_json(cfg)}}));
    } else if (st->parsed()) {
      const PipelineConfig base = st_config.empty() ? PipelineConfig{} : pipeline_config_from_json(read_json_file(st_config));
      validate(base);
      const std::vector<std::uint64_t> seeds = seed_range(g.seed, st_seeds);
      StudyResult result;
      json params{{"command", "study"}, {"kind", st_kind}, {"pipeline", to_json(base)}, {"seed", g.seed},
                  {"seeds", st_seeds}};
      if (st_kind == "split_sweep") {
        params["fractions"] = st_fractions;
        result = split_sweep(base, st_fractions, seeds, g.threads);
      } else if (st_kind == "key_length") {
        KeyLengthOptions opts;
        opts.degrees = st_degrees;
        opts.attempt_cap = st_cap;
        opts.beta_max = st_beta_max;
        opts.include_identity = st_identity;
        params["degrees"] = st_degrees;
        params["attempt_cap"] = st_cap;
        params["beta_max"] = st_beta_max;
        params["identity"] = st_identity;
        result = key_length_study(base, opts, seeds, g.threads);
      } else if (st_kind == "train_trace") {
        result = train_trace_study(base.with_seed(g.seed));
      } else if (st_kind == "wrong_key") {
        result = wrong_key_study(base, seeds, g.threads);
      } else {
        if (st_attack.empty()) throw ValidationError("attack", "attack_sweep needs --attack");
        const AttackConfig attack = attack_config_from_json(read_json_file(st_attack));
        const std::vector<double> values = st->count("--values") ? st_values : attack.sweep;
        params["attack"] = to_json(attack);
        params["values"] = values;
        result = attack_sweep(base, attack, values, seeds, g.threads);
      }
      write_study_csv(result, output_path(g, st_out), config_hash(params));
      std::cout << result.kind << ": " << result.rows.size() << " rows\n";
    }
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 1;
  } catch (const RuntimeFailure& e) {
    std::cerr << "runtime failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
