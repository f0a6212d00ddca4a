// Copyright 2025 The mosfuse Authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "mosfuse/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "mosfuse/checkpoint.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mosfuse::pipeline {

namespace {

std::vector<ingest::FilterRule> rules_for_entry(const DatasetEntry& e) {
  std::vector<ingest::FilterRule> rules;
  for (const std::string& r : e.rules) {
    if (r == "default") {
      auto defaults = ingest::default_rules(e.format);
      rules.insert(rules.end(), defaults.begin(), defaults.end());
    } else if (r == "none") {
      // explicit empty rule set
    } else {
      rules.push_back(ingest::parse_rule(r));
    }
  }
  return rules;
}

std::string timestamp_dir() {
  auto now = std::chrono::system_clock::now();
  std::time_t tt = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", std::gmtime(&tt));
  return buf;
}

metrics::KtauVariant ktau_variant(const EvaluateSection& eval) {
  return eval.ktau_variant == "tau-a" ? metrics::KtauVariant::kTauA : metrics::KtauVariant::kTauB;
}

json report_block(const metrics::MetricReport& r, double zoom) {
  return json{{"level", r.level}, {"zoom", zoom},   {"mse", r.mse}, {"lcc", r.lcc},
              {"srcc", r.srcc},   {"ktau", r.ktau}, {"n", r.n}};
}

}  // namespace

ingest::Manifest ingest_all(const RunConfig& cfg) {
  MOSFUSE_CHECK(!cfg.datasets.empty(), "ingest: no datasets configured");
  std::vector<ingest::RatingRecord> all;
  for (const DatasetEntry& e : cfg.datasets) {
    ingest::ParseResult parsed = ingest::parse_ratings(e.dir, e.format, e.check_audio);
    for (const ingest::RowError& err : parsed.rejected)
      std::cerr << "[mosfuse] rejected row " << err.file << ":" << err.line << ": "
                << err.message << "\n";
    std::vector<ingest::RatingRecord> kept =
        ingest::filter_records(parsed.records, rules_for_entry(e));
    all.insert(all.end(), kept.begin(), kept.end());
  }
  return ingest::aggregate_labels(all);
}

ingest::Manifest drop_dataset(const ingest::Manifest& m, const std::string& dataset_id) {
  MOSFUSE_CHECK(std::find(m.domain_vocabulary.begin(), m.domain_vocabulary.end(), dataset_id) !=
                    m.domain_vocabulary.end(),
                "drop-dataset: '" + dataset_id + "' is not in the manifest");
  ingest::Manifest out;
  for (const ingest::UtteranceLabel& l : m.labels)
    if (l.dataset_id != dataset_id) out.labels.push_back(l);
  MOSFUSE_CHECK(!out.labels.empty(), "drop-dataset: nothing left after dropping " + dataset_id);
  for (const std::string& d : m.domain_vocabulary)
    if (d != dataset_id) out.domain_vocabulary.push_back(d);
  for (const ingest::DatasetStats& s : m.stats)
    if (s.dataset_id != dataset_id) out.stats.push_back(s);
  return out;
}

infer::InferenceConfig inference_config(const RunConfig& cfg) {
  infer::InferenceConfig ic;
  ic.tta_reps = cfg.infer.tta_reps;
  ic.seed = cfg.infer.seed;
  ic.ssl_uses_frames = cfg.infer.ssl_uses_frames;
  if (cfg.infer.domain_mode == "off")
    ic.domain = infer::DomainMode::off();
  else if (cfg.infer.domain_mode == "average")
    ic.domain = infer::DomainMode::average(cfg.infer.domain_tokens);
  else
    ic.domain = infer::DomainMode::fixed(cfg.infer.domain_tokens.at(0));
  return ic;
}

json evaluate_tables(const metrics::Table& preds, const metrics::Table& truths,
                     const EvaluateSection& eval, const std::string& config_hash) {
  metrics::Table p = preds;
  if (eval.clamp)
    for (metrics::ScoredRow& r : p) r.value = std::clamp(r.value, 1.0, 5.0);

  json conditions = json::array();
  for (double zoom : eval.zooms) {
    metrics::Table pz = p, tz = truths;
    if (zoom < 1.0) {
      std::vector<std::string> keep = metrics::zoom_subset(truths, zoom);
      pz = metrics::filter_to_systems(p, keep);
      tz = metrics::filter_to_systems(truths, keep);
    }
    if (eval.levels == "both" || eval.levels == "utterance")
      conditions.push_back(
          report_block(metrics::utterance_metrics(pz, tz, ktau_variant(eval)), zoom));
    if (eval.levels == "both" || eval.levels == "system")
      conditions.push_back(
          report_block(metrics::system_metrics(pz, tz, ktau_variant(eval)), zoom));
  }
  return json{{"config_hash", config_hash}, {"conditions", conditions}};
}

PipelineResult run_pipeline(const RunConfig& cfg, const std::string& run_root,
                            const std::string& arm, const std::string& fixed_run_dir) {
  fs::path run_dir = fixed_run_dir.empty() ? fs::path(run_root) / timestamp_dir()
                                           : fs::path(fixed_run_dir);
  for (const char* sub : {"config", "checkpoints", "history", "predictions", "reports"})
    fs::create_directories(run_dir / sub);

  {
    std::ofstream cfg_out(run_dir / "config" / "config.json");
    cfg_out << cfg.snapshot.dump(2) << "\n";
  }

  ingest::Manifest manifest = ingest_all(cfg);
  ingest::write_manifest_csv(manifest, (run_dir / "config" / "train_manifest.csv").string());

  trainer::TrainOutcome outcome = trainer::train_full(manifest, cfg, run_dir.string(), arm);
  {
    std::ofstream sel(run_dir / "reports" / "selection.json");
    sel << outcome.selection_report.dump(2) << "\n";
  }

  // Held-out evaluation manifest; defaults to the training manifest when the
  // config names none (useful for smoke runs).
  ingest::Manifest eval_manifest =
      cfg.evaluate.manifest.empty() ? manifest : ingest::read_manifest_csv(cfg.evaluate.manifest);

  std::vector<checkpoint::Loaded> loaded;
  std::vector<fusion::Predictor*> models;
  for (const trainer::FoldResult& fr : outcome.fold_results) {
    loaded.push_back(checkpoint::load(fr.checkpoint_path));
    models.push_back(loaded.back().model.get());
  }

  infer::InferenceConfig ic = inference_config(cfg);
  if (cfg.model.domain_encoding && ic.domain.kind == infer::DomainMode::Kind::kFixed) {
    // Smoke fixtures may not contain the configured inference domain; fall
    // back to the first seen domain rather than failing the whole run.
    const auto& vocab = manifest.domain_vocabulary;
    if (std::find(vocab.begin(), vocab.end(), ic.domain.tokens[0]) == vocab.end()) {
      std::cerr << "[mosfuse] warning: inference domain '" << ic.domain.tokens[0]
                << "' not in the training vocabulary; using '" << vocab.front() << "'\n";
      ic.domain = infer::DomainMode::fixed(vocab.front());
    }
  }

  infer::ManifestPredictions preds = infer::predict_manifest(models, eval_manifest, ic);
  metrics::write_predictions_csv(preds.rows, (run_dir / "predictions" / "predictions.csv").string());
  for (const std::string& f : preds.failures)
    std::cerr << "[mosfuse] prediction failure: " << f << "\n";

  json report = evaluate_tables(preds.rows, metrics::manifest_to_table(eval_manifest),
                                cfg.evaluate, cfg.snapshot_hash());
  report["arm"] = arm;
  {
    std::ofstream rep(run_dir / "reports" / "report.json");
    rep << report.dump(2) << "\n";
  }

  return {run_dir.string(), std::move(report)};
}

PipelineResult run_ablation(const RunConfig& cfg, const std::string& arm,
                            const std::string& run_root, const std::string& fixed_run_dir) {
  const std::string drop_prefix = "drop-dataset:";

  if (arm == "no-ssl" || arm == "no-spec" || arm == "no-stage2" || arm == "only-stage3")
    return run_pipeline(cfg, run_root, arm, fixed_run_dir);

  if (arm.rfind(drop_prefix, 0) == 0) {
    std::string dataset = arm.substr(drop_prefix.size());
    fs::path run_dir = fixed_run_dir.empty() ? fs::path(run_root) / timestamp_dir()
                                             : fs::path(fixed_run_dir);
    for (const char* sub : {"config", "checkpoints", "history", "predictions", "reports"})
      fs::create_directories(run_dir / sub);
    {
      std::ofstream cfg_out(run_dir / "config" / "config.json");
      cfg_out << cfg.snapshot.dump(2) << "\n";
    }
    ingest::Manifest manifest = drop_dataset(ingest_all(cfg), dataset);
    ingest::write_manifest_csv(manifest, (run_dir / "config" / "train_manifest.csv").string());
    trainer::TrainOutcome outcome = trainer::train_full(manifest, cfg, run_dir.string(), "full");

    ingest::Manifest eval_manifest = cfg.evaluate.manifest.empty()
                                         ? manifest
                                         : ingest::read_manifest_csv(cfg.evaluate.manifest);
    std::vector<checkpoint::Loaded> loaded;
    std::vector<fusion::Predictor*> models;
    for (const trainer::FoldResult& fr : outcome.fold_results) {
      loaded.push_back(checkpoint::load(fr.checkpoint_path));
      models.push_back(loaded.back().model.get());
    }
    infer::InferenceConfig ic = inference_config(cfg);
    if (cfg.model.domain_encoding && ic.domain.kind == infer::DomainMode::Kind::kFixed) {
      const auto& vocab = manifest.domain_vocabulary;
      if (std::find(vocab.begin(), vocab.end(), ic.domain.tokens[0]) == vocab.end())
        ic.domain = infer::DomainMode::fixed(vocab.front());
    }
    infer::ManifestPredictions preds = infer::predict_manifest(models, eval_manifest, ic);
    metrics::write_predictions_csv(preds.rows,
                                   (run_dir / "predictions" / "predictions.csv").string());
    json report = evaluate_tables(preds.rows, metrics::manifest_to_table(eval_manifest),
                                  cfg.evaluate, cfg.snapshot_hash());
    report["arm"] = arm;
    std::ofstream rep(run_dir / "reports" / "report.json");
    rep << report.dump(2) << "\n";
    return {run_dir.string(), std::move(report)};
  }

  if (arm == "domain-sweep") {
    // One trained model, one report block per seen domain token.
    PipelineResult base = run_pipeline(cfg, run_root, "full", fixed_run_dir);
    fs::path run_dir(base.run_dir);
    ingest::Manifest manifest =
        ingest::read_manifest_csv((run_dir / "config" / "train_manifest.csv").string());
    ingest::Manifest eval_manifest = cfg.evaluate.manifest.empty()
                                         ? manifest
                                         : ingest::read_manifest_csv(cfg.evaluate.manifest);
    std::vector<checkpoint::Loaded> loaded;
    std::vector<fusion::Predictor*> models;
    for (std::size_t f = 0; f < cfg.train.folds; ++f) {
      fs::path p = run_dir / "checkpoints" / ("fold_" + std::to_string(f) + ".ckpt.json");
      loaded.push_back(checkpoint::load(p.string()));
      models.push_back(loaded.back().model.get());
    }
    json sweeps = json::array();
    for (const std::string& token : manifest.domain_vocabulary) {
      infer::InferenceConfig ic = inference_config(cfg);
      ic.domain = infer::DomainMode::fixed(token);
      infer::ManifestPredictions preds = infer::predict_manifest(models, eval_manifest, ic);
      json block = evaluate_tables(preds.rows, metrics::manifest_to_table(eval_manifest),
                                   cfg.evaluate, cfg.snapshot_hash());
      block["domain"] = token;
      sweeps.push_back(std::move(block));
    }
    json report = {{"arm", arm}, {"config_hash", cfg.snapshot_hash()}, {"domains", sweeps}};
    std::ofstream rep(run_dir / "reports" / "domain_sweep.json");
    rep << report.dump(2) << "\n";
    return {base.run_dir, std::move(report)};
  }

  throw ValidationError("unknown ablation arm '" + arm + "'");
}

}  // namespace mosfuse::pipeline
