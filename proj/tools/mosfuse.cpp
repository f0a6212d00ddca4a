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

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "mosfuse/checkpoint.hpp"
#include "mosfuse/pipeline.hpp"

namespace fs = std::filesystem;
using namespace mosfuse;
using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kValidationError = 1;
constexpr int kRuntimeError = 2;
constexpr int kPartialFailure = 3;

std::vector<ingest::FilterRule> parse_rule_list(const std::string& format,
                                                const std::string& rules_arg) {
  std::vector<ingest::FilterRule> rules;
  if (rules_arg == "default") return ingest::default_rules(format);
  if (rules_arg == "none" || rules_arg.empty()) return rules;
  std::stringstream ss(rules_arg);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) {
      if (item == "default") {
        auto defaults = ingest::default_rules(format);
        rules.insert(rules.end(), defaults.begin(), defaults.end());
      } else {
        rules.push_back(ingest::parse_rule(item));
      }
    }
  return rules;
}

int cmd_ingest(const std::string& format, const std::string& in_dir, const std::string& rules_arg,
               const std::string& out_csv, bool check_audio, bool print_stats) {
  ingest::ParseResult parsed = ingest::parse_ratings(in_dir, format, check_audio);
  for (const ingest::RowError& e : parsed.rejected)
    std::cerr << "rejected row " << e.file << ":" << e.line << ": " << e.message << "\n";

  ingest::FilterReport report;
  std::vector<ingest::RatingRecord> kept =
      ingest::filter_records(parsed.records, parse_rule_list(format, rules_arg), &report);
  for (const auto& [rule, removed] : report.removed_per_rule)
    std::cerr << "rule " << rule << " removed " << removed << " records\n";

  if (print_stats) std::cout << ingest::format_stats_table(ingest::dataset_stats(kept));

  ingest::Manifest manifest = ingest::aggregate_labels(kept);
  ingest::write_manifest_csv(manifest, out_csv);
  std::cout << "wrote " << manifest.labels.size() << " labels over "
            << manifest.domain_vocabulary.size() << " datasets to " << out_csv << "\n";
  return kOk;
}

int cmd_train(const std::string& config_path, const std::string& manifest_path,
              const std::string& out_dir, const std::string& arm) {
  RunConfig cfg = load_run_config(config_path);
  ingest::Manifest manifest =
      manifest_path.empty() ? pipeline::ingest_all(cfg) : ingest::read_manifest_csv(manifest_path);
  trainer::TrainOutcome outcome = trainer::train_full(manifest, cfg, out_dir, arm);
  std::ofstream sel(fs::path(out_dir) / "selection.json");
  sel << outcome.selection_report.dump(2) << "\n";
  std::cout << outcome.selection_report.dump(2) << "\n";
  return kOk;
}

infer::DomainMode domain_mode_from_arg(const std::string& domain) {
  if (domain == "off") return infer::DomainMode::off();
  if (domain.find(',') != std::string::npos) {
    std::vector<std::string> tokens;
    std::stringstream ss(domain);
    std::string item;
    while (std::getline(ss, item, ','))
      if (!item.empty()) tokens.push_back(item);
    return infer::DomainMode::average(tokens);
  }
  return infer::DomainMode::fixed(domain);
}

int cmd_predict(const std::string& ckpt_dir, const std::string& manifest_path,
                const std::string& out_csv, const std::string& domain, std::uint64_t seed,
                std::size_t tta) {
  std::vector<std::string> paths;
  for (const auto& entry : fs::directory_iterator(ckpt_dir))
    if (entry.path().extension() == ".json") paths.push_back(entry.path().string());
  std::sort(paths.begin(), paths.end());
  if (paths.empty()) throw ValidationError("no .json checkpoints under '" + ckpt_dir + "'");

  std::vector<checkpoint::Loaded> loaded;
  std::vector<fusion::Predictor*> models;
  for (const std::string& p : paths) {
    try {
      loaded.push_back(checkpoint::load(p));
    } catch (const std::exception& e) {
      throw std::runtime_error("failed to load fold checkpoint '" + p + "': " + e.what());
    }
    models.push_back(loaded.back().model.get());
  }

  ingest::Manifest manifest = ingest::read_manifest_csv(manifest_path);
  infer::InferenceConfig cfg;
  cfg.tta_reps = tta;
  cfg.seed = seed;
  cfg.domain = domain_mode_from_arg(domain);

  infer::ManifestPredictions out = infer::predict_manifest(models, manifest, cfg);
  metrics::write_predictions_csv(out.rows, out_csv);
  for (const std::string& f : out.failures) std::cerr << "prediction failure: " << f << "\n";
  std::cout << "wrote " << out.rows.size() << " predictions to " << out_csv << "\n";
  return out.failures.empty() ? kOk : kPartialFailure;
}

int cmd_evaluate(const std::string& pred_csv, const std::string& truth_csv,
                 const std::string& level, const std::vector<double>& zooms,
                 const std::string& ktau_variant, bool clamp, const std::string& out_json) {
  EvaluateSection eval;
  eval.levels = level;
  if (!zooms.empty()) eval.zooms = zooms;
  eval.ktau_variant = ktau_variant;
  eval.clamp = clamp;
  if (eval.levels != "both" && eval.levels != "utterance" && eval.levels != "system")
    throw ValidationError("--level must be both, utterance or system");
  for (double z : eval.zooms)
    if (!(z > 0.0 && z <= 1.0)) throw ValidationError("--zoom values must be in (0, 1]");
  if (eval.ktau_variant != "tau-b" && eval.ktau_variant != "tau-a")
    throw ValidationError("--ktau-variant must be tau-b or tau-a");

  metrics::Table preds = metrics::read_predictions_csv(pred_csv);
  metrics::Table truths = metrics::manifest_to_table(ingest::read_manifest_csv(truth_csv));
  json report = pipeline::evaluate_tables(preds, truths, eval, "");
  report.erase("config_hash");
  if (!out_json.empty()) {
    std::ofstream out(out_json);
    out << report.dump(2) << "\n";
  }
  std::cout << report.dump(2) << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mosfuse: training and evaluation toolkit for naturalness MOS prediction"};
  app.require_subcommand(1);

  auto* ingest_cmd = app.add_subcommand("ingest", "parse raw rating dumps into a manifest CSV");
  std::string in_format, in_dir, in_rules = "default", in_out;
  bool in_no_check_audio = false, in_stats = false;
  ingest_cmd->add_option("--format", in_format, "dataset format token")->required();
  ingest_cmd->add_option("--in", in_dir, "raw rating directory or file")->required();
  ingest_cmd->add_option("--rules", in_rules, "comma list of filter rules, 'default' or 'none'");
  ingest_cmd->add_option("--out", in_out, "output manifest CSV")->required();
  ingest_cmd->add_flag("--no-check-audio", in_no_check_audio, "skip audio existence checks");
  ingest_cmd->add_flag("--stats", in_stats, "print the per-dataset summary table");

  auto* train_cmd = app.add_subcommand("train", "run the multi-stage training pipeline");
  std::string tr_config, tr_manifest, tr_out, tr_arm = "full";
  train_cmd->add_option("--config", tr_config, "run config JSON")->required();
  train_cmd->add_option("--manifest", tr_manifest, "manifest CSV (default: ingest from config)");
  train_cmd->add_option("--out-dir", tr_out, "output directory")->required();
  train_cmd->add_option("--arm", tr_arm,
                        "training arm (full, no-ssl, no-spec, no-stage2, only-stage3, finetune)");

  auto* predict_cmd =
      app.add_subcommand("predict", "fold-ensembled TTA prediction over a manifest");
  std::string pr_ckpt, pr_manifest, pr_out, pr_domain = "BVCC";
  std::uint64_t pr_seed = 0;
  std::size_t pr_tta = 5;
  predict_cmd->add_option("--ckpt", pr_ckpt, "directory with fold checkpoints")->required();
  predict_cmd->add_option("--manifest", pr_manifest, "manifest CSV to score")->required();
  predict_cmd->add_option("--out", pr_out, "output predictions CSV")->required();
  predict_cmd->add_option("--domain", pr_domain, "domain token, comma list (averaged), or 'off'");
  predict_cmd->add_option("--seed", pr_seed, "global prediction seed");
  predict_cmd->add_option("--tta", pr_tta, "TTA repetitions");

  auto* eval_cmd = app.add_subcommand("evaluate", "VMC-style metrics between two CSVs");
  std::string ev_pred, ev_truth, ev_level = "both", ev_ktau = "tau-b", ev_out;
  std::vector<double> ev_zooms;
  bool ev_clamp = false;
  eval_cmd->add_option("--pred", ev_pred, "predictions CSV")->required();
  eval_cmd->add_option("--truth", ev_truth, "truth manifest CSV")->required();
  eval_cmd->add_option("--level", ev_level, "utterance, system or both");
  eval_cmd->add_option("--zoom", ev_zooms, "zoom-in rates in (0,1], repeatable");
  eval_cmd->add_option("--ktau-variant", ev_ktau, "tau-b or tau-a");
  eval_cmd->add_flag("--clamp", ev_clamp, "clamp predictions to [1,5] before scoring");
  eval_cmd->add_option("--out", ev_out, "report JSON path");

  auto* ablate_cmd = app.add_subcommand("ablate", "run an ablation arm end to end");
  std::string ab_config, ab_arm, ab_out = "runs", ab_fixed;
  ablate_cmd->add_option("--config", ab_config, "run config JSON")->required();
  ablate_cmd
      ->add_option("--arm", ab_arm,
                   "no-ssl | no-spec | no-stage2 | only-stage3 | drop-dataset:<id> | domain-sweep")
      ->required();
  ablate_cmd->add_option("--out-dir", ab_out, "run root directory");
  ablate_cmd->add_option("--run-dir", ab_fixed, "fixed run directory (overrides the timestamp)");

  auto* pipe_cmd = app.add_subcommand("pipeline", "ingest + train + predict + evaluate");
  std::string pi_config, pi_out = "runs", pi_fixed;
  pipe_cmd->add_option("--config", pi_config, "run config JSON")->required();
  pipe_cmd->add_option("--out-dir", pi_out, "run root directory");
  pipe_cmd->add_option("--run-dir", pi_fixed, "fixed run directory (overrides the timestamp)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kOk : kValidationError;
  }

  try {
    if (ingest_cmd->parsed())
      return cmd_ingest(in_format, in_dir, in_rules, in_out, !in_no_check_audio, in_stats);
    if (train_cmd->parsed()) return cmd_train(tr_config, tr_manifest, tr_out, tr_arm);
    if (predict_cmd->parsed())
      return cmd_predict(pr_ckpt, pr_manifest, pr_out, pr_domain, pr_seed, pr_tta);
    if (eval_cmd->parsed())
      return cmd_evaluate(ev_pred, ev_truth, ev_level, ev_zooms, ev_ktau, ev_clamp, ev_out);
    if (ablate_cmd->parsed()) {
      RunConfig cfg = load_run_config(ab_config);
      pipeline::PipelineResult r = pipeline::run_ablation(cfg, ab_arm, ab_out, ab_fixed);
      std::cout << r.report.dump(2) << "\n";
      return kOk;
    }
    if (pipe_cmd->parsed()) {
      RunConfig cfg = load_run_config(pi_config);
      pipeline::PipelineResult r = pipeline::run_pipeline(cfg, pi_out, "full", pi_fixed);
      std::cout << r.report.dump(2) << "\n";
      return kOk;
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidationError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kValidationError;
}
