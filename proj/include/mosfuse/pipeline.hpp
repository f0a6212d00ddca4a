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

#ifndef MOSFUSE_PIPELINE_HPP_
#define MOSFUSE_PIPELINE_HPP_

#include <string>
#include <vector>

#include <json.hpp>

#include "mosfuse/config.hpp"
#include "mosfuse/infer.hpp"
#include "mosfuse/ingest.hpp"
#include "mosfuse/metrics.hpp"
#include "mosfuse/trainer.hpp"

namespace mosfuse::pipeline {

/// Parses, filters and aggregates every configured dataset into one
/// manifest. Per-dataset rule lists understand "default" (the source
/// listening tests' own filtering) and "none".
ingest::Manifest ingest_all(const RunConfig& cfg);

ingest::Manifest drop_dataset(const ingest::Manifest& m, const std::string& dataset_id);

infer::InferenceConfig inference_config(const RunConfig& cfg);

/// MetricReport blocks for every (level, zoom) pair of the evaluate section.
nlohmann::json evaluate_tables(const metrics::Table& preds, const metrics::Table& truths,
                               const EvaluateSection& eval, const std::string& config_hash);

struct PipelineResult {
  std::string run_dir;
  nlohmann::json report;
};

/// ingest -> train_full -> predict -> evaluate under
/// run_root/<timestamp>/{config,checkpoints,history,predictions,reports}.
/// A fixed run_dir overrides the timestamped directory (reruns then
/// overwrite in place, which keeps outputs byte-comparable).
PipelineResult run_pipeline(const RunConfig& cfg, const std::string& run_root,
                            const std::string& arm = "full", const std::string& fixed_run_dir = "");

/// Ablation arms: no-ssl, no-spec, no-stage2, only-stage3, drop-dataset:<id>,
/// domain-sweep. Emits the cmd_evaluate report JSON tagged with the arm.
PipelineResult run_ablation(const RunConfig& cfg, const std::string& arm,
                            const std::string& run_root, const std::string& fixed_run_dir = "");

}  // namespace mosfuse::pipeline

#endif  // MOSFUSE_PIPELINE_HPP_
