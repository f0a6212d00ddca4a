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

#ifndef MOSFUSE_CONFIG_HPP_
#define MOSFUSE_CONFIG_HPP_

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "mosfuse/audio.hpp"
#include "mosfuse/fusion.hpp"
#include "mosfuse/objective.hpp"

namespace mosfuse {

/// Raised for schema and argument problems; the CLI maps it to exit code 1.
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DatasetEntry {
  std::string format;
  std::string dir;
  std::vector<std::string> rules = {"default"};  // "default", "none", or rule spellings
  bool check_audio = true;
};

struct StagePlanConfig {
  double lr_start = 1e-3;
  double lr_end = 1e-7;
  std::size_t epochs = 1;
  std::size_t batch_size = 8;
};

struct TrainSection {
  std::size_t folds = 5;
  std::uint64_t fold_seed = 0;
  double weight_decay = 1e-4;
  std::map<std::string, StagePlanConfig> stages;  // keyed by stage name
  // Sequential fine-tuning: start each fold from this directory's fold
  // checkpoints (used with the "finetune" arm).
  std::string init_checkpoints;
};

struct InferSection {
  std::size_t tta_reps = 5;
  std::string domain_mode = "fixed";  // fixed | average | off
  std::vector<std::string> domain_tokens = {"BVCC"};
  std::uint64_t seed = 0;
  bool ssl_uses_frames = false;
};

struct EvaluateSection {
  std::string manifest;  // held-out truth manifest for pipeline runs
  std::string levels = "both";
  std::vector<double> zooms = {1.0};
  std::string ktau_variant = "tau-b";
  bool clamp = false;
};

struct RunConfig {
  std::uint64_t seed = 0;
  audio::AudioConfig audio;
  fusion::ModelSpec model;
  objective::LossConfig loss;
  std::vector<DatasetEntry> datasets;
  TrainSection train;
  InferSection infer;
  EvaluateSection evaluate;

  nlohmann::json snapshot;  // effective config with defaults applied
  std::string snapshot_hash() const;
};

/// Stage-plan defaults. spec-s1, ssl-s1-frozen, ssl-s1-finetune, s2-fusion
/// and s3-finetune carry the reference schedule; no-stage2-finetune and
/// only-stage3 carry the reduced-pipeline schedules.
const std::map<std::string, StagePlanConfig>& default_stage_plans();

nlohmann::json default_config_json();

/// Parses and validates a config document. Unknown keys are schema errors.
/// Relative paths resolve against base_dir; with validate_paths every
/// referenced path must exist.
RunConfig parse_run_config(const nlohmann::json& j, const std::string& base_dir,
                           bool validate_paths);
RunConfig load_run_config(const std::string& path, bool validate_paths = true);

nlohmann::json model_spec_to_json(const fusion::ModelSpec& m);
fusion::ModelSpec model_spec_from_json(const nlohmann::json& j);
nlohmann::json audio_config_to_json(const audio::AudioConfig& a);
audio::AudioConfig audio_config_from_json(const nlohmann::json& j);

}  // namespace mosfuse

#endif  // MOSFUSE_CONFIG_HPP_
