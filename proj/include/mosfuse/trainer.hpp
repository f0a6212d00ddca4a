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

#ifndef MOSFUSE_TRAINER_HPP_
#define MOSFUSE_TRAINER_HPP_

#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "mosfuse/config.hpp"
#include "mosfuse/fusion.hpp"
#include "mosfuse/ingest.hpp"
#include "mosfuse/metrics.hpp"
#include "mosfuse/objective.hpp"

namespace mosfuse::trainer {

/// System-grouped cross-validation split: all utterances of a system share
/// a fold, and each dataset's systems are spread evenly across folds.
struct FoldSplit {
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::map<std::pair<std::string, std::string>, std::size_t> assignments;
  std::vector<std::string> warnings;
};

FoldSplit make_folds(const ingest::Manifest& manifest, std::size_t k, std::uint64_t seed);

/// lr_end + 0.5 * (lr_start - lr_end) * (1 + cos(pi * step / total_steps)).
double cosine_lr(std::size_t step, std::size_t total_steps, double lr_start, double lr_end);

struct StagePlan {
  std::string stage;
  double lr_start = 1e-3;
  double lr_end = 1e-7;
  std::size_t epochs = 1;
  std::size_t batch_size = 8;
  std::vector<std::string> frozen_prefixes;
};

/// Stage plan with the stage's freeze semantics applied: s2-fusion freezes
/// both extractors, ssl-s1-frozen freezes the SSL backbone.
StagePlan make_stage_plan(const std::string& stage, const StagePlanConfig& cfg);

/// Decoupled-weight-decay adaptive optimizer. Frozen parameters are skipped
/// entirely (no state, no decay), keeping them bit-identical.
class AdamW {
 public:
  explicit AdamW(double weight_decay = 1e-4, double beta1 = 0.9, double beta2 = 0.999,
                 double eps = 1e-8)
      : wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(const std::vector<Param*>& params, double lr);

 private:
  struct State {
    Tensor m, v;
  };
  std::map<Param*, State> state_;
  double wd_, b1_, b2_, eps_;
  std::size_t t_ = 0;
};

struct TrainItem {
  ingest::UtteranceLabel label;
  audio::Waveform wave;
};

struct DataCache {
  std::vector<TrainItem> items;
  std::vector<std::string> vocabulary;
};

/// Loads every manifest waveform into memory (audio is read once per run).
DataCache load_data(const ingest::Manifest& manifest, const audio::AudioConfig& acfg);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_srcc = 0.0;
  std::string val_level;  // "system" or "utterance" (fallback)
  double lr = 0.0;
};

struct TrainHistory {
  std::string stage;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // 1-based
  double best_srcc = -2.0;
};

struct StageData {
  const DataCache* cache = nullptr;
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> val_idx;
};

/// Runs one stage: seeded shuffling, mixup on every step, cosine-annealed
/// AdamW on the non-frozen parameters, per-epoch validation, and restores
/// the best-epoch weights (selected by validation system-level SRCC, with a
/// documented fallback to utterance level when too few systems exist).
TrainHistory run_stage(fusion::Predictor& model, const StagePlan& plan, const StageData& data,
                       const objective::LossConfig& loss_cfg, double weight_decay,
                       std::uint64_t seed);

/// Deterministic single-pass predictions used for validation inside training.
metrics::Table predict_plain(fusion::Predictor& model, const DataCache& cache,
                             const std::vector<std::size_t>& idx, std::uint64_t seed);

/// Stage sequences per training arm.
std::vector<std::string> stages_for_arm(const std::string& arm, bool spec_branch, bool ssl_branch);

struct FoldResult {
  std::size_t fold = 0;
  std::string checkpoint_path;
  std::vector<TrainHistory> history;
};

struct TrainOutcome {
  FoldSplit folds;
  std::vector<FoldResult> fold_results;
  nlohmann::json selection_report;
};

/// Full pipeline over all folds for the given arm ("full", "no-ssl",
/// "no-spec", "no-stage2", "only-stage3"). Writes per-fold checkpoints and
/// history logs under out_dir.
TrainOutcome train_full(const ingest::Manifest& manifest, const RunConfig& cfg,
                        const std::string& out_dir, const std::string& arm = "full");

}  // namespace mosfuse::trainer

#endif  // MOSFUSE_TRAINER_HPP_
