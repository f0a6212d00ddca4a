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

#ifndef MOSFUSE_INFER_HPP_
#define MOSFUSE_INFER_HPP_

#include <span>
#include <string>
#include <vector>

#include "mosfuse/fusion.hpp"
#include "mosfuse/ingest.hpp"
#include "mosfuse/metrics.hpp"

namespace mosfuse::infer {

struct DomainMode {
  enum class Kind { kFixed, kAverage, kOff };
  Kind kind = Kind::kFixed;
  std::vector<std::string> tokens = {"BVCC"};

  static DomainMode fixed(std::string token) { return {Kind::kFixed, {std::move(token)}}; }
  static DomainMode average(std::vector<std::string> tokens) {
    return {Kind::kAverage, std::move(tokens)};
  }
  static DomainMode off() { return {Kind::kOff, {}}; }
};

struct InferenceConfig {
  std::size_t tta_reps = 5;
  DomainMode domain;
  std::uint64_t seed = 0;
  bool ssl_uses_frames = false;  // feed the random frames to the SSL branch too

  void validate() const {
    MOSFUSE_CHECK(tta_reps >= 1, "InferenceConfig: tta_reps must be >= 1");
    MOSFUSE_CHECK(domain.kind == DomainMode::Kind::kOff || !domain.tokens.empty(),
                  "InferenceConfig: domain token list must not be empty");
  }
};

struct TtaLog {
  std::vector<double> per_rep;
};

/// Test-time augmentation: mean over tta_reps forward passes with
/// independent seeded frame draws. The SSL branch consumes the whole
/// utterance and is computed once per utterance unless ssl_uses_frames.
double predict_tta(fusion::Predictor& model, const audio::Waveform& w,
                   const InferenceConfig& cfg, std::uint64_t item_seed, TtaLog* log = nullptr);

struct EnsembleLog {
  std::vector<double> per_fold;
  std::vector<TtaLog> fold_tta;
};

/// Arithmetic mean of per-fold predict_tta outputs.
double predict_ensemble(std::span<fusion::Predictor* const> folds, const audio::Waveform& w,
                        const InferenceConfig& cfg, std::uint64_t item_seed,
                        EnsembleLog* log = nullptr);

struct ManifestPredictions {
  metrics::Table rows;
  std::vector<std::string> failures;  // per-row load errors; the run continues
};

/// One row per utterance. Per-row seeds derive from (cfg.seed, utterance_id)
/// so results do not depend on scheduling.
ManifestPredictions predict_manifest(std::span<fusion::Predictor* const> folds,
                                     const ingest::Manifest& manifest,
                                     const InferenceConfig& cfg);

}  // namespace mosfuse::infer

#endif  // MOSFUSE_INFER_HPP_
