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

#ifndef MOSFUSE_METRICS_HPP_
#define MOSFUSE_METRICS_HPP_

#include <span>
#include <string>
#include <vector>

#include "mosfuse/ingest.hpp"

namespace mosfuse::metrics {

struct ScoredRow {
  std::string dataset_id;
  std::string system_id;
  std::string utterance_id;
  double value = 0.0;
};
using Table = std::vector<ScoredRow>;

enum class KtauVariant { kTauB, kTauA };

struct MetricReport {
  std::string level;  // "utterance" or "system"
  double mse = 0.0, lcc = 0.0, srcc = 0.0, ktau = 0.0;
  std::size_t n = 0;
};

/// Pearson correlation. Zero variance on either side is an error, not NaN.
double pearson(std::span<const double> a, std::span<const double> b);

/// Tie-aware average ranks (1-based).
std::vector<double> average_ranks(std::span<const double> x);

/// Spearman: Pearson over average ranks.
double spearman(std::span<const double> a, std::span<const double> b);

/// Kendall tau. Tau-b (tie-corrected) by default; concordant/discordant
/// counts via merge-sort inversion counting.
double kendall(std::span<const double> a, std::span<const double> b,
               KtauVariant variant = KtauVariant::kTauB);

double mse(std::span<const double> a, std::span<const double> b);

/// Metrics on rows matched by (dataset_id, utterance_id). Unmatched ids are
/// an error; n >= 2 required.
MetricReport utterance_metrics(const Table& preds, const Table& truths,
                               KtauVariant variant = KtauVariant::kTauB);

/// Per-system means of predictions and truths first, then the four metrics
/// over the system means. Systems are keyed by (dataset_id, system_id).
MetricReport system_metrics(const Table& preds, const Table& truths,
                            KtauVariant variant = KtauVariant::kTauB);

/// The ceil(rate * #systems) systems with the highest mean true MOS; ties at
/// the cut resolved toward the lexically smaller system_id.
std::vector<std::string> zoom_subset(const Table& truths, double rate);

Table filter_to_systems(const Table& rows, const std::vector<std::string>& system_ids);

Table manifest_to_table(const ingest::Manifest& m);

/// Predictions CSV. Header exactly dataset_id,system_id,utterance_id,pred_mos
/// with 6 decimal places.
void write_predictions_csv(const Table& rows, const std::string& path);
Table read_predictions_csv(const std::string& path);

}  // namespace mosfuse::metrics

#endif  // MOSFUSE_METRICS_HPP_
