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

#ifndef MOSFUSE_INGEST_HPP_
#define MOSFUSE_INGEST_HPP_

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace mosfuse::ingest {

/// One listener vote. task/language/listener_tag carry raw-source metadata
/// consumed by filter rules and stay empty when the source has none.
struct RatingRecord {
  std::string dataset_id;
  std::string system_id;
  std::string utterance_id;
  std::string listener_id;
  int score = 0;  // 1..5
  std::string audio_path;
  std::string task;
  std::string language;
  std::string listener_tag;
};

struct UtteranceLabel {
  std::string dataset_id;
  std::string system_id;
  std::string utterance_id;
  std::string audio_path;
  double mos = 0.0;
  int n_ratings = 0;
};

struct DatasetStats {
  std::string dataset_id;
  std::size_t listeners = 0;  // 0 when unknown (e.g. manifest reloaded from CSV)
  std::size_t systems = 0;
  std::size_t sentences = 0;
  std::size_t ratings = 0;
};

struct Manifest {
  std::vector<UtteranceLabel> labels;          // sorted by (dataset, system, utterance)
  std::vector<std::string> domain_vocabulary;  // sorted distinct dataset ids
  std::vector<DatasetStats> stats;
};

struct RowError {
  std::string file;
  std::size_t line = 0;
  std::string message;
};

struct ParseResult {
  std::vector<RatingRecord> records;
  std::vector<RowError> rejected;
};

/// Dataset-format adapters. Raw rating dumps are CSV files (all *.csv under
/// the source directory, or a single file path). Every adapter expects a
/// header row with at least: system, utterance, listener, score, audio_path.
/// Optional columns task, language and listener_tag are picked up when
/// present. A missing required column or an unreadable score is a hard
/// error naming the file and row; a score outside 1..5 or an empty id is
/// reported as a rejected row. With check_audio the referenced audio file
/// must exist (resolved relative to the CSV's directory).
///
/// Known tokens: bvcc, bc2008, bc2009, bc2010-EH1, bc2010-EH2, bc2010-ES1,
/// bc2010-ES3, bc2011, somos, sarulab, generic.
ParseResult parse_ratings(const std::string& source, const std::string& format,
                          bool check_audio = false);

const std::vector<std::string>& known_formats();
std::string dataset_id_for_format(const std::string& format);

struct FilterRule {
  enum class Kind { kExcludeListenerTag, kIncludeTaskList, kEnglishOnly };
  Kind kind = Kind::kEnglishOnly;
  std::string tag;                  // kExcludeListenerTag
  std::vector<std::string> tasks;   // kIncludeTaskList
  std::string text;                 // original spelling, for reports
};

/// Rule spellings: "exclude-listener-tag:TAG", "include-task-list:T1|T2|..",
/// "english-only".
FilterRule parse_rule(const std::string& text);

/// The filtering each dataset received in the source listening tests:
/// bc2008 drops EUS-tagged listeners; each bc2010-EHx/ESx keeps only its
/// task; every BC set keeps English-language rows only.
std::vector<FilterRule> default_rules(const std::string& format);

struct FilterReport {
  std::vector<std::pair<std::string, std::size_t>> removed_per_rule;
};

/// Removes records violating any active rule. Rules over absent metadata
/// remove nothing and report zero.
std::vector<RatingRecord> filter_records(const std::vector<RatingRecord>& records,
                                         const std::vector<FilterRule>& rules,
                                         FilterReport* report = nullptr);

/// Groups records by (dataset_id, utterance_id): mos = mean score,
/// n_ratings = vote count. Conflicting system ids for one utterance are a
/// hard error.
Manifest aggregate_labels(const std::vector<RatingRecord>& records);

std::vector<DatasetStats> dataset_stats(const std::vector<RatingRecord>& records);

/// Canonical manifest CSV. Header is exactly
/// dataset_id,system_id,utterance_id,audio_path,mos,n_ratings
/// and mos is printed with 6 decimal places.
void write_manifest_csv(const Manifest& m, const std::string& path);
Manifest read_manifest_csv(const std::string& path);

bool manifests_equal(const Manifest& a, const Manifest& b, double mos_tol);

std::string format_stats_table(const std::vector<DatasetStats>& stats);

}  // namespace mosfuse::ingest

#endif  // MOSFUSE_INGEST_HPP_
