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

#include "mosfuse/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "mosfuse/tensor.hpp"

namespace fs = std::filesystem;

namespace mosfuse::ingest {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

struct FormatInfo {
  std::string token;
  std::string dataset_id;
};

const std::vector<FormatInfo>& format_table() {
  static const std::vector<FormatInfo> table = {
      {"bvcc", "BVCC"},
      {"bc2008", "BC2008"},
      {"bc2009", "BC2009"},
      {"bc2010-EH1", "BC2010-EH1"},
      {"bc2010-EH2", "BC2010-EH2"},
      {"bc2010-ES1", "BC2010-ES1"},
      {"bc2010-ES3", "BC2010-ES3"},
      {"bc2011", "BC2011"},
      {"somos", "SOMOS"},
      {"sarulab", "sarulab-data"},
      {"generic", ""},  // dataset_id taken from an explicit dataset column
  };
  return table;
}

const FormatInfo* find_format(const std::string& token) {
  for (const auto& f : format_table())
    if (f.token == token) return &f;
  return nullptr;
}

std::vector<fs::path> source_files(const std::string& source) {
  fs::path p(source);
  MOSFUSE_CHECK(fs::exists(p), "parse_ratings: source '" + source + "' does not exist");
  std::vector<fs::path> files;
  if (fs::is_directory(p)) {
    for (const auto& e : fs::directory_iterator(p))
      if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    MOSFUSE_CHECK(!files.empty(), "parse_ratings: no .csv files under '" + source + "'");
  } else {
    files.push_back(p);
  }
  return files;
}

bool is_english(const RatingRecord& r) {
  if (!r.language.empty()) {
    std::string l = lower(r.language);
    return l == "english" || l == "en" || l == "eng";
  }
  // Blizzard task-name convention: English tasks start with E.
  if (!r.task.empty()) return r.task[0] == 'E';
  return true;
}

}  // namespace

const std::vector<std::string>& known_formats() {
  static const std::vector<std::string> tokens = [] {
    std::vector<std::string> t;
    for (const auto& f : format_table()) t.push_back(f.token);
    return t;
  }();
  return tokens;
}

std::string dataset_id_for_format(const std::string& format) {
  const FormatInfo* info = find_format(format);
  MOSFUSE_CHECK(info != nullptr, "unknown dataset format token '" + format + "'");
  return info->dataset_id;
}

ParseResult parse_ratings(const std::string& source, const std::string& format,
                          bool check_audio) {
  const FormatInfo* info = find_format(format);
  MOSFUSE_CHECK(info != nullptr, "parse_ratings: unknown format token '" + format + "'");

  ParseResult result;
  for (const fs::path& file : source_files(source)) {
    std::ifstream in(file);
    MOSFUSE_CHECK(in.good(), "parse_ratings: cannot open '" + file.string() + "'");
    std::string line;
    MOSFUSE_CHECK(static_cast<bool>(std::getline(in, line)),
                  "parse_ratings: '" + file.string() + "' is empty (missing header)");
    std::vector<std::string> header = split_csv_line(line);
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) col[lower(trim(header[i]))] = i;

    auto need = [&](const std::string& name) {
      auto it = col.find(name);
      MOSFUSE_CHECK(it != col.end(), "parse_ratings: '" + file.string() +
                                         "' is missing required column '" + name + "'");
      return it->second;
    };
    std::size_t c_sys = need("system");
    std::size_t c_utt = need("utterance");
    std::size_t c_lis = need("listener");
    std::size_t c_score = need("score");
    std::size_t c_audio = need("audio_path");
    bool generic = info->dataset_id.empty();
    std::size_t c_dataset = generic ? need("dataset") : 0;
    auto opt = [&](const std::string& name) -> std::ptrdiff_t {
      auto it = col.find(name);
      return it == col.end() ? -1 : static_cast<std::ptrdiff_t>(it->second);
    };
    std::ptrdiff_t c_task = opt("task");
    std::ptrdiff_t c_lang = opt("language");
    std::ptrdiff_t c_tag = opt("listener_tag");

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (trim(line).empty()) continue;
      std::vector<std::string> f = split_csv_line(line);
      if (f.size() < header.size()) {
        result.rejected.push_back({file.string(), line_no, "wrong field count"});
        continue;
      }
      RatingRecord r;
      r.dataset_id = generic ? trim(f[c_dataset]) : info->dataset_id;
      r.system_id = trim(f[c_sys]);
      r.utterance_id = trim(f[c_utt]);
      r.listener_id = trim(f[c_lis]);
      r.audio_path = trim(f[c_audio]);
      if (c_task >= 0) r.task = trim(f[c_task]);
      if (c_lang >= 0) r.language = trim(f[c_lang]);
      if (c_tag >= 0) r.listener_tag = trim(f[c_tag]);

      std::string score_text = trim(f[c_score]);
      char* end = nullptr;
      long score = std::strtol(score_text.c_str(), &end, 10);
      MOSFUSE_CHECK(end != score_text.c_str() && *end == '\0',
                    "parse_ratings: unparseable score '" + score_text + "' at " +
                        file.string() + ":" + std::to_string(line_no));
      MOSFUSE_CHECK(!r.audio_path.empty(), "parse_ratings: missing audio reference at " +
                                               file.string() + ":" + std::to_string(line_no));

      if (score < 1 || score > 5) {
        result.rejected.push_back({file.string(), line_no,
                                   "score " + score_text + " outside the 1..5 scale"});
        continue;
      }
      if (r.dataset_id.empty() || r.system_id.empty() || r.utterance_id.empty() ||
          r.listener_id.empty()) {
        result.rejected.push_back({file.string(), line_no, "empty id token"});
        continue;
      }
      r.score = static_cast<int>(score);

      fs::path audio = fs::path(r.audio_path);
      if (audio.is_relative()) audio = file.parent_path() / audio;
      r.audio_path = audio.string();
      if (check_audio)
        MOSFUSE_CHECK(fs::exists(audio), "parse_ratings: audio file '" + audio.string() +
                                             "' not found, referenced at " + file.string() +
                                             ":" + std::to_string(line_no));
      result.records.push_back(std::move(r));
    }
  }
  return result;
}

FilterRule parse_rule(const std::string& text) {
  FilterRule rule;
  rule.text = text;
  if (text == "english-only") {
    rule.kind = FilterRule::Kind::kEnglishOnly;
    return rule;
  }
  const std::string ex = "exclude-listener-tag:";
  const std::string inc = "include-task-list:";
  if (text.rfind(ex, 0) == 0) {
    rule.kind = FilterRule::Kind::kExcludeListenerTag;
    rule.tag = text.substr(ex.size());
    MOSFUSE_CHECK(!rule.tag.empty(), "filter rule '" + text + "' has an empty tag");
    return rule;
  }
  if (text.rfind(inc, 0) == 0) {
    rule.kind = FilterRule::Kind::kIncludeTaskList;
    std::stringstream ss(text.substr(inc.size()));
    std::string item;
    while (std::getline(ss, item, '|'))
      if (!item.empty()) rule.tasks.push_back(item);
    MOSFUSE_CHECK(!rule.tasks.empty(), "filter rule '" + text + "' has an empty task list");
    return rule;
  }
  MOSFUSE_CHECK(false, "unknown filter rule '" + text + "'");
  return rule;
}

std::vector<FilterRule> default_rules(const std::string& format) {
  MOSFUSE_CHECK(find_format(format) != nullptr, "unknown dataset format token '" + format + "'");
  std::vector<FilterRule> rules;
  if (format == "bc2008") {
    rules.push_back(parse_rule("exclude-listener-tag:EUS"));
    rules.push_back(parse_rule("english-only"));
  } else if (format == "bc2009" || format == "bc2011") {
    rules.push_back(parse_rule("english-only"));
  } else if (format.rfind("bc2010-", 0) == 0) {
    rules.push_back(parse_rule("include-task-list:" + format.substr(7)));
    rules.push_back(parse_rule("english-only"));
  }
  return rules;
}

std::vector<RatingRecord> filter_records(const std::vector<RatingRecord>& records,
                                         const std::vector<FilterRule>& rules,
                                         FilterReport* report) {
  std::vector<std::size_t> removed(rules.size(), 0);
  std::vector<RatingRecord> out;
  out.reserve(records.size());
  for (const RatingRecord& r : records) {
    bool keep = true;
    for (std::size_t i = 0; i < rules.size() && keep; ++i) {
      const FilterRule& rule = rules[i];
      bool violates = false;
      switch (rule.kind) {
        case FilterRule::Kind::kExcludeListenerTag:
          violates = !r.listener_tag.empty() && r.listener_tag == rule.tag;
          break;
        case FilterRule::Kind::kIncludeTaskList:
          violates = !r.task.empty() &&
                     std::find(rule.tasks.begin(), rule.tasks.end(), r.task) == rule.tasks.end();
          break;
        case FilterRule::Kind::kEnglishOnly:
          violates = !is_english(r);
          break;
      }
      if (violates) {
        ++removed[i];
        keep = false;
      }
    }
    if (keep) out.push_back(r);
  }
  if (report) {
    report->removed_per_rule.clear();
    for (std::size_t i = 0; i < rules.size(); ++i)
      report->removed_per_rule.emplace_back(rules[i].text, removed[i]);
  }
  return out;
}

std::vector<DatasetStats> dataset_stats(const std::vector<RatingRecord>& records) {
  struct Acc {
    std::set<std::string> listeners, systems, sentences;
    std::size_t ratings = 0;
  };
  std::map<std::string, Acc> by_dataset;
  for (const RatingRecord& r : records) {
    Acc& a = by_dataset[r.dataset_id];
    a.listeners.insert(r.listener_id);
    a.systems.insert(r.system_id);
    a.sentences.insert(r.utterance_id);
    ++a.ratings;
  }
  std::vector<DatasetStats> out;
  for (const auto& [id, a] : by_dataset)
    out.push_back({id, a.listeners.size(), a.systems.size(), a.sentences.size(), a.ratings});
  return out;
}

Manifest aggregate_labels(const std::vector<RatingRecord>& records) {
  MOSFUSE_CHECK(!records.empty(), "aggregate_labels: no records");
  struct Acc {
    std::string system_id;
    std::string audio_path;
    double sum = 0.0;
    int n = 0;
  };
  std::map<std::pair<std::string, std::string>, Acc> by_utt;
  for (const RatingRecord& r : records) {
    auto key = std::make_pair(r.dataset_id, r.utterance_id);
    auto [it, inserted] = by_utt.try_emplace(key);
    Acc& a = it->second;
    if (inserted) {
      a.system_id = r.system_id;
      a.audio_path = r.audio_path;
    } else {
      MOSFUSE_CHECK(a.system_id == r.system_id,
                    "aggregate_labels: conflicting system ids '" + a.system_id + "' vs '" +
                        r.system_id + "' for utterance (" + r.dataset_id + ", " +
                        r.utterance_id + ")");
    }
    a.sum += r.score;
    a.n += 1;
  }

  Manifest m;
  std::set<std::string> vocab;
  for (const auto& [key, a] : by_utt) {
    UtteranceLabel l;
    l.dataset_id = key.first;
    l.utterance_id = key.second;
    l.system_id = a.system_id;
    l.audio_path = a.audio_path;
    l.mos = a.sum / a.n;
    l.n_ratings = a.n;
    vocab.insert(l.dataset_id);
    m.labels.push_back(std::move(l));
  }
  std::sort(m.labels.begin(), m.labels.end(), [](const UtteranceLabel& a, const UtteranceLabel& b) {
    return std::tie(a.dataset_id, a.system_id, a.utterance_id) <
           std::tie(b.dataset_id, b.system_id, b.utterance_id);
  });
  m.domain_vocabulary.assign(vocab.begin(), vocab.end());
  m.stats = dataset_stats(records);
  return m;
}

void write_manifest_csv(const Manifest& m, const std::string& path) {
  std::ofstream out(path);
  MOSFUSE_CHECK(out.good(), "write_manifest_csv: cannot open '" + path + "'");
  out << "dataset_id,system_id,utterance_id,audio_path,mos,n_ratings\n";
  char buf[64];
  for (const UtteranceLabel& l : m.labels) {
    std::snprintf(buf, sizeof(buf), "%.6f", l.mos);
    out << l.dataset_id << ',' << l.system_id << ',' << l.utterance_id << ',' << l.audio_path
        << ',' << buf << ',' << l.n_ratings << '\n';
  }
  MOSFUSE_CHECK(out.good(), "write_manifest_csv: write failed for '" + path + "'");
}

Manifest read_manifest_csv(const std::string& path) {
  std::ifstream in(path);
  MOSFUSE_CHECK(in.good(), "read_manifest_csv: cannot open '" + path + "'");
  std::string line;
  MOSFUSE_CHECK(static_cast<bool>(std::getline(in, line)), "read_manifest_csv: empty file");
  std::vector<std::string> header = split_csv_line(line);
  const std::vector<std::string> expected = {"dataset_id", "system_id", "utterance_id",
                                             "audio_path", "mos", "n_ratings"};
  MOSFUSE_CHECK(header == expected, "read_manifest_csv: unexpected header in '" + path + "'");

  Manifest m;
  std::set<std::string> vocab;
  std::set<std::pair<std::string, std::string>> keys;
  std::size_t line_no = 1;
  struct StatAcc {
    std::set<std::string> systems;
    std::size_t sentences = 0, ratings = 0;
  };
  std::map<std::string, StatAcc> stats;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<std::string> f = split_csv_line(line);
    MOSFUSE_CHECK(f.size() == 6, "read_manifest_csv: wrong field count at " + path + ":" +
                                     std::to_string(line_no));
    UtteranceLabel l;
    l.dataset_id = f[0];
    l.system_id = f[1];
    l.utterance_id = f[2];
    l.audio_path = f[3];
    l.mos = std::strtod(f[4].c_str(), nullptr);
    l.n_ratings = static_cast<int>(std::strtol(f[5].c_str(), nullptr, 10));
    MOSFUSE_CHECK(l.mos >= 1.0 && l.mos <= 5.0, "read_manifest_csv: mos out of [1,5] at " +
                                                    path + ":" + std::to_string(line_no));
    MOSFUSE_CHECK(l.n_ratings >= 1, "read_manifest_csv: n_ratings < 1 at " + path + ":" +
                                        std::to_string(line_no));
    bool fresh = keys.insert({l.dataset_id, l.utterance_id}).second;
    MOSFUSE_CHECK(fresh, "read_manifest_csv: duplicate (dataset_id, utterance_id) at " + path +
                             ":" + std::to_string(line_no));
    vocab.insert(l.dataset_id);
    StatAcc& a = stats[l.dataset_id];
    a.systems.insert(l.system_id);
    a.sentences += 1;
    a.ratings += static_cast<std::size_t>(l.n_ratings);
    m.labels.push_back(std::move(l));
  }
  m.domain_vocabulary.assign(vocab.begin(), vocab.end());
  for (const auto& [id, a] : stats)
    m.stats.push_back({id, 0, a.systems.size(), a.sentences, a.ratings});
  return m;
}

bool manifests_equal(const Manifest& a, const Manifest& b, double mos_tol) {
  if (a.labels.size() != b.labels.size() || a.domain_vocabulary != b.domain_vocabulary)
    return false;
  for (std::size_t i = 0; i < a.labels.size(); ++i) {
    const UtteranceLabel& x = a.labels[i];
    const UtteranceLabel& y = b.labels[i];
    if (x.dataset_id != y.dataset_id || x.system_id != y.system_id ||
        x.utterance_id != y.utterance_id || x.audio_path != y.audio_path ||
        x.n_ratings != y.n_ratings || std::fabs(x.mos - y.mos) > mos_tol)
      return false;
  }
  return true;
}

std::string format_stats_table(const std::vector<DatasetStats>& stats) {
  std::ostringstream os;
  os << "dataset            listeners   systems  sentences    ratings\n";
  char buf[128];
  for (const DatasetStats& s : stats) {
    std::snprintf(buf, sizeof(buf), "%-18s %9zu %9zu %10zu %10zu\n", s.dataset_id.c_str(),
                  s.listeners, s.systems, s.sentences, s.ratings);
    os << buf;
  }
  return os.str();
}

}  // namespace mosfuse::ingest
