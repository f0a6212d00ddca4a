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

#include "mosfuse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>

#include "mosfuse/tensor.hpp"

namespace mosfuse::metrics {

namespace {

// Counts pairs (i < j) with y_i > y_j by merge sort.
std::uint64_t count_inversions(std::vector<double>& y, std::vector<double>& buf,
                               std::size_t lo, std::size_t hi) {
  if (hi - lo <= 1) return 0;
  std::size_t mid = lo + (hi - lo) / 2;
  std::uint64_t inv = count_inversions(y, buf, lo, mid) + count_inversions(y, buf, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (y[j] < y[i]) {
      inv += mid - i;
      buf[k++] = y[j++];
    } else {
      buf[k++] = y[i++];
    }
  }
  while (i < mid) buf[k++] = y[i++];
  while (j < hi) buf[k++] = y[j++];
  std::copy(buf.begin() + lo, buf.begin() + hi, y.begin() + lo);
  return inv;
}

std::uint64_t tie_pairs(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  std::uint64_t total = 0;
  std::size_t i = 0;
  while (i < v.size()) {
    std::size_t j = i;
    while (j < v.size() && v[j] == v[i]) ++j;
    std::uint64_t run = j - i;
    total += run * (run - 1) / 2;
    i = j;
  }
  return total;
}

std::map<std::pair<std::string, std::string>, double> system_means(const Table& rows) {
  std::map<std::pair<std::string, std::string>, std::pair<double, std::size_t>> acc;
  for (const ScoredRow& r : rows) {
    auto& a = acc[{r.dataset_id, r.system_id}];
    a.first += r.value;
    a.second += 1;
  }
  std::map<std::pair<std::string, std::string>, double> out;
  for (const auto& [key, a] : acc) out[key] = a.first / static_cast<double>(a.second);
  return out;
}

MetricReport compute_all(std::span<const double> preds, std::span<const double> truths,
                         const std::string& level, KtauVariant variant) {
  MOSFUSE_CHECK(preds.size() == truths.size() && preds.size() >= 2,
                "metrics: need at least 2 matched items");
  MetricReport r;
  r.level = level;
  r.n = preds.size();
  r.mse = mse(preds, truths);
  r.lcc = pearson(preds, truths);
  r.srcc = spearman(preds, truths);
  r.ktau = kendall(preds, truths, variant);
  return r;
}

}  // namespace

double pearson(std::span<const double> a, std::span<const double> b) {
  MOSFUSE_CHECK(a.size() == b.size() && a.size() >= 2, "pearson: need >= 2 pairs");
  std::size_t n = a.size();
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  MOSFUSE_CHECK(saa > 0.0 && sbb > 0.0,
                "undefined correlation: zero variance input");
  return sab / std::sqrt(saa * sbb);
}

std::vector<double> average_ranks(std::span<const double> x) {
  std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return x[i] < x[j]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && x[order[j]] == x[order[i]]) ++j;
    // 1-based ranks i+1 .. j averaged; the midpoint of integers is exact.
    double avg = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = avg;
    i = j;
  }
  return ranks;
}

double spearman(std::span<const double> a, std::span<const double> b) {
  std::vector<double> ra = average_ranks(a);
  std::vector<double> rb = average_ranks(b);
  return pearson(ra, rb);
}

double kendall(std::span<const double> a, std::span<const double> b, KtauVariant variant) {
  MOSFUSE_CHECK(a.size() == b.size() && a.size() >= 2, "kendall: need >= 2 pairs");
  std::size_t n = a.size();
  std::uint64_t n0 = static_cast<std::uint64_t>(n) * (n - 1) / 2;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    if (a[i] != a[j]) return a[i] < a[j];
    return b[i] < b[j];
  });

  std::uint64_t n1 = 0, n3 = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && a[order[j]] == a[order[i]]) ++j;
    std::uint64_t run = j - i;
    n1 += run * (run - 1) / 2;
    std::size_t u = i;
    while (u < j) {
      std::size_t v = u;
      while (v < j && b[order[v]] == b[order[u]]) ++v;
      std::uint64_t brun = v - u;
      n3 += brun * (brun - 1) / 2;
      u = v;
    }
    i = j;
  }
  std::uint64_t n2 = 0;
  {
    std::vector<double> bv(n);
    for (std::size_t k = 0; k < n; ++k) bv[k] = b[k];
    n2 = tie_pairs(std::move(bv));
  }

  std::vector<double> y(n), buf(n);
  for (std::size_t k = 0; k < n; ++k) y[k] = b[order[k]];
  std::uint64_t swaps = count_inversions(y, buf, 0, n);

  // Pairs tied in a sort before the inversion count (ties broken by b), so
  // they contribute no swaps; concordant minus discordant follows from the
  // tie counts.
  std::int64_t cd = static_cast<std::int64_t>(n0) - static_cast<std::int64_t>(n1) -
                    static_cast<std::int64_t>(n2) + static_cast<std::int64_t>(n3) -
                    2 * static_cast<std::int64_t>(swaps);

  if (variant == KtauVariant::kTauA) {
    MOSFUSE_CHECK(n0 > 0, "kendall: empty pair set");
    return static_cast<double>(cd) / static_cast<double>(n0);
  }
  std::uint64_t da = n0 - n1, db = n0 - n2;
  MOSFUSE_CHECK(da > 0 && db > 0, "undefined correlation: zero variance input");
  return static_cast<double>(cd) / std::sqrt(static_cast<double>(da) * static_cast<double>(db));
}

double mse(std::span<const double> a, std::span<const double> b) {
  MOSFUSE_CHECK(a.size() == b.size() && !a.empty(), "mse: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

MetricReport utterance_metrics(const Table& preds, const Table& truths, KtauVariant variant) {
  std::map<std::pair<std::string, std::string>, double> truth_by_key;
  for (const ScoredRow& r : truths) truth_by_key[{r.dataset_id, r.utterance_id}] = r.value;
  std::vector<double> p, t;
  p.reserve(preds.size());
  for (const ScoredRow& r : preds) {
    auto it = truth_by_key.find({r.dataset_id, r.utterance_id});
    MOSFUSE_CHECK(it != truth_by_key.end(), "utterance_metrics: prediction for (" + r.dataset_id +
                                                ", " + r.utterance_id + ") has no matching truth");
    p.push_back(r.value);
    t.push_back(it->second);
  }
  return compute_all(p, t, "utterance", variant);
}

MetricReport system_metrics(const Table& preds, const Table& truths, KtauVariant variant) {
  auto pm = system_means(preds);
  auto tm = system_means(truths);
  std::vector<double> p, t;
  for (const auto& [key, v] : pm) {
    auto it = tm.find(key);
    MOSFUSE_CHECK(it != tm.end(), "system_metrics: system (" + key.first + ", " + key.second +
                                      ") present in predictions but not in truths");
    p.push_back(v);
    t.push_back(it->second);
  }
  MOSFUSE_CHECK(p.size() >= 2, "system_metrics: need >= 2 systems");
  return compute_all(p, t, "system", variant);
}

std::vector<std::string> zoom_subset(const Table& truths, double rate) {
  MOSFUSE_CHECK(rate > 0.0 && rate <= 1.0, "zoom_subset: rate must be in (0, 1]");
  MOSFUSE_CHECK(!truths.empty(), "zoom_subset: empty truth table");
  auto means = system_means(truths);
  struct Entry {
    std::string system_id;
    std::string dataset_id;
    double mean;
  };
  std::vector<Entry> entries;
  for (const auto& [key, v] : means) entries.push_back({key.second, key.first, v});
  std::sort(entries.begin(), entries.end(), [](const Entry& x, const Entry& y) {
    if (x.mean != y.mean) return x.mean > y.mean;
    if (x.system_id != y.system_id) return x.system_id < y.system_id;
    return x.dataset_id < y.dataset_id;
  });
  // Nudge below the FP product so ceil(0.12 * 25) stays 3, not 4.
  std::size_t keep = static_cast<std::size_t>(
      std::ceil(rate * static_cast<double>(entries.size()) - 1e-9));
  keep = std::min(std::max<std::size_t>(keep, 1), entries.size());
  std::vector<std::string> out;
  out.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) out.push_back(entries[i].system_id);
  return out;
}

Table filter_to_systems(const Table& rows, const std::vector<std::string>& system_ids) {
  Table out;
  for (const ScoredRow& r : rows)
    if (std::find(system_ids.begin(), system_ids.end(), r.system_id) != system_ids.end())
      out.push_back(r);
  return out;
}

Table manifest_to_table(const ingest::Manifest& m) {
  Table out;
  out.reserve(m.labels.size());
  for (const ingest::UtteranceLabel& l : m.labels)
    out.push_back({l.dataset_id, l.system_id, l.utterance_id, l.mos});
  return out;
}

void write_predictions_csv(const Table& rows, const std::string& path) {
  std::ofstream out(path);
  MOSFUSE_CHECK(out.good(), "write_predictions_csv: cannot open '" + path + "'");
  out << "dataset_id,system_id,utterance_id,pred_mos\n";
  char buf[64];
  for (const ScoredRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.6f", r.value);
    out << r.dataset_id << ',' << r.system_id << ',' << r.utterance_id << ',' << buf << '\n';
  }
  MOSFUSE_CHECK(out.good(), "write_predictions_csv: write failed");
}

Table read_predictions_csv(const std::string& path) {
  std::ifstream in(path);
  MOSFUSE_CHECK(in.good(), "read_predictions_csv: cannot open '" + path + "'");
  std::string line;
  MOSFUSE_CHECK(static_cast<bool>(std::getline(in, line)), "read_predictions_csv: empty file");
  // Tolerate a trailing \r from foreign tools.
  if (!line.empty() && line.back() == '\r') line.pop_back();
  MOSFUSE_CHECK(line == "dataset_id,system_id,utterance_id,pred_mos",
                "read_predictions_csv: unexpected header in '" + path + "'");
  Table out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.back() == '\r') line.pop_back();
    std::vector<std::string> f;
    std::string cur;
    for (char c : line) {
      if (c == ',') {
        f.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    f.push_back(cur);
    MOSFUSE_CHECK(f.size() == 4, "read_predictions_csv: wrong field count in '" + path + "'");
    out.push_back({f[0], f[1], f[2], std::strtod(f[3].c_str(), nullptr)});
  }
  return out;
}

}  // namespace mosfuse::metrics
