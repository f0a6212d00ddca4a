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

#include "mosfuse/fusion.hpp"

#include <algorithm>
#include <cmath>

namespace mosfuse::fusion {

DomainTable::DomainTable(std::vector<std::string> vocabulary, std::size_t dim, std::uint64_t seed)
    : vocab_(std::move(vocabulary)), dim_(dim) {
  MOSFUSE_CHECK(!vocab_.empty(), "DomainTable: empty vocabulary");
  MOSFUSE_CHECK(dim_ >= 1, "DomainTable: dim must be >= 1");
  MOSFUSE_CHECK(std::is_sorted(vocab_.begin(), vocab_.end()), "DomainTable: vocabulary must be sorted");
  embeddings_ = Param("domain.embeddings", Tensor({vocab_.size(), dim_}));
  reinit(seed);
}

std::size_t DomainTable::index_of(const std::string& token) const {
  auto it = std::lower_bound(vocab_.begin(), vocab_.end(), token);
  MOSFUSE_CHECK(it != vocab_.end() && *it == token,
                "unseen domain '" + token + "' (not in the training vocabulary)");
  return static_cast<std::size_t>(it - vocab_.begin());
}

int DomainTable::embed_index(Tape& t, std::size_t index) {
  return t.embedding_row(&embeddings_, index);
}

void DomainTable::reinit(std::uint64_t seed) {
  Rng rng(derive_seed(seed, "domain-table"));
  nn::init_normal(rng, &embeddings_.value, 0.1);
  embeddings_.zero_grad();
  embeddings_.trainable = true;
}

Predictor::Predictor(const ModelSpec& spec, const audio::AudioConfig& acfg,
                     std::vector<std::string> vocabulary,
                     std::shared_ptr<specfeat::SpecExtractor> spec_ext,
                     std::shared_ptr<sslfeat::SslExtractor> ssl_ext)
    : spec_(spec), acfg_(acfg), spec_ext_(std::move(spec_ext)), ssl_ext_(std::move(ssl_ext)) {
  MOSFUSE_CHECK(spec_.spec_branch || spec_.ssl_branch, "Predictor: at least one branch required");
  if (spec_.spec_branch && !spec_ext_)
    spec_ext_ = std::make_shared<specfeat::SpecExtractor>(acfg_.windows, spec_.spec);
  if (!spec_.spec_branch) spec_ext_.reset();
  if (spec_.ssl_branch && !ssl_ext_) {
    sslfeat::SslOptions so = spec_.ssl;
    so.sample_rate = acfg_.sample_rate;
    ssl_ext_ = std::make_shared<sslfeat::SslExtractor>(std::make_unique<sslfeat::TinySslEncoder>(so));
  }
  if (!spec_.ssl_branch) ssl_ext_.reset();
  if (spec_.domain_encoding)
    domain_ = DomainTable(std::move(vocabulary), spec_.domain_dim, spec_.head_seed);
  init_head(spec_.head_seed);
  rebuild_param_set();
}

void Predictor::init_head(std::uint64_t seed) {
  std::size_t d = feature_dim();
  head_w_ = Param("head.w", Tensor({d, 1}));
  head_b_ = Param("head.b", Tensor({1}));
  Rng rng(derive_seed(seed, "head"));
  nn::init_normal(rng, &head_w_.value, 0.1 / std::sqrt(static_cast<double>(d)));
  // Start at the middle of the 1..5 opinion scale.
  head_b_.value.data[0] = 3.0;
}

void Predictor::rebuild_param_set() {
  params_ = nn::ParamSet();
  std::vector<Param*> ps;
  if (spec_ext_) spec_ext_->collect_params(&ps);
  if (ssl_ext_) ssl_ext_->collect_params(&ps);
  if (spec_.domain_encoding) ps.push_back(domain_.embeddings());
  ps.push_back(&head_w_);
  ps.push_back(&head_b_);
  params_.add_all(ps);
}

int Predictor::item_features(Tape& t, int h_spec, int h_ssl, int h_domain) {
  std::vector<int> parts;
  if (spec_.spec_branch) {
    MOSFUSE_CHECK(h_spec >= 0, "item_features: spectrogram feature missing");
    MOSFUSE_CHECK(t.value(h_spec).numel() == spec_dim(), "item_features: h_spec dim mismatch");
    parts.push_back(h_spec);
  } else {
    MOSFUSE_CHECK(h_spec < 0, "item_features: model has no spectrogram branch");
  }
  if (spec_.ssl_branch) {
    MOSFUSE_CHECK(h_ssl >= 0, "item_features: SSL feature missing");
    MOSFUSE_CHECK(t.value(h_ssl).numel() == ssl_dim(), "item_features: h_SSL dim mismatch");
    parts.push_back(h_ssl);
  } else {
    MOSFUSE_CHECK(h_ssl < 0, "item_features: model has no SSL branch");
  }
  if (spec_.domain_encoding) {
    MOSFUSE_CHECK(h_domain >= 0, "item_features: domain embedding missing");
    MOSFUSE_CHECK(t.value(h_domain).numel() == domain_dim(), "item_features: domain dim mismatch");
    parts.push_back(h_domain);
  } else {
    MOSFUSE_CHECK(h_domain < 0, "item_features: model has no domain encoding");
  }
  return t.concat_vec(parts);
}

int Predictor::predict_rows(Tape& t, const std::vector<int>& feature_vecs) {
  MOSFUSE_CHECK(!feature_vecs.empty(), "predict_rows: empty batch");
  for (int f : feature_vecs)
    MOSFUSE_CHECK(t.value(f).numel() == feature_dim(),
                  "predict_rows: feature dim " + std::to_string(t.value(f).numel()) +
                      " does not match head input " + std::to_string(feature_dim()));
  int stacked = t.stack_rows(feature_vecs);                       // [B, D]
  int scores = t.matmul(stacked, t.param(&head_w_));              // [B, 1]
  int shifted = t.add_rowvec(scores, t.param(&head_b_));          // [B, 1]
  return t.reshape(shifted, {feature_vecs.size()});
}

void Predictor::reset_domain_and_head(std::uint64_t seed) {
  if (spec_.domain_encoding) domain_.reinit(seed);
  init_head(seed);
  rebuild_param_set();
}

std::unique_ptr<Predictor> build_predictor(const ModelSpec& spec, const audio::AudioConfig& acfg,
                                           std::vector<std::string> vocabulary) {
  return std::make_unique<Predictor>(spec, acfg, std::move(vocabulary));
}

double predict_domain_average(Predictor& model, Tape& t, int h_spec, int h_ssl,
                              const std::vector<std::string>& domains) {
  MOSFUSE_CHECK(!domains.empty(), "predict_domain_average: empty domain list");
  MOSFUSE_CHECK(model.domain() != nullptr, "predict_domain_average: model has no domain encoding");
  double acc = 0.0;
  for (const std::string& token : domains) {
    int h_dom = model.domain()->embed(t, token);
    int pred = model.predict_rows(t, {model.item_features(t, h_spec, h_ssl, h_dom)});
    acc += t.value(pred).data[0];
  }
  return acc / static_cast<double>(domains.size());
}

}  // namespace mosfuse::fusion
