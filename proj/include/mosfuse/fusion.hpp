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

#ifndef MOSFUSE_FUSION_HPP_
#define MOSFUSE_FUSION_HPP_

#include <memory>
#include <string>
#include <vector>

#include "mosfuse/audio.hpp"
#include "mosfuse/nn.hpp"
#include "mosfuse/specfeat.hpp"
#include "mosfuse/sslfeat.hpp"

namespace mosfuse::fusion {

/// Trainable lookup table mapping dataset ids to domain embeddings.
class DomainTable {
 public:
  DomainTable() = default;
  DomainTable(std::vector<std::string> vocabulary, std::size_t dim, std::uint64_t seed);

  const std::vector<std::string>& vocabulary() const { return vocab_; }
  std::size_t dim() const { return dim_; }
  std::size_t index_of(const std::string& token) const;  // throws on unseen domains
  int embed(Tape& t, const std::string& token) { return embed_index(t, index_of(token)); }
  int embed_index(Tape& t, std::size_t index);

  Param* embeddings() { return &embeddings_; }
  void reinit(std::uint64_t seed);

 private:
  std::vector<std::string> vocab_;
  std::size_t dim_ = 0;
  Param embeddings_;  // [V, dim]
};

struct ModelSpec {
  bool spec_branch = true;
  bool ssl_branch = true;
  bool domain_encoding = true;
  std::size_t domain_dim = 1;
  specfeat::SpecOptions spec;
  sslfeat::SslOptions ssl;
  std::uint64_t head_seed = 3;
};

/// The assembled MOS predictor: optional spectrogram and SSL branches, the
/// domain table, and a single affine head over the concatenated features.
/// Branch extractors are shared so a fused model can be assembled from
/// separately trained branch models.
class Predictor {
 public:
  Predictor(const ModelSpec& spec, const audio::AudioConfig& acfg,
            std::vector<std::string> vocabulary,
            std::shared_ptr<specfeat::SpecExtractor> spec_ext = nullptr,
            std::shared_ptr<sslfeat::SslExtractor> ssl_ext = nullptr);

  // The parameter registry points into this object; keep addresses stable.
  Predictor(const Predictor&) = delete;
  Predictor& operator=(const Predictor&) = delete;

  const ModelSpec& model_spec() const { return spec_; }
  const audio::AudioConfig& audio_config() const { return acfg_; }

  specfeat::SpecExtractor* spec_extractor() { return spec_ext_.get(); }
  sslfeat::SslExtractor* ssl_extractor() { return ssl_ext_.get(); }
  std::shared_ptr<specfeat::SpecExtractor> shared_spec() { return spec_ext_; }
  std::shared_ptr<sslfeat::SslExtractor> shared_ssl() { return ssl_ext_; }
  DomainTable* domain() { return spec_.domain_encoding ? &domain_ : nullptr; }

  std::size_t spec_dim() const { return spec_.spec_branch ? spec_ext_->feature_dim() : 0; }
  std::size_t ssl_dim() const { return spec_.ssl_branch ? ssl_ext_->feature_dim() : 0; }
  std::size_t domain_dim() const { return spec_.domain_encoding ? spec_.domain_dim : 0; }
  std::size_t feature_dim() const { return spec_dim() + ssl_dim() + domain_dim(); }

  /// Concatenates the per-branch nodes in canonical order (spec, ssl,
  /// domain); pass -1 for branches the model does not have.
  int item_features(Tape& t, int h_spec, int h_ssl, int h_domain);

  /// Affine head over stacked feature rows; returns predictions [B].
  int predict_rows(Tape& t, const std::vector<int>& feature_vecs);

  Param* head_weight() { return &head_w_; }
  Param* head_bias() { return &head_b_; }

  /// Installs a freshly initialized domain table and head (the fusion-stage
  /// reset; the trained extractors are kept).
  void reset_domain_and_head(std::uint64_t seed);

  nn::ParamSet& params() { return params_; }

 private:
  void init_head(std::uint64_t seed);
  void rebuild_param_set();

  ModelSpec spec_;
  audio::AudioConfig acfg_;
  std::shared_ptr<specfeat::SpecExtractor> spec_ext_;
  std::shared_ptr<sslfeat::SslExtractor> ssl_ext_;
  DomainTable domain_;
  Param head_w_;  // [D, 1]
  Param head_b_;  // [1]
  nn::ParamSet params_;
};

std::unique_ptr<Predictor> build_predictor(const ModelSpec& spec, const audio::AudioConfig& acfg,
                                           std::vector<std::string> vocabulary);

/// Mean of the per-domain predictions for one item whose branch features
/// (h_spec / h_ssl nodes) are computed once and shared across domains.
double predict_domain_average(Predictor& model, Tape& t, int h_spec, int h_ssl,
                              const std::vector<std::string>& domains);

}  // namespace mosfuse::fusion

#endif  // MOSFUSE_FUSION_HPP_
