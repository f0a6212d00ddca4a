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

#include "mosfuse/sslfeat.hpp"

#include <cmath>

namespace mosfuse::sslfeat {

TinySslEncoder::TinySslEncoder(const SslOptions& opt)
    : dim_(opt.dim), frame_(opt.frame_samples), rate_(opt.sample_rate) {
  MOSFUSE_CHECK(opt.layers >= 1 && opt.dim >= 1 && opt.frame_samples >= 1,
                "TinySslEncoder: bad options");
  Rng rng(opt.seed);
  front_w_ = Param("ssl.backbone.front.w", Tensor({frame_, dim_}));
  front_b_ = Param("ssl.backbone.front.b", Tensor({dim_}));
  nn::init_normal(rng, &front_w_.value, std::sqrt(1.0 / static_cast<double>(frame_)));
  for (std::size_t m = 0; m < opt.layers; ++m) {
    std::string base = "ssl.backbone.block" + std::to_string(m);
    blocks_w_.emplace_back(base + ".w", Tensor({dim_, dim_}));
    blocks_b_.emplace_back(base + ".b", Tensor({dim_}));
    nn::init_normal(rng, &blocks_w_.back().value, std::sqrt(1.0 / static_cast<double>(dim_)));
    // Keep a strong residual-like diagonal so deep stacks stay informative.
    for (std::size_t i = 0; i < dim_; ++i) blocks_w_.back().value.at(i, i) += 1.0;
  }
}

std::vector<int> TinySslEncoder::forward(Tape& t, const audio::Waveform& w) {
  MOSFUSE_CHECK(w.sample_rate == rate_,
                "TinySslEncoder: waveform rate " + std::to_string(w.sample_rate) +
                    " does not match the encoder rate " + std::to_string(rate_));
  MOSFUSE_CHECK(!w.samples.empty(), "TinySslEncoder: empty waveform");

  // Tile to at least one full frame, then split without overlap.
  std::vector<double> samples = w.samples;
  while (samples.size() < frame_)
    samples.insert(samples.end(), w.samples.begin(), w.samples.end());
  std::size_t frames = samples.size() / frame_;
  Tensor x({frames, frame_});
  std::copy(samples.begin(), samples.begin() + frames * frame_, x.data.begin());

  int h = t.tanh_op(t.add_rowvec(t.matmul(t.constant(std::move(x)), t.param(&front_w_)),
                                 t.param(&front_b_)));
  std::vector<int> states;
  states.reserve(blocks_w_.size());
  for (std::size_t m = 0; m < blocks_w_.size(); ++m) {
    h = t.tanh_op(t.add_rowvec(t.matmul(t.neighbor_mean3(h), t.param(&blocks_w_[m])),
                               t.param(&blocks_b_[m])));
    states.push_back(h);
  }
  return states;
}

void TinySslEncoder::collect_params(std::vector<Param*>* out) {
  out->push_back(&front_w_);
  out->push_back(&front_b_);
  for (std::size_t m = 0; m < blocks_w_.size(); ++m) {
    out->push_back(&blocks_w_[m]);
    out->push_back(&blocks_b_[m]);
  }
}

SslExtractor::SslExtractor(std::unique_ptr<SequenceEncoder> encoder)
    : encoder_(std::move(encoder)) {
  MOSFUSE_CHECK(encoder_ != nullptr, "SslExtractor: null encoder");
  layer_weights_ = Param("ssl.agg.layer_weights", Tensor({encoder_->layer_count()}));
  nn::init_uniform_weights(&layer_weights_.value);
  time_query_ = Param("ssl.pool.time_query", Tensor({encoder_->dim()}));
  Rng rng(derive_seed(encoder_->layer_count() * 7919u + encoder_->dim(), "ssl-query"));
  nn::init_normal(rng, &time_query_.value, 0.2);
}

std::vector<int> SslExtractor::encode_layers(Tape& t, const audio::Waveform& w) {
  std::vector<int> states = encoder_->forward(t, w);
  MOSFUSE_CHECK(states.size() == encoder_->layer_count(), "encode_layers: layer count mismatch");
  for (int s : states)
    MOSFUSE_CHECK(t.value(s).same_shape(t.value(states[0])), "encode_layers: shape mismatch");
  return states;
}

int SslExtractor::aggregate_layers(Tape& t, const std::vector<int>& states) {
  MOSFUSE_CHECK(states.size() == encoder_->layer_count(), "aggregate_layers: layer count mismatch");
  return nn::weighted_sum(t, states, t.param(&layer_weights_));
}

int SslExtractor::pool_sequence(Tape& t, int seq) {
  MOSFUSE_CHECK(t.value(seq).rank() == 2 && t.value(seq).dim(0) >= 1,
                "pool_sequence: sequence must be [T,d] with T >= 1");
  int att = nn::attention_pool(t, seq, t.param(&time_query_));
  int mx = t.reduce_max_axis0(seq);
  return t.concat_vec({att, mx});
}

int SslExtractor::forward_sequence(Tape& t, const audio::Waveform& w) {
  return aggregate_layers(t, encode_layers(t, w));
}

void SslExtractor::collect_params(std::vector<Param*>* out) {
  encoder_->collect_params(out);
  out->push_back(&layer_weights_);
  out->push_back(&time_query_);
}

}  // namespace mosfuse::sslfeat
