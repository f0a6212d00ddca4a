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

#ifndef MOSFUSE_SSLFEAT_HPP_
#define MOSFUSE_SSLFEAT_HPP_

#include <memory>
#include <vector>

#include "mosfuse/audio.hpp"
#include "mosfuse/autodiff.hpp"
#include "mosfuse/nn.hpp"

namespace mosfuse::sslfeat {

/// Sequence encoder exposing the hidden state of each of its M layers, all
/// shaped [T,d] for a given input.
class SequenceEncoder {
 public:
  virtual ~SequenceEncoder() = default;
  virtual std::size_t layer_count() const = 0;  // M
  virtual std::size_t dim() const = 0;          // d
  virtual int expected_rate() const = 0;
  virtual std::vector<int> forward(Tape& t, const audio::Waveform& w) = 0;
  virtual void collect_params(std::vector<Param*>* out) = 0;
};

struct SslOptions {
  std::size_t dim = 8;
  std::size_t layers = 3;
  std::size_t frame_samples = 256;  // frontend frame length (no overlap)
  int sample_rate = 16000;
  std::uint64_t seed = 2;
};

/// Seeded stand-in for a pretrained speech encoder: a linear+tanh frontend
/// over non-overlapping frames, then M blocks of neighbor smoothing and a
/// tanh projection. Block outputs are the per-layer hidden states.
class TinySslEncoder : public SequenceEncoder {
 public:
  explicit TinySslEncoder(const SslOptions& opt);

  std::size_t layer_count() const override { return blocks_w_.size(); }
  std::size_t dim() const override { return dim_; }
  int expected_rate() const override { return rate_; }
  std::vector<int> forward(Tape& t, const audio::Waveform& w) override;
  void collect_params(std::vector<Param*>* out) override;

 private:
  std::size_t dim_, frame_;
  int rate_;
  Param front_w_, front_b_;
  std::vector<Param> blocks_w_, blocks_b_;
};

/// The SSL branch: per-layer hidden states, a trainable layer-weight vector
/// initialized to 1/M, and attention+max pooling over time.
class SslExtractor {
 public:
  explicit SslExtractor(std::unique_ptr<SequenceEncoder> encoder);

  std::size_t layer_count() const { return encoder_->layer_count(); }
  std::size_t feature_dim() const { return 2 * encoder_->dim(); }

  std::vector<int> encode_layers(Tape& t, const audio::Waveform& w);
  int aggregate_layers(Tape& t, const std::vector<int>& states);
  int pool_sequence(Tape& t, int seq);

  /// Aggregated sequence for one waveform (the mixup injection point).
  int forward_sequence(Tape& t, const audio::Waveform& w);
  int forward(Tape& t, const audio::Waveform& w) { return pool_sequence(t, forward_sequence(t, w)); }

  Param* layer_weights() { return &layer_weights_; }
  Param* time_query() { return &time_query_; }
  SequenceEncoder* encoder() { return encoder_.get(); }
  void collect_params(std::vector<Param*>* out);

 private:
  std::unique_ptr<SequenceEncoder> encoder_;
  Param layer_weights_;  // w_SSL, [M]
  Param time_query_;     // attention query over time, [d]
};

}  // namespace mosfuse::sslfeat

#endif  // MOSFUSE_SSLFEAT_HPP_
