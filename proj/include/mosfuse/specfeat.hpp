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

#ifndef MOSFUSE_SPECFEAT_HPP_
#define MOSFUSE_SPECFEAT_HPP_

#include <memory>
#include <vector>

#include "mosfuse/audio.hpp"
#include "mosfuse/autodiff.hpp"
#include "mosfuse/nn.hpp"

namespace mosfuse::specfeat {

/// Image encoder mapping a mel image (as [in_channels, F, F]) to a feature
/// map [c, f, t]. Deterministic in evaluation; parameters may be frozen by
/// the trainer.
class ImageEncoder {
 public:
  virtual ~ImageEncoder() = default;
  virtual std::size_t in_channels() const = 0;
  virtual std::size_t out_channels() const = 0;
  virtual std::size_t declared_window() const = 0;
  virtual int forward(Tape& t, int image) = 0;
  virtual void collect_params(std::vector<Param*>* out) = 0;
};

/// Two stride-2 tanh conv blocks; the test-scale stand-in for a pretrained
/// image classifier backbone. Accepts single-channel input directly.
class TinyCnnEncoder : public ImageEncoder {
 public:
  TinyCnnEncoder(std::string name_prefix, std::size_t window, std::uint64_t seed,
                 std::size_t mid_channels, std::size_t out_channels);

  std::size_t in_channels() const override { return 1; }
  std::size_t out_channels() const override { return out_ch_; }
  std::size_t declared_window() const override { return window_; }
  int forward(Tape& t, int image) override;
  void collect_params(std::vector<Param*>* out) override;

 private:
  std::size_t window_;
  std::size_t mid_ch_, out_ch_;
  Param conv1_w_, conv1_b_, conv2_w_, conv2_b_;
};

struct SpecOptions {
  std::size_t mid_channels = 6;
  std::size_t out_channels = 8;
  std::uint64_t seed = 1;
};

/// The full spectrogram branch: one encoder per STFT window, a trainable
/// window-weight vector initialized to 1/N, frame concatenation and the
/// mean/max (time) + attention/max (frequency) pooling stack.
class SpecExtractor {
 public:
  SpecExtractor(const std::vector<std::size_t>& windows, const SpecOptions& opt);

  std::size_t window_count() const { return encoders_.size(); }
  std::size_t map_channels() const { return channels_; }
  /// h_spec dimension: {time-mean, time-max} x {freq-attention, freq-max}.
  std::size_t feature_dim() const { return 4 * channels_; }

  /// Applies encoder n to image n; windows must line up.
  std::vector<int> encode_windows(Tape& t, const std::vector<audio::MelImage>& images);
  int aggregate_windows(Tape& t, const std::vector<int>& maps);
  int concat_and_pool(Tape& t, const std::vector<int>& frame_maps);

  /// images: one vector of N MelImages per frame (K frames).
  int forward(Tape& t, const std::vector<std::vector<audio::MelImage>>& images);

  Param* window_weights() { return &window_weights_; }
  Param* freq_query() { return &freq_query_; }
  void collect_params(std::vector<Param*>* out);

 private:
  int image_node(Tape& t, const audio::MelImage& img, const ImageEncoder& enc) const;

  std::vector<std::unique_ptr<ImageEncoder>> encoders_;
  std::size_t channels_ = 0;
  Param window_weights_;  // w_spec, [N]
  Param freq_query_;      // attention query over the frequency axis, [c]
};

}  // namespace mosfuse::specfeat

#endif  // MOSFUSE_SPECFEAT_HPP_
