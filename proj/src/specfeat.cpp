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

#include "mosfuse/specfeat.hpp"

#include <cmath>

namespace mosfuse::specfeat {

TinyCnnEncoder::TinyCnnEncoder(std::string name_prefix, std::size_t window, std::uint64_t seed,
                               std::size_t mid_channels, std::size_t out_channels)
    : window_(window), mid_ch_(mid_channels), out_ch_(out_channels) {
  Rng rng(seed);
  conv1_w_ = Param(name_prefix + ".conv1.w", Tensor({mid_ch_, 1, 3, 3}));
  conv1_b_ = Param(name_prefix + ".conv1.b", Tensor({mid_ch_}));
  conv2_w_ = Param(name_prefix + ".conv2.w", Tensor({out_ch_, mid_ch_, 3, 3}));
  conv2_b_ = Param(name_prefix + ".conv2.b", Tensor({out_ch_}));
  nn::init_normal(rng, &conv1_w_.value, std::sqrt(1.0 / 9.0));
  nn::init_normal(rng, &conv2_w_.value, std::sqrt(1.0 / (9.0 * static_cast<double>(mid_ch_))));
}

int TinyCnnEncoder::forward(Tape& t, int image) {
  const Tensor& img = t.value(image);
  MOSFUSE_CHECK(img.rank() == 3 && img.dim(0) == 1, "TinyCnnEncoder: expects [1,F,F] input");
  MOSFUSE_CHECK(img.dim(1) % 4 == 0, "TinyCnnEncoder: F must be divisible by 4");
  int h1 = t.tanh_op(t.conv2d(image, t.param(&conv1_w_), t.param(&conv1_b_), 2, 1));
  int h2 = t.tanh_op(t.conv2d(h1, t.param(&conv2_w_), t.param(&conv2_b_), 2, 1));
  return h2;
}

void TinyCnnEncoder::collect_params(std::vector<Param*>* out) {
  out->push_back(&conv1_w_);
  out->push_back(&conv1_b_);
  out->push_back(&conv2_w_);
  out->push_back(&conv2_b_);
}

SpecExtractor::SpecExtractor(const std::vector<std::size_t>& windows, const SpecOptions& opt) {
  MOSFUSE_CHECK(!windows.empty(), "SpecExtractor: window grid is empty");
  for (std::size_t n = 0; n < windows.size(); ++n) {
    encoders_.push_back(std::make_unique<TinyCnnEncoder>(
        "spec.enc" + std::to_string(n), windows[n], derive_seed(opt.seed, "spec-enc", std::to_string(n)),
        opt.mid_channels, opt.out_channels));
  }
  channels_ = encoders_[0]->out_channels();
  for (const auto& e : encoders_)
    MOSFUSE_CHECK(e->out_channels() == channels_, "SpecExtractor: encoder channel mismatch");

  window_weights_ = Param("spec.agg.window_weights", Tensor({encoders_.size()}));
  nn::init_uniform_weights(&window_weights_.value);
  freq_query_ = Param("spec.pool.freq_query", Tensor({channels_}));
  Rng rng(derive_seed(opt.seed, "spec-query"));
  nn::init_normal(rng, &freq_query_.value, 0.2);
}

int SpecExtractor::image_node(Tape& t, const audio::MelImage& img, const ImageEncoder& enc) const {
  const std::size_t f = img.pixels.dim(0);
  std::size_t ch = enc.in_channels();
  Tensor x({ch, f, f});
  // Pretrained classifier backbones consume 3-channel input; the mel image
  // is replicated across channels. Tiny encoders take 1 channel directly.
  for (std::size_t c = 0; c < ch; ++c)
    std::copy(img.pixels.data.begin(), img.pixels.data.end(), x.data.begin() + c * f * f);
  return t.constant(std::move(x));
}

std::vector<int> SpecExtractor::encode_windows(Tape& t, const std::vector<audio::MelImage>& images) {
  MOSFUSE_CHECK(images.size() == encoders_.size(),
                "encode_windows: expected one image per window encoder");
  std::vector<int> maps;
  maps.reserve(images.size());
  for (std::size_t n = 0; n < images.size(); ++n) {
    MOSFUSE_CHECK(images[n].window_size == encoders_[n]->declared_window(),
                  "encode_windows: image window " + std::to_string(images[n].window_size) +
                      " does not match encoder window " +
                      std::to_string(encoders_[n]->declared_window()));
    maps.push_back(encoders_[n]->forward(t, image_node(t, images[n], *encoders_[n])));
  }
  return maps;
}

int SpecExtractor::aggregate_windows(Tape& t, const std::vector<int>& maps) {
  MOSFUSE_CHECK(maps.size() == encoders_.size(), "aggregate_windows: map count mismatch");
  for (int m : maps)
    MOSFUSE_CHECK(t.value(m).same_shape(t.value(maps[0])), "aggregate_windows: shape mismatch");
  return nn::weighted_sum(t, maps, t.param(&window_weights_));
}

int SpecExtractor::concat_and_pool(Tape& t, const std::vector<int>& frame_maps) {
  MOSFUSE_CHECK(!frame_maps.empty(), "concat_and_pool: no frames");
  int all = t.concat_axis2(frame_maps);    // [c, f, K*t]
  int time_mean = t.reduce_mean_axis2(all);  // [c, f]
  int time_max = t.reduce_max_axis2(all);    // [c, f]
  int q = t.param(&freq_query_);
  std::vector<int> parts;
  for (int m : {time_mean, time_max}) {
    parts.push_back(nn::attention_pool(t, t.transpose2d(m), q));  // [c]
    parts.push_back(t.reduce_max_axis1(m));                       // [c]
  }
  return t.concat_vec(parts);  // [4c]
}

int SpecExtractor::forward(Tape& t, const std::vector<std::vector<audio::MelImage>>& images) {
  std::vector<int> frame_maps;
  frame_maps.reserve(images.size());
  for (const auto& frame_images : images)
    frame_maps.push_back(aggregate_windows(t, encode_windows(t, frame_images)));
  return concat_and_pool(t, frame_maps);
}

void SpecExtractor::collect_params(std::vector<Param*>* out) {
  for (auto& e : encoders_) e->collect_params(out);
  out->push_back(&window_weights_);
  out->push_back(&freq_query_);
}

}  // namespace mosfuse::specfeat
