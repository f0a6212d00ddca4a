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

#ifndef MOSFUSE_AUDIO_HPP_
#define MOSFUSE_AUDIO_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "mosfuse/tensor.hpp"

namespace mosfuse::audio {

struct Waveform {
  std::vector<double> samples;  // mono, in [-1, 1]
  int sample_rate = 0;

  std::size_t size() const { return samples.size(); }
};

struct FrameSet {
  std::vector<std::vector<double>> frames;  // K frames of length L
  std::vector<std::size_t> offsets;         // start indices in the (tiled) signal
  std::uint64_t seed = 0;
};

struct MelImage {
  Tensor pixels;             // [F, F], values in [0,1]
  std::size_t window_size = 0;
  std::size_t frame_index = 0;
};

struct AudioConfig {
  int sample_rate = 16000;
  std::size_t frame_samples = 65536;          // L
  std::size_t frames_per_utt = 2;             // K
  std::size_t mel_bands = 128;                // F
  std::vector<std::size_t> windows = {512, 1024, 2048, 4096};  // w^(n)
  double db_floor = 80.0;                     // dynamic range below the peak
};

/// Reads a PCM/float WAV file, averages channels to mono, resamples to
/// target_rate (linear interpolation) and peak-normalizes only when the
/// absolute amplitude exceeds 1.
Waveform load_audio(const std::string& path, int target_rate);

/// Draws K random frames of length L. Offsets are uniform over the valid
/// range; a waveform shorter than L is tiled end-to-end first.
FrameSet extract_frames(const Waveform& w, std::size_t k, std::size_t l, std::uint64_t seed);

/// Square mel-spectrogram image of one frame: Hann-window magnitude STFT at
/// the given window size, hop = ceil(L/F), mel bands over [0, rate/2], dB
/// with an 80 dB floor, min-max normalized to [0,1]. Constant images map to
/// all zeros.
MelImage mel_image(const std::vector<double>& frame, std::size_t window_size,
                   std::size_t mel_bands, int rate);

/// All K*N mel images of a frame set (outer index: frame, inner: window).
std::vector<std::vector<MelImage>> mel_images(const FrameSet& frames, const AudioConfig& cfg);

}  // namespace mosfuse::audio

#endif  // MOSFUSE_AUDIO_HPP_
