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

#include "mosfuse/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "mosfuse/kernels.hpp"

namespace mosfuse::audio {

namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0]) | (static_cast<std::uint16_t>(p[1]) << 8);
}

std::vector<double> resample_linear(const std::vector<double>& x, int src_rate, int dst_rate) {
  if (src_rate == dst_rate) return x;
  double ratio = static_cast<double>(src_rate) / static_cast<double>(dst_rate);
  std::size_t out_len = static_cast<std::size_t>(
      std::max(1.0, std::floor(static_cast<double>(x.size()) / ratio)));
  std::vector<double> out(out_len);
  for (std::size_t i = 0; i < out_len; ++i) {
    double pos = static_cast<double>(i) * ratio;
    std::size_t i0 = static_cast<std::size_t>(pos);
    std::size_t i1 = std::min(i0 + 1, x.size() - 1);
    double frac = pos - static_cast<double>(i0);
    out[i] = x[i0] * (1.0 - frac) + x[i1] * frac;
  }
  return out;
}

}  // namespace

Waveform load_audio(const std::string& path, int target_rate) {
  std::ifstream in(path, std::ios::binary);
  MOSFUSE_CHECK(in.good(), "load_audio: cannot open '" + path + "'");
  std::vector<unsigned char> raw((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  MOSFUSE_CHECK(raw.size() >= 44, "load_audio: '" + path + "' is not a WAV file (too short)");
  MOSFUSE_CHECK(std::memcmp(raw.data(), "RIFF", 4) == 0 && std::memcmp(raw.data() + 8, "WAVE", 4) == 0,
                "load_audio: '" + path + "' is not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= raw.size()) {
    const unsigned char* hdr = raw.data() + pos;
    std::uint32_t chunk_len = read_u32(hdr + 4);
    const unsigned char* body = hdr + 8;
    if (pos + 8 + chunk_len > raw.size()) chunk_len = static_cast<std::uint32_t>(raw.size() - pos - 8);
    if (std::memcmp(hdr, "fmt ", 4) == 0 && chunk_len >= 16) {
      format = read_u16(body);
      channels = read_u16(body + 2);
      rate = read_u32(body + 4);
      bits = read_u16(body + 14);
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data = body;
      data_len = chunk_len;
    }
    pos += 8 + chunk_len + (chunk_len & 1);
  }
  MOSFUSE_CHECK(rate > 0 && channels > 0, "load_audio: '" + path + "' has no fmt chunk");
  MOSFUSE_CHECK(data != nullptr, "load_audio: '" + path + "' has no data chunk");
  MOSFUSE_CHECK(format == 1 || format == 3, "load_audio: '" + path + "' unsupported codec (PCM and IEEE float only)");

  std::size_t bytes_per_sample = bits / 8;
  MOSFUSE_CHECK(bytes_per_sample > 0, "load_audio: bad bit depth");
  std::size_t n_samples = data_len / (bytes_per_sample * channels);
  MOSFUSE_CHECK(n_samples > 0, "load_audio: empty audio in '" + path + "'");

  std::vector<double> mono(n_samples, 0.0);
  for (std::size_t i = 0; i < n_samples; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const unsigned char* s = data + (i * channels + c) * bytes_per_sample;
      double v = 0.0;
      if (format == 1 && bits == 16) {
        std::int16_t x = static_cast<std::int16_t>(read_u16(s));
        v = static_cast<double>(x) / 32768.0;
      } else if (format == 1 && bits == 24) {
        std::int32_t x = static_cast<std::int32_t>(s[0]) | (static_cast<std::int32_t>(s[1]) << 8) |
                         (static_cast<std::int32_t>(static_cast<std::int8_t>(s[2])) << 16);
        v = static_cast<double>(x) / 8388608.0;
      } else if (format == 1 && bits == 32) {
        std::int32_t x = static_cast<std::int32_t>(read_u32(s));
        v = static_cast<double>(x) / 2147483648.0;
      } else if (format == 3 && bits == 32) {
        float x;
        std::memcpy(&x, s, 4);
        v = static_cast<double>(x);
      } else if (format == 3 && bits == 64) {
        double x;
        std::memcpy(&x, s, 8);
        v = x;
      } else {
        MOSFUSE_CHECK(false, "load_audio: unsupported sample format in '" + path + "'");
      }
      acc += v;
    }
    mono[i] = acc / static_cast<double>(channels);
  }

  Waveform w;
  w.samples = resample_linear(mono, static_cast<int>(rate), target_rate);
  w.sample_rate = target_rate;

  double peak = 0.0;
  for (double v : w.samples) peak = std::max(peak, std::fabs(v));
  if (peak > 1.0)
    for (double& v : w.samples) v /= peak;
  MOSFUSE_CHECK(!w.samples.empty(), "load_audio: empty audio in '" + path + "'");
  return w;
}

FrameSet extract_frames(const Waveform& w, std::size_t k, std::size_t l, std::uint64_t seed) {
  MOSFUSE_CHECK(k >= 1 && l >= 1, "extract_frames: K and L must be >= 1");
  MOSFUSE_CHECK(!w.samples.empty(), "extract_frames: empty waveform");

  // Tile short signals end-to-end until at least L samples are available.
  const std::vector<double>* src = &w.samples;
  std::vector<double> tiled;
  if (w.samples.size() < l) {
    std::size_t reps = (l + w.samples.size() - 1) / w.samples.size();
    tiled.reserve(reps * w.samples.size());
    for (std::size_t r = 0; r < reps; ++r)
      tiled.insert(tiled.end(), w.samples.begin(), w.samples.end());
    src = &tiled;
  }

  FrameSet fs;
  fs.seed = seed;
  Rng rng(seed);
  std::size_t span = src->size() - l;  // inclusive upper bound for offsets
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t off = span == 0 ? 0 : rng.uniform_index(span + 1);
    fs.offsets.push_back(off);
    fs.frames.emplace_back(src->begin() + off, src->begin() + off + l);
  }
  return fs;
}

MelImage mel_image(const std::vector<double>& frame, std::size_t window_size,
                   std::size_t mel_bands, int rate) {
  const std::size_t l = frame.size();
  MOSFUSE_CHECK(window_size <= l, "mel_image: window_size exceeds frame length");
  MOSFUSE_CHECK(mel_bands >= 8, "mel_image: F must be >= 8");

  const std::size_t f = mel_bands;
  const std::size_t hop = (l + f - 1) / f;  // ceil(L/F)
  const std::size_t n_frames = (l + hop - 1) / hop;
  const std::size_t n_bins = window_size / 2 + 1;

  std::vector<double> spec(n_frames * n_bins);
  kernels::stft_magnitude(frame.data(), l, window_size, hop, n_frames, spec.data());

  std::vector<double> filt;
  kernels::mel_filterbank(f, window_size, static_cast<double>(rate), &filt);

  // mel[f, n_frames] = filt[f, n_bins] * spec^T
  std::vector<double> mel(f * n_frames);
  kernels::gemm_nt(filt.data(), spec.data(), mel.data(), f, n_bins, n_frames);

  // dB with a floor relative to the peak.
  double mx = -1e300;
  for (double& v : mel) {
    v = 20.0 * std::log10(std::max(v, 1e-10));
    mx = std::max(mx, v);
  }
  for (double& v : mel) v = std::max(v, mx - 80.0);

  // Force the time axis to exactly F columns: center crop when longer,
  // center pad by edge replication when shorter.
  Tensor img({f, f});
  if (n_frames >= f) {
    std::size_t start = (n_frames - f) / 2;
    for (std::size_t m = 0; m < f; ++m)
      for (std::size_t t = 0; t < f; ++t) img.at(m, t) = mel[m * n_frames + start + t];
  } else {
    std::size_t lpad = (f - n_frames) / 2;
    for (std::size_t m = 0; m < f; ++m)
      for (std::size_t t = 0; t < f; ++t) {
        std::size_t srcs = t < lpad ? 0 : std::min(t - lpad, n_frames - 1);
        img.at(m, t) = mel[m * n_frames + srcs];
      }
  }

  double lo = img.data[0], hi = img.data[0];
  for (double v : img.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi - lo < 1e-12) {
    std::fill(img.data.begin(), img.data.end(), 0.0);
  } else {
    for (double& v : img.data) v = (v - lo) / (hi - lo);
  }

  MelImage out;
  out.pixels = std::move(img);
  out.window_size = window_size;
  return out;
}

std::vector<std::vector<MelImage>> mel_images(const FrameSet& frames, const AudioConfig& cfg) {
  std::vector<std::vector<MelImage>> out(frames.frames.size());
  for (std::size_t k = 0; k < frames.frames.size(); ++k) {
    out[k].reserve(cfg.windows.size());
    for (std::size_t w : cfg.windows) {
      MelImage img = mel_image(frames.frames[k], w, cfg.mel_bands, cfg.sample_rate);
      img.frame_index = k;
      out[k].push_back(std::move(img));
    }
  }
  return out;
}

}  // namespace mosfuse::audio
