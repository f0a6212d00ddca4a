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

#include "support/fixture.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <set>

namespace fs = std::filesystem;
using namespace mosfuse;

namespace fixture {

fs::path make_temp_dir(const std::string& tag) {
  static std::atomic<unsigned> counter{0};
  fs::path p = fs::temp_directory_path() /
               ("mosfuse_" + tag + "_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter.fetch_add(1)));
  fs::create_directories(p);
  return p;
}

void write_wav_pcm16(const std::string& path, const audio::Waveform& w) {
  std::ofstream out(path, std::ios::binary);
  MOSFUSE_CHECK(out.good(), "write_wav_pcm16: cannot open '" + path + "'");
  auto put_u32 = [&](std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<char*>(b), 4);
  };
  auto put_u16 = [&](std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
    out.write(reinterpret_cast<char*>(b), 2);
  };
  std::uint32_t data_len = static_cast<std::uint32_t>(w.samples.size() * 2);
  out.write("RIFF", 4);
  put_u32(36 + data_len);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  put_u32(16);
  put_u16(1);  // PCM
  put_u16(1);  // mono
  put_u32(static_cast<std::uint32_t>(w.sample_rate));
  put_u32(static_cast<std::uint32_t>(w.sample_rate) * 2);
  put_u16(2);
  put_u16(16);
  out.write("data", 4);
  put_u32(data_len);
  for (double v : w.samples) {
    double c = std::clamp(v, -1.0, 1.0);
    auto s = static_cast<std::int16_t>(std::lround(c * 32767.0));
    put_u16(static_cast<std::uint16_t>(s));
  }
}

audio::Waveform make_wave(double mos, int rate, std::size_t len, std::uint64_t seed) {
  audio::Waveform w;
  w.sample_rate = rate;
  w.samples.resize(len);
  Rng rng(seed);
  // The dominant cue is the noise floor, log-linear in mos so the dB gap to
  // the tone moves ~15 dB per opinion point; the tone position adds texture.
  double f0 = 300.0 + 400.0 * mos;
  double snr_db = 6.0 + 15.0 * (mos - 1.0);
  double noise_amp = 0.283 * std::pow(10.0, -snr_db / 20.0);
  for (std::size_t i = 0; i < len; ++i) {
    double t = static_cast<double>(i) / rate;
    w.samples[i] = 0.4 * std::sin(2.0 * M_PI * f0 * t) + noise_amp * rng.normal();
  }
  for (double& v : w.samples) v = std::clamp(v, -1.0, 1.0);
  return w;
}

ingest::Manifest make_corpus(const fs::path& dir, const CorpusSpec& spec) {
  fs::create_directories(dir / "wavs");
  std::vector<ingest::UtteranceLabel> labels;
  for (std::size_t s = 0; s < spec.systems; ++s) {
    std::string dataset = "fake" + std::string(1, static_cast<char>('A' + s % spec.domains));
    std::string system = "sys" + std::to_string(s);
    double base = spec.systems > 1
                      ? 1.7 + 2.6 * static_cast<double>(s) / static_cast<double>(spec.systems - 1)
                      : 3.0;
    for (std::size_t u = 0; u < spec.utts_per_system; ++u) {
      double off = spec.utts_per_system > 1
                       ? 1.2 * (static_cast<double>(u) / static_cast<double>(spec.utts_per_system - 1) - 0.5)
                       : 0.0;
      double mos = std::clamp(base + off, 1.05, 4.95);
      std::string utt = system + "-utt" + std::to_string(u);
      fs::path wav = dir / "wavs" / (utt + ".wav");
      write_wav_pcm16(wav.string(),
                             make_wave(mos, spec.rate, spec.wave_len,
                                       derive_seed(spec.seed, "wave", utt)));
      ingest::UtteranceLabel l;
      l.dataset_id = dataset;
      l.system_id = system;
      l.utterance_id = utt;
      l.audio_path = wav.string();
      l.mos = mos;
      l.n_ratings = 8;
      labels.push_back(std::move(l));
    }
  }
  std::sort(labels.begin(), labels.end(),
            [](const ingest::UtteranceLabel& a, const ingest::UtteranceLabel& b) {
              return std::tie(a.dataset_id, a.system_id, a.utterance_id) <
                     std::tie(b.dataset_id, b.system_id, b.utterance_id);
            });
  ingest::Manifest m;
  m.labels = std::move(labels);
  std::set<std::string> vocab;
  for (const auto& l : m.labels) vocab.insert(l.dataset_id);
  m.domain_vocabulary.assign(vocab.begin(), vocab.end());

  fs::path csv = dir / "manifest.csv";
  ingest::write_manifest_csv(m, csv.string());
  return ingest::read_manifest_csv(csv.string());
}

RunConfig tiny_run_config(std::uint64_t seed) {
  nlohmann::json j = default_config_json();
  j["seed"] = seed;
  j["audio"] = {{"sample_rate", 16000},
                {"frame_samples", 4096},
                {"frames_per_utt", 2},
                {"mel_bands", 32},
                {"windows", {128, 256}}};
  j["model"]["spec_encoder"] = {{"seed", 1}, {"mid_channels", 4}, {"out_channels", 6}};
  j["model"]["ssl_encoder"] = {{"seed", 2}, {"dim", 8}, {"layers", 2}, {"frame_samples", 256}};
  j["train"]["stages"] = {
      {"spec-s1", {{"lr_start", 2e-3}, {"lr_end", 1e-5}, {"epochs", 6}, {"batch_size", 8}}},
      {"ssl-s1-frozen", {{"lr_start", 2e-3}, {"lr_end", 1e-5}, {"epochs", 3}, {"batch_size", 8}}},
      {"ssl-s1-finetune", {{"lr_start", 3e-4}, {"lr_end", 1e-6}, {"epochs", 2}, {"batch_size", 8}}},
      {"s2-fusion", {{"lr_start", 2e-3}, {"lr_end", 1e-5}, {"epochs", 3}, {"batch_size", 8}}},
      {"s3-finetune", {{"lr_start", 1e-4}, {"lr_end", 1e-6}, {"epochs", 2}, {"batch_size", 8}}},
      {"no-stage2-finetune", {{"lr_start", 1e-4}, {"lr_end", 1e-6}, {"epochs", 2}, {"batch_size", 8}}},
      {"only-stage3", {{"lr_start", 2e-3}, {"lr_end", 1e-5}, {"epochs", 4}, {"batch_size", 8}}},
  };
  j["infer"] = {{"tta_reps", 3},
                {"domain_mode", "fixed"},
                {"domain_tokens", {"fakeA"}},
                {"seed", 0},
                {"ssl_uses_frames", false}};
  j["evaluate"] = {{"manifest", ""},
                   {"levels", "both"},
                   {"zooms", {1.0, 0.5}},
                   {"ktau_variant", "tau-b"},
                   {"clamp", false}};
  return parse_run_config(j, ".", false);
}

}  // namespace fixture
