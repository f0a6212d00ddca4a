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

#ifndef MOSFUSE_TESTS_FIXTURE_HPP_
#define MOSFUSE_TESTS_FIXTURE_HPP_

#include <filesystem>
#include <string>

#include "mosfuse/config.hpp"
#include "mosfuse/ingest.hpp"

namespace fixture {

/// Unique temp directory under the system temp root; removed by the caller.
std::filesystem::path make_temp_dir(const std::string& tag);

/// Mono PCM16 WAV writer for fixtures (the library itself only reads audio).
void write_wav_pcm16(const std::string& path, const mosfuse::audio::Waveform& w);

/// Tone plus seeded noise whose level falls with mos; higher-mos utterances
/// are cleaner, so spectrogram features can rank them.
mosfuse::audio::Waveform make_wave(double mos, int rate, std::size_t len, std::uint64_t seed);

struct CorpusSpec {
  std::size_t systems = 4;
  std::size_t utts_per_system = 8;
  std::size_t domains = 2;  // systems are split across domains round-robin
  int rate = 16000;
  std::size_t wave_len = 6000;
  std::uint64_t seed = 17;
};

/// Writes WAV files and a canonical manifest CSV under dir; returns the
/// manifest. MOS values span [1.2, 4.8] within and across systems.
mosfuse::ingest::Manifest make_corpus(const std::filesystem::path& dir, const CorpusSpec& spec);

/// Desk-scale run config wired for the tiny encoders (short frames, small
/// mel images, 2 windows, small SSL stack).
mosfuse::RunConfig tiny_run_config(std::uint64_t seed = 0);

}  // namespace fixture

#endif  // MOSFUSE_TESTS_FIXTURE_HPP_
