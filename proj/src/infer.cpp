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

#include "mosfuse/infer.hpp"

#include <cmath>

namespace mosfuse::infer {

namespace {

// One rep: frame draw, spectrogram features, fusion with the (shared) SSL
// node, domain handling per mode. Returns the rep's scalar prediction.
double forward_rep(fusion::Predictor& model, Tape& tape, const audio::Waveform& w,
                   const InferenceConfig& cfg, int shared_ssl, std::uint64_t rep_seed) {
  const audio::AudioConfig& acfg = model.audio_config();
  const fusion::ModelSpec& ms = model.model_spec();

  int h_spec = -1;
  audio::FrameSet frames;
  if (ms.spec_branch || cfg.ssl_uses_frames)
    frames = audio::extract_frames(w, acfg.frames_per_utt, acfg.frame_samples, rep_seed);
  if (ms.spec_branch)
    h_spec = model.spec_extractor()->forward(tape, audio::mel_images(frames, acfg));

  int h_ssl = shared_ssl;
  if (ms.ssl_branch && cfg.ssl_uses_frames) {
    std::vector<double> joined;
    for (const auto& f : frames.frames) joined.insert(joined.end(), f.begin(), f.end());
    audio::Waveform fw{std::move(joined), w.sample_rate};
    h_ssl = model.ssl_extractor()->forward(tape, fw);
  }

  if (ms.domain_encoding) {
    MOSFUSE_CHECK(cfg.domain.kind != DomainMode::Kind::kOff,
                  "predict: this model was trained with domain encoding; "
                  "domain mode 'off' does not match it");
    return fusion::predict_domain_average(model, tape, h_spec, h_ssl, cfg.domain.tokens);
  }

  MOSFUSE_CHECK(cfg.domain.kind == DomainMode::Kind::kOff,
                "predict: this model has no domain encoding; use domain mode 'off'");
  int feats = model.item_features(tape, h_spec, h_ssl, -1);
  return tape.value(model.predict_rows(tape, {feats})).data[0];
}

}  // namespace

double predict_tta(fusion::Predictor& model, const audio::Waveform& w,
                   const InferenceConfig& cfg, std::uint64_t item_seed, TtaLog* log) {
  cfg.validate();
  MOSFUSE_CHECK(!w.samples.empty(), "predict_tta: empty waveform");
  Tape tape;
  int shared_ssl = -1;
  if (model.model_spec().ssl_branch && !cfg.ssl_uses_frames)
    shared_ssl = model.ssl_extractor()->forward(tape, w);

  double acc = 0.0;
  if (log) log->per_rep.clear();
  for (std::size_t rep = 0; rep < cfg.tta_reps; ++rep) {
    double s = forward_rep(model, tape, w, cfg, shared_ssl,
                           derive_seed(item_seed, "tta", std::to_string(rep)));
    acc += s;
    if (log) log->per_rep.push_back(s);
  }
  return acc / static_cast<double>(cfg.tta_reps);
}

double predict_ensemble(std::span<fusion::Predictor* const> folds, const audio::Waveform& w,
                        const InferenceConfig& cfg, std::uint64_t item_seed, EnsembleLog* log) {
  MOSFUSE_CHECK(!folds.empty(), "predict_ensemble: no checkpoints");
  double acc = 0.0;
  if (log) {
    log->per_fold.clear();
    log->fold_tta.clear();
  }
  for (fusion::Predictor* model : folds) {
    TtaLog tta;
    double s = predict_tta(*model, w, cfg, item_seed, log ? &tta : nullptr);
    acc += s;
    if (log) {
      log->per_fold.push_back(s);
      log->fold_tta.push_back(std::move(tta));
    }
  }
  return acc / static_cast<double>(folds.size());
}

ManifestPredictions predict_manifest(std::span<fusion::Predictor* const> folds,
                                     const ingest::Manifest& manifest,
                                     const InferenceConfig& cfg) {
  cfg.validate();
  MOSFUSE_CHECK(!folds.empty(), "predict_manifest: no checkpoints");
  const int rate = folds[0]->audio_config().sample_rate;

  ManifestPredictions out;
  out.rows.resize(manifest.labels.size());
  std::vector<std::string> failures(manifest.labels.size());
  std::vector<char> failed(manifest.labels.size(), 0);

#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(manifest.labels.size()); ++i) {
    const ingest::UtteranceLabel& l = manifest.labels[i];
    try {
      audio::Waveform w = audio::load_audio(l.audio_path, rate);
      double s = predict_ensemble(folds, w, cfg, derive_seed(cfg.seed, l.utterance_id));
      out.rows[i] = {l.dataset_id, l.system_id, l.utterance_id, s};
    } catch (const std::exception& e) {
      failed[i] = 1;
      failures[i] = l.utterance_id + ": " + e.what();
    }
  }

  metrics::Table kept;
  kept.reserve(out.rows.size());
  for (std::size_t i = 0; i < out.rows.size(); ++i) {
    if (failed[i])
      out.failures.push_back(failures[i]);
    else
      kept.push_back(out.rows[i]);
  }
  out.rows = std::move(kept);
  return out;
}

}  // namespace mosfuse::infer
