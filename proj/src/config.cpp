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

#include "mosfuse/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>

#include "mosfuse/ingest.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mosfuse {

namespace {

[[noreturn]] void schema_error(const std::string& msg) { throw ValidationError("config: " + msg); }

void check_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
  if (!j.is_object()) schema_error(where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) schema_error("unknown key '" + it.key() + "' in " + where);
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    schema_error("key '" + key + "' has the wrong type");
  }
}

}  // namespace

const std::map<std::string, StagePlanConfig>& default_stage_plans() {
  static const std::map<std::string, StagePlanConfig> plans = {
      {"spec-s1", {1e-3, 1e-7, 20, 10}},
      {"ssl-s1-frozen", {1e-3, 1e-7, 20, 32}},
      {"ssl-s1-finetune", {3e-5, 1e-9, 5, 32}},
      {"s2-fusion", {1e-3, 1e-5, 8, 16}},
      {"s3-finetune", {5e-5, 1e-8, 2, 8}},
      {"no-stage2-finetune", {1e-4, 1e-7, 20, 8}},
      {"only-stage3", {1e-3, 1e-7, 20, 8}},
  };
  return plans;
}

json model_spec_to_json(const fusion::ModelSpec& m) {
  return json{
      {"spec_branch", m.spec_branch},
      {"ssl_branch", m.ssl_branch},
      {"domain_encoding", m.domain_encoding},
      {"domain_dim", m.domain_dim},
      {"head_seed", m.head_seed},
      {"spec_encoder",
       {{"seed", m.spec.seed}, {"mid_channels", m.spec.mid_channels}, {"out_channels", m.spec.out_channels}}},
      {"ssl_encoder",
       {{"seed", m.ssl.seed}, {"dim", m.ssl.dim}, {"layers", m.ssl.layers}, {"frame_samples", m.ssl.frame_samples}}},
  };
}

fusion::ModelSpec model_spec_from_json(const json& j) {
  check_keys(j, "model", {"spec_branch", "ssl_branch", "domain_encoding", "domain_dim",
                          "head_seed", "spec_encoder", "ssl_encoder"});
  fusion::ModelSpec m;
  m.spec_branch = get_or(j, "spec_branch", m.spec_branch);
  m.ssl_branch = get_or(j, "ssl_branch", m.ssl_branch);
  m.domain_encoding = get_or(j, "domain_encoding", m.domain_encoding);
  m.domain_dim = get_or(j, "domain_dim", m.domain_dim);
  m.head_seed = get_or(j, "head_seed", m.head_seed);
  if (j.contains("spec_encoder")) {
    const json& e = j.at("spec_encoder");
    check_keys(e, "model.spec_encoder", {"seed", "mid_channels", "out_channels"});
    m.spec.seed = get_or(e, "seed", m.spec.seed);
    m.spec.mid_channels = get_or(e, "mid_channels", m.spec.mid_channels);
    m.spec.out_channels = get_or(e, "out_channels", m.spec.out_channels);
  }
  if (j.contains("ssl_encoder")) {
    const json& e = j.at("ssl_encoder");
    check_keys(e, "model.ssl_encoder", {"seed", "dim", "layers", "frame_samples"});
    m.ssl.seed = get_or(e, "seed", m.ssl.seed);
    m.ssl.dim = get_or(e, "dim", m.ssl.dim);
    m.ssl.layers = get_or(e, "layers", m.ssl.layers);
    m.ssl.frame_samples = get_or(e, "frame_samples", m.ssl.frame_samples);
  }
  if (!m.spec_branch && !m.ssl_branch) schema_error("model must enable at least one branch");
  if (m.domain_encoding && m.domain_dim < 1) schema_error("model.domain_dim must be >= 1");
  return m;
}

json audio_config_to_json(const audio::AudioConfig& a) {
  return json{{"sample_rate", a.sample_rate},
              {"frame_samples", a.frame_samples},
              {"frames_per_utt", a.frames_per_utt},
              {"mel_bands", a.mel_bands},
              {"windows", a.windows}};
}

audio::AudioConfig audio_config_from_json(const json& j) {
  check_keys(j, "audio", {"sample_rate", "frame_samples", "frames_per_utt", "mel_bands", "windows"});
  audio::AudioConfig a;
  a.sample_rate = get_or(j, "sample_rate", a.sample_rate);
  a.frame_samples = get_or(j, "frame_samples", a.frame_samples);
  a.frames_per_utt = get_or(j, "frames_per_utt", a.frames_per_utt);
  a.mel_bands = get_or(j, "mel_bands", a.mel_bands);
  a.windows = get_or(j, "windows", a.windows);
  if (a.sample_rate <= 0) schema_error("audio.sample_rate must be positive");
  if (a.mel_bands < 8) schema_error("audio.mel_bands must be >= 8");
  if (a.mel_bands % 4 != 0) schema_error("audio.mel_bands must be divisible by 4");
  if (a.windows.empty()) schema_error("audio.windows must be non-empty");
  if (a.frames_per_utt < 1) schema_error("audio.frames_per_utt must be >= 1");
  for (std::size_t w : a.windows)
    if (w > a.frame_samples) schema_error("audio window size exceeds frame_samples");
  return a;
}

nlohmann::json default_config_json() {
  RunConfig c;
  json stages;
  for (const auto& [name, p] : default_stage_plans())
    stages[name] = {{"lr_start", p.lr_start},
                    {"lr_end", p.lr_end},
                    {"epochs", p.epochs},
                    {"batch_size", p.batch_size}};
  return json{
      {"seed", c.seed},
      {"audio", audio_config_to_json(c.audio)},
      {"model", model_spec_to_json(c.model)},
      {"loss",
       {{"alpha", c.loss.alpha},
        {"lambda_con", c.loss.lambda_con},
        {"lambda_mse", c.loss.lambda_mse},
        {"mixup_alpha", c.loss.mixup_alpha},
        {"pair_mode", "ordered"}}},
      {"datasets", json::array()},
      {"train",
       {{"folds", c.train.folds},
        {"fold_seed", c.train.fold_seed},
        {"weight_decay", c.train.weight_decay},
        {"stages", stages},
        {"init_checkpoints", c.train.init_checkpoints}}},
      {"infer",
       {{"tta_reps", c.infer.tta_reps},
        {"domain_mode", c.infer.domain_mode},
        {"domain_tokens", c.infer.domain_tokens},
        {"seed", c.infer.seed},
        {"ssl_uses_frames", c.infer.ssl_uses_frames}}},
      {"evaluate",
       {{"manifest", c.evaluate.manifest},
        {"levels", c.evaluate.levels},
        {"zooms", c.evaluate.zooms},
        {"ktau_variant", c.evaluate.ktau_variant},
        {"clamp", c.evaluate.clamp}}},
  };
}

RunConfig parse_run_config(const json& j, const std::string& base_dir, bool validate_paths) {
  check_keys(j, "config",
             {"seed", "audio", "model", "loss", "datasets", "train", "infer", "evaluate"});
  RunConfig c;
  c.seed = get_or<std::uint64_t>(j, "seed", 0);
  if (j.contains("audio")) c.audio = audio_config_from_json(j.at("audio"));
  if (j.contains("model")) c.model = model_spec_from_json(j.at("model"));
  c.model.ssl.sample_rate = c.audio.sample_rate;

  if (j.contains("loss")) {
    const json& l = j.at("loss");
    check_keys(l, "loss", {"alpha", "lambda_con", "lambda_mse", "mixup_alpha", "pair_mode"});
    c.loss.alpha = get_or(l, "alpha", c.loss.alpha);
    c.loss.lambda_con = get_or(l, "lambda_con", c.loss.lambda_con);
    c.loss.lambda_mse = get_or(l, "lambda_mse", c.loss.lambda_mse);
    c.loss.mixup_alpha = get_or(l, "mixup_alpha", c.loss.mixup_alpha);
    std::string pair_mode = get_or<std::string>(l, "pair_mode", "ordered");
    if (pair_mode == "ordered")
      c.loss.ordered_pairs = true;
    else if (pair_mode == "unordered")
      c.loss.ordered_pairs = false;
    else
      schema_error("loss.pair_mode must be 'ordered' or 'unordered'");
    try {
      c.loss.validate();
    } catch (const std::exception& e) {
      schema_error(e.what());
    }
  }

  if (j.contains("datasets")) {
    if (!j.at("datasets").is_array()) schema_error("datasets must be an array");
    for (const json& d : j.at("datasets")) {
      check_keys(d, "datasets[]", {"format", "dir", "rules", "check_audio"});
      DatasetEntry e;
      e.format = get_or<std::string>(d, "format", "");
      e.dir = get_or<std::string>(d, "dir", "");
      e.rules = get_or(d, "rules", e.rules);
      e.check_audio = get_or(d, "check_audio", e.check_audio);
      if (e.format.empty() || e.dir.empty()) schema_error("datasets[] needs format and dir");
      const auto& formats = ingest::known_formats();
      if (std::find(formats.begin(), formats.end(), e.format) == formats.end())
        schema_error("unknown dataset format '" + e.format + "'");
      fs::path p(e.dir);
      if (p.is_relative()) p = fs::path(base_dir) / p;
      e.dir = p.string();
      if (validate_paths && !fs::exists(p))
        schema_error("dataset path '" + e.dir + "' does not exist");
      c.datasets.push_back(std::move(e));
    }
  }

  c.train.stages = default_stage_plans();
  if (j.contains("train")) {
    const json& t = j.at("train");
    check_keys(t, "train", {"folds", "fold_seed", "weight_decay", "stages", "init_checkpoints"});
    c.train.folds = get_or(t, "folds", c.train.folds);
    c.train.fold_seed = get_or(t, "fold_seed", c.train.fold_seed);
    c.train.weight_decay = get_or(t, "weight_decay", c.train.weight_decay);
    c.train.init_checkpoints = get_or(t, "init_checkpoints", c.train.init_checkpoints);
    if (!c.train.init_checkpoints.empty()) {
      fs::path p(c.train.init_checkpoints);
      if (p.is_relative()) p = fs::path(base_dir) / p;
      c.train.init_checkpoints = p.string();
      if (validate_paths && !fs::exists(p))
        schema_error("train.init_checkpoints '" + c.train.init_checkpoints + "' does not exist");
    }
    if (c.train.folds < 2) schema_error("train.folds must be >= 2");
    if (t.contains("stages")) {
      if (!t.at("stages").is_object()) schema_error("train.stages must be an object");
      for (auto it = t.at("stages").begin(); it != t.at("stages").end(); ++it) {
        auto found = c.train.stages.find(it.key());
        if (found == c.train.stages.end()) schema_error("unknown stage '" + it.key() + "'");
        const json& s = it.value();
        check_keys(s, "train.stages." + it.key(), {"lr_start", "lr_end", "epochs", "batch_size"});
        StagePlanConfig& p = found->second;
        p.lr_start = get_or(s, "lr_start", p.lr_start);
        p.lr_end = get_or(s, "lr_end", p.lr_end);
        p.epochs = get_or(s, "epochs", p.epochs);
        p.batch_size = get_or(s, "batch_size", p.batch_size);
        if (!(p.lr_start >= p.lr_end && p.lr_end > 0.0))
          schema_error("stage '" + it.key() + "' needs lr_start >= lr_end > 0");
        if (p.epochs < 1) schema_error("stage '" + it.key() + "' needs epochs >= 1");
        if (p.batch_size < 2) schema_error("stage '" + it.key() + "' needs batch_size >= 2");
      }
    }
  }

  if (j.contains("infer")) {
    const json& i = j.at("infer");
    check_keys(i, "infer", {"tta_reps", "domain_mode", "domain_tokens", "seed", "ssl_uses_frames"});
    c.infer.tta_reps = get_or(i, "tta_reps", c.infer.tta_reps);
    c.infer.domain_mode = get_or(i, "domain_mode", c.infer.domain_mode);
    c.infer.domain_tokens = get_or(i, "domain_tokens", c.infer.domain_tokens);
    c.infer.seed = get_or(i, "seed", c.infer.seed);
    c.infer.ssl_uses_frames = get_or(i, "ssl_uses_frames", c.infer.ssl_uses_frames);
    if (c.infer.tta_reps < 1) schema_error("infer.tta_reps must be >= 1");
    if (c.infer.domain_mode != "fixed" && c.infer.domain_mode != "average" &&
        c.infer.domain_mode != "off")
      schema_error("infer.domain_mode must be fixed, average or off");
    if (c.infer.domain_mode != "off" && c.infer.domain_tokens.empty())
      schema_error("infer.domain_tokens must not be empty");
  }

  if (j.contains("evaluate")) {
    const json& e = j.at("evaluate");
    check_keys(e, "evaluate", {"manifest", "levels", "zooms", "ktau_variant", "clamp"});
    c.evaluate.manifest = get_or(e, "manifest", c.evaluate.manifest);
    c.evaluate.levels = get_or(e, "levels", c.evaluate.levels);
    c.evaluate.zooms = get_or(e, "zooms", c.evaluate.zooms);
    c.evaluate.ktau_variant = get_or(e, "ktau_variant", c.evaluate.ktau_variant);
    c.evaluate.clamp = get_or(e, "clamp", c.evaluate.clamp);
    if (!c.evaluate.manifest.empty()) {
      fs::path p(c.evaluate.manifest);
      if (p.is_relative()) p = fs::path(base_dir) / p;
      c.evaluate.manifest = p.string();
      if (validate_paths && !fs::exists(p))
        schema_error("evaluate.manifest '" + c.evaluate.manifest + "' does not exist");
    }
    if (c.evaluate.levels != "both" && c.evaluate.levels != "utterance" &&
        c.evaluate.levels != "system")
      schema_error("evaluate.levels must be both, utterance or system");
    for (double z : c.evaluate.zooms)
      if (!(z > 0.0 && z <= 1.0)) schema_error("evaluate.zooms entries must be in (0, 1]");
    if (c.evaluate.ktau_variant != "tau-b" && c.evaluate.ktau_variant != "tau-a")
      schema_error("evaluate.ktau_variant must be tau-b or tau-a");
  }

  // Effective snapshot: defaults with the parsed values written back.
  json snap = default_config_json();
  snap["seed"] = c.seed;
  snap["audio"] = audio_config_to_json(c.audio);
  snap["model"] = model_spec_to_json(c.model);
  snap["loss"] = {{"alpha", c.loss.alpha},
                  {"lambda_con", c.loss.lambda_con},
                  {"lambda_mse", c.loss.lambda_mse},
                  {"mixup_alpha", c.loss.mixup_alpha},
                  {"pair_mode", c.loss.ordered_pairs ? "ordered" : "unordered"}};
  snap["datasets"] = json::array();
  for (const DatasetEntry& e : c.datasets)
    snap["datasets"].push_back({{"format", e.format},
                                {"dir", e.dir},
                                {"rules", e.rules},
                                {"check_audio", e.check_audio}});
  json stages;
  for (const auto& [name, p] : c.train.stages)
    stages[name] = {{"lr_start", p.lr_start},
                    {"lr_end", p.lr_end},
                    {"epochs", p.epochs},
                    {"batch_size", p.batch_size}};
  snap["train"] = {{"folds", c.train.folds},
                   {"fold_seed", c.train.fold_seed},
                   {"weight_decay", c.train.weight_decay},
                   {"stages", stages},
                   {"init_checkpoints", c.train.init_checkpoints}};
  snap["infer"] = {{"tta_reps", c.infer.tta_reps},
                   {"domain_mode", c.infer.domain_mode},
                   {"domain_tokens", c.infer.domain_tokens},
                   {"seed", c.infer.seed},
                   {"ssl_uses_frames", c.infer.ssl_uses_frames}};
  snap["evaluate"] = {{"manifest", c.evaluate.manifest},
                      {"levels", c.evaluate.levels},
                      {"zooms", c.evaluate.zooms},
                      {"ktau_variant", c.evaluate.ktau_variant},
                      {"clamp", c.evaluate.clamp}};
  c.snapshot = std::move(snap);
  return c;
}

RunConfig load_run_config(const std::string& path, bool validate_paths) {
  std::ifstream in(path);
  if (!in.good()) throw ValidationError("config: cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError("config: '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_run_config(j, fs::path(path).parent_path().string(), validate_paths);
}

std::string RunConfig::snapshot_hash() const {
  std::string dump = snapshot.dump();
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(hash_str(dump)));
  return buf;
}

}  // namespace mosfuse
