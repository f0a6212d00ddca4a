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

// End-to-end tests that drive the installed mosfuse binary (path via the
// MOSFUSE_BIN environment variable set by CMake).

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "mosfuse/ingest.hpp"
#include "support/fixture.hpp"

namespace fs = std::filesystem;
using namespace mosfuse;
using nlohmann::json;

namespace {

std::string binary() {
  const char* bin = std::getenv("MOSFUSE_BIN");
  REQUIRE(bin != nullptr);
  return bin;
}

int run(const std::string& args) {
  std::string cmd = binary() + " " + args + " >/dev/null 2>&1";
  int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

void write_ratings_fixture(const fs::path& dir) {
  fs::create_directories(dir / "wavs");
  for (const char* utt : {"u1", "u2", "u3", "u4"}) {
    audio::Waveform w = fixture::make_wave(3.0, 16000, 2000, hash_str(utt));
    fixture::write_wav_pcm16((dir / "wavs" / (std::string(utt) + ".wav")).string(), w);
  }
  std::ofstream csv(dir / "ratings.csv");
  csv << "system,utterance,listener,score,audio_path\n"
         "sysA,u1,l1,4,wavs/u1.wav\n"
         "sysA,u1,l2,5,wavs/u1.wav\n"
         "sysA,u2,l1,3,wavs/u2.wav\n"
         "sysB,u3,l1,2,wavs/u3.wav\n"
         "sysB,u4,l2,1,wavs/u4.wav\n";
}

fs::path write_tiny_config(const fs::path& dir, std::size_t folds = 2) {
  RunConfig cfg = fixture::tiny_run_config();
  json j = cfg.snapshot;
  j["train"]["folds"] = folds;
  for (auto& [name, stage] : j["train"]["stages"].items()) {
    stage["epochs"] = 1;
    stage["batch_size"] = 8;
  }
  fs::path p = dir / "config.json";
  std::ofstream out(p);
  out << j.dump(2);
  return p;
}

}  // namespace

TEST_CASE("ingest produces the canonical manifest from a raw dump") {
  fs::path dir = fixture::make_temp_dir("cli");
  write_ratings_fixture(dir);
  fs::path manifest = dir / "manifest.csv";
  int rc = run("ingest --format bvcc --in " + dir.string() + " --out " + manifest.string());
  CHECK(rc == 0);
  ingest::Manifest m = ingest::read_manifest_csv(manifest.string());
  CHECK(m.labels.size() == 4);
  CHECK(m.labels[0].mos == doctest::Approx(4.5));
  fs::remove_all(dir);
}

TEST_CASE("schema errors exit with code 1 before any work") {
  fs::path dir = fixture::make_temp_dir("cli");
  std::ofstream(dir / "bad.json") << "{\"mystery_key\": 1}";
  CHECK(run("train --config " + (dir / "bad.json").string() + " --out-dir " + dir.string()) == 1);

  std::ofstream(dir / "bad_path.json") << R"({"datasets":[{"format":"bvcc","dir":"/nonexistent"}]})";
  CHECK(run("pipeline --config " + (dir / "bad_path.json").string()) == 1);
  CHECK(run("ingest --format mystery --in " + dir.string() + " --out x.csv") == 2);
  fs::remove_all(dir);
}

TEST_CASE("train, predict and evaluate chain through the CLI") {
  fs::path dir = fixture::make_temp_dir("cli");
  fixture::CorpusSpec spec;
  spec.systems = 4;
  spec.utts_per_system = 4;
  ingest::Manifest manifest = fixture::make_corpus(dir, spec);
  fs::path cfg = write_tiny_config(dir);

  fs::path train_out = dir / "train_out";
  CHECK(run("train --config " + cfg.string() + " --manifest " + (dir / "manifest.csv").string() +
            " --arm no-ssl --out-dir " + train_out.string()) == 0);
  CHECK(fs::exists(train_out / "checkpoints" / "fold_0.ckpt.json"));
  CHECK(fs::exists(train_out / "checkpoints" / "fold_1.ckpt.json"));

  fs::path pred = dir / "pred.csv";
  CHECK(run("predict --ckpt " + (train_out / "checkpoints").string() + " --manifest " +
            (dir / "manifest.csv").string() + " --out " + pred.string() +
            " --domain fakeA --seed 0 --tta 2") == 0);

  fs::path report = dir / "report.json";
  CHECK(run("evaluate --pred " + pred.string() + " --truth " + (dir / "manifest.csv").string() +
            " --level both --zoom 0.5 --zoom 1.0 --out " + report.string()) == 0);
  json j;
  std::ifstream(report) >> j;
  REQUIRE(j.contains("conditions"));
  CHECK(j["conditions"].size() == 4);  // 2 zooms x 2 levels
  for (const json& block : j["conditions"]) {
    CHECK(block["srcc"].get<double>() <= 1.0);
    CHECK(block["srcc"].get<double>() >= -1.0);
    CHECK(block["mse"].get<double>() >= 0.0);
  }

  fs::path report_a = dir / "report_taua.json";
  CHECK(run("evaluate --pred " + pred.string() + " --truth " + (dir / "manifest.csv").string() +
            " --level system --ktau-variant tau-a --clamp --out " + report_a.string()) == 0);
  json ja;
  std::ifstream(report_a) >> ja;
  CHECK(ja["conditions"].size() == 1);
  CHECK(run("evaluate --pred " + pred.string() + " --truth " + (dir / "manifest.csv").string() +
            " --ktau-variant tau-c") == 1);
  fs::remove_all(dir);
}

TEST_CASE("predict signals partial failure with exit code 3") {
  fs::path dir = fixture::make_temp_dir("cli");
  fixture::CorpusSpec spec;
  spec.systems = 2;
  spec.utts_per_system = 3;
  ingest::Manifest manifest = fixture::make_corpus(dir, spec);
  fs::path cfg = write_tiny_config(dir);

  fs::path train_out = dir / "train_out";
  REQUIRE(run("train --config " + cfg.string() + " --manifest " + (dir / "manifest.csv").string() +
              " --arm no-ssl --out-dir " + train_out.string()) == 0);

  fs::remove(manifest.labels[0].audio_path);
  fs::path pred = dir / "pred.csv";
  CHECK(run("predict --ckpt " + (train_out / "checkpoints").string() + " --manifest " +
            (dir / "manifest.csv").string() + " --out " + pred.string() +
            " --domain fakeA --tta 1") == 3);
  fs::remove_all(dir);
}

TEST_CASE("the ablation arm no-ssl trains a model without the SSL segment") {
  fs::path dir = fixture::make_temp_dir("cli");
  fixture::CorpusSpec spec;
  spec.systems = 4;
  spec.utts_per_system = 3;
  fixture::make_corpus(dir, spec);
  fs::path cfg_path = dir / "config.json";
  {
    RunConfig base = fixture::tiny_run_config();
    json j = base.snapshot;
    j["train"]["folds"] = 2;
    for (auto& [name, stage] : j["train"]["stages"].items()) stage["epochs"] = 1;
    j["datasets"] = json::array({{{"format", "generic"},
                                  {"dir", (dir / "raw").string()},
                                  {"rules", json::array({"none"})},
                                  {"check_audio", false}}});
    // generic-format raw dump derived from the corpus manifest
    fs::create_directories(dir / "raw");
    ingest::Manifest m = ingest::read_manifest_csv((dir / "manifest.csv").string());
    std::ofstream raw(dir / "raw" / "votes.csv");
    raw << "dataset,system,utterance,listener,score,audio_path\n";
    for (const auto& l : m.labels) {
      int rounded = static_cast<int>(std::lround(l.mos));
      raw << l.dataset_id << ',' << l.system_id << ',' << l.utterance_id << ",l1," << rounded
          << ',' << l.audio_path << "\n";
    }
    std::ofstream out(cfg_path);
    out << j.dump(2);
  }

  fs::path run_dir = dir / "ablate_run";
  CHECK(run("ablate --config " + cfg_path.string() + " --arm no-ssl --out-dir " +
            (dir / "runs").string() + " --run-dir " + run_dir.string()) == 0);

  json ckpt;
  std::ifstream(run_dir / "checkpoints" / "fold_0.ckpt.json") >> ckpt;
  CHECK(ckpt["model"]["ssl_branch"].get<bool>() == false);
  CHECK(ckpt["model"]["spec_branch"].get<bool>() == true);
  CHECK(fs::exists(run_dir / "reports" / "report.json"));
  fs::remove_all(dir);
}

TEST_CASE("domain-sweep and drop-dataset ablation arms emit tagged reports") {
  fs::path dir = fixture::make_temp_dir("cli");
  fixture::CorpusSpec spec;
  spec.systems = 6;  // dropping one of two domains must leave >= 2 systems per zoom
  spec.utts_per_system = 3;
  fixture::make_corpus(dir, spec);

  RunConfig base = fixture::tiny_run_config();
  json j = base.snapshot;
  j["train"]["folds"] = 2;
  for (auto& [name, stage] : j["train"]["stages"].items()) stage["epochs"] = 1;
  j["model"]["ssl_branch"] = false;
  fs::create_directories(dir / "raw");
  ingest::Manifest m = ingest::read_manifest_csv((dir / "manifest.csv").string());
  {
    std::ofstream raw(dir / "raw" / "votes.csv");
    raw << "dataset,system,utterance,listener,score,audio_path\n";
    for (const auto& l : m.labels)
      raw << l.dataset_id << ',' << l.system_id << ',' << l.utterance_id << ",l1,"
          << static_cast<int>(std::lround(l.mos)) << ',' << l.audio_path << "\n";
  }
  j["datasets"] = json::array({{{"format", "generic"},
                                {"dir", (dir / "raw").string()},
                                {"rules", json::array({"none"})},
                                {"check_audio", false}}});
  fs::path cfg_path = dir / "config.json";
  std::ofstream(cfg_path) << j.dump(2);

  auto file_bytes = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  };
  std::string config_before = file_bytes(cfg_path);

  fs::path sweep_dir = dir / "sweep";
  CHECK(run("ablate --config " + cfg_path.string() + " --arm domain-sweep --run-dir " +
            sweep_dir.string()) == 0);
  CHECK(file_bytes(cfg_path) == config_before);  // arms never touch the base config
  json sweep;
  std::ifstream(sweep_dir / "reports" / "domain_sweep.json") >> sweep;
  CHECK(sweep["arm"] == "domain-sweep");
  REQUIRE(sweep["domains"].size() == 2);  // one block per seen domain token
  CHECK(sweep["domains"][0]["domain"] == "fakeA");
  CHECK(sweep["domains"][1]["domain"] == "fakeB");

  fs::path drop_dir = dir / "drop";
  CHECK(run("ablate --config " + cfg_path.string() + " --arm drop-dataset:fakeB --run-dir " +
            drop_dir.string()) == 0);
  ingest::Manifest trained =
      ingest::read_manifest_csv((drop_dir / "config" / "train_manifest.csv").string());
  CHECK(trained.domain_vocabulary == std::vector<std::string>{"fakeA"});
  for (const auto& l : trained.labels) CHECK(l.dataset_id != "fakeB");

  CHECK(run("ablate --config " + cfg_path.string() + " --arm mystery") == 1);
  fs::remove_all(dir);
}

TEST_CASE("pipeline reruns with identical seeds produce identical reports") {
  fs::path dir = fixture::make_temp_dir("cli");
  fixture::CorpusSpec spec;
  spec.systems = 4;
  spec.utts_per_system = 3;
  fixture::make_corpus(dir, spec);

  RunConfig base = fixture::tiny_run_config();
  json j = base.snapshot;
  j["train"]["folds"] = 2;
  for (auto& [name, stage] : j["train"]["stages"].items()) stage["epochs"] = 1;
  j["model"]["ssl_branch"] = false;
  fs::create_directories(dir / "raw");
  ingest::Manifest m = ingest::read_manifest_csv((dir / "manifest.csv").string());
  {
    std::ofstream raw(dir / "raw" / "votes.csv");
    raw << "dataset,system,utterance,listener,score,audio_path\n";
    for (const auto& l : m.labels)
      raw << l.dataset_id << ',' << l.system_id << ',' << l.utterance_id << ",l1,"
          << static_cast<int>(std::lround(l.mos)) << ',' << l.audio_path << "\n";
  }
  j["datasets"] = json::array({{{"format", "generic"},
                                {"dir", (dir / "raw").string()},
                                {"rules", json::array({"none"})},
                                {"check_audio", false}}});
  fs::path cfg_path = dir / "config.json";
  std::ofstream(cfg_path) << j.dump(2);

  auto report_bytes = [&](const fs::path& run_dir) {
    REQUIRE(run("pipeline --config " + cfg_path.string() + " --run-dir " + run_dir.string()) == 0);
    std::ifstream in(run_dir / "reports" / "report.json", std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  };
  std::string a = report_bytes(dir / "run_a");
  std::string b = report_bytes(dir / "run_b");
  CHECK(!a.empty());
  CHECK(a == b);
  fs::remove_all(dir);
}
