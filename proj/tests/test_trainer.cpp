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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "mosfuse/checkpoint.hpp"
#include "mosfuse/trainer.hpp"
#include "support/fixture.hpp"

namespace fs = std::filesystem;
using namespace mosfuse;
using namespace mosfuse::trainer;

namespace {

ingest::Manifest synthetic_manifest(std::size_t systems, std::size_t utts) {
  std::vector<ingest::UtteranceLabel> labels;
  for (std::size_t s = 0; s < systems; ++s)
    for (std::size_t u = 0; u < utts; ++u) {
      ingest::UtteranceLabel l;
      l.dataset_id = s % 2 ? "dsB" : "dsA";
      l.system_id = "sys" + std::to_string(s);
      l.utterance_id = l.system_id + "-u" + std::to_string(u);
      l.audio_path = "unused.wav";
      l.mos = 1.0 + static_cast<double>((s * utts + u) % 9) * 0.5;
      l.n_ratings = 3;
      labels.push_back(l);
    }
  ingest::Manifest m;
  m.labels = std::move(labels);
  m.domain_vocabulary = {"dsA", "dsB"};
  return m;
}

struct TinySetup {
  RunConfig cfg;
  fs::path dir;
  ingest::Manifest manifest;
  DataCache cache;
};

TinySetup make_setup(std::size_t systems = 4, std::size_t utts = 4) {
  TinySetup s{fixture::tiny_run_config(), fixture::make_temp_dir("trainer"), {}, {}};
  fixture::CorpusSpec spec;
  spec.systems = systems;
  spec.utts_per_system = utts;
  s.manifest = fixture::make_corpus(s.dir, spec);
  s.cache = load_data(s.manifest, s.cfg.audio);
  return s;
}

StageData full_data(const TinySetup& s) {
  StageData d;
  d.cache = &s.cache;
  for (std::size_t i = 0; i < s.cache.items.size(); ++i) d.train_idx.push_back(i);
  d.val_idx = d.train_idx;
  return d;
}

}  // namespace

TEST_CASE("ten systems split into five folds of two systems each") {
  ingest::Manifest m = synthetic_manifest(10, 3);
  FoldSplit split = make_folds(m, 5, 0);
  std::vector<std::size_t> counts(5, 0);
  for (const auto& [key, fold] : split.assignments) {
    CHECK(fold < 5);
    ++counts[fold];
  }
  for (std::size_t c : counts) CHECK(c == 2);
}

TEST_CASE("fold assignments are deterministic in the seed and partition all systems") {
  ingest::Manifest m = synthetic_manifest(12, 2);
  FoldSplit a = make_folds(m, 4, 9);
  FoldSplit b = make_folds(m, 4, 9);
  CHECK(a.assignments == b.assignments);
  CHECK(a.assignments.size() == 12);

  FoldSplit c = make_folds(m, 4, 10);
  bool any_different = false;
  for (const auto& [key, fold] : a.assignments)
    if (c.assignments.at(key) != fold) any_different = true;
  CHECK(any_different);
}

TEST_CASE("datasets with fewer systems than folds warn and spread best-effort") {
  ingest::Manifest m = synthetic_manifest(3, 2);
  FoldSplit split = make_folds(m, 5, 0);
  CHECK(!split.warnings.empty());
  for (const auto& [key, fold] : split.assignments) CHECK(fold < 5);
  CHECK_THROWS(make_folds(m, 1, 0));
}

TEST_CASE("cosine annealing hits its endpoints and midpoint") {
  CHECK(cosine_lr(0, 100, 1e-3, 1e-7) == doctest::Approx(1e-3).epsilon(1e-12));
  CHECK(cosine_lr(100, 100, 1e-3, 1e-7) == doctest::Approx(1e-7).epsilon(1e-12));
  CHECK(cosine_lr(50, 100, 1e-3, 1e-7) == doctest::Approx((1e-3 + 1e-7) / 2.0).epsilon(1e-12));
  CHECK_THROWS(cosine_lr(0, 0, 1e-3, 1e-7));
}

TEST_CASE("AdamW only updates trainable parameters") {
  Param a("a", Tensor::vec({1.0, 2.0}));
  Param b("b", Tensor::vec({1.0, 2.0}));
  b.trainable = false;
  a.grad = Tensor::vec({0.5, -0.5});
  b.grad = Tensor::vec({0.5, -0.5});
  AdamW opt(1e-4);
  opt.step({&a, &b}, 1e-2);
  CHECK(a.value.data != std::vector<double>{1.0, 2.0});
  CHECK(b.value.data == std::vector<double>{1.0, 2.0});
}

TEST_CASE("stage plans carry the freeze semantics") {
  StagePlanConfig cfg;
  CHECK(make_stage_plan("spec-s1", cfg).frozen_prefixes.empty());
  CHECK(make_stage_plan("ssl-s1-frozen", cfg).frozen_prefixes ==
        std::vector<std::string>{"ssl.backbone."});
  CHECK(make_stage_plan("s2-fusion", cfg).frozen_prefixes ==
        std::vector<std::string>({"spec.", "ssl."}));
  CHECK(make_stage_plan("s3-finetune", cfg).frozen_prefixes.empty());
}

TEST_CASE("frozen extractors stay bit-identical through a fusion stage") {
  TinySetup s = make_setup();
  fusion::ModelSpec ms = s.cfg.model;
  fusion::Predictor model(ms, s.cfg.audio, s.cache.vocabulary);

  std::uint64_t spec_before = model.params().checksum("spec.");
  std::uint64_t ssl_before = model.params().checksum("ssl.");
  std::uint64_t head_before = model.params().checksum("head.");

  StagePlan plan = make_stage_plan("s2-fusion", {1e-3, 1e-5, 2, 8});
  run_stage(model, plan, full_data(s), s.cfg.loss, 1e-4, 7);

  CHECK(model.params().checksum("spec.") == spec_before);
  CHECK(model.params().checksum("ssl.") == ssl_before);
  CHECK(model.params().checksum("head.") != head_before);
  fs::remove_all(s.dir);
}

TEST_CASE("the frozen SSL substage keeps the backbone and moves the head") {
  TinySetup s = make_setup();
  fusion::ModelSpec ms = s.cfg.model;
  ms.spec_branch = false;
  fusion::Predictor model(ms, s.cfg.audio, s.cache.vocabulary);

  std::uint64_t backbone_before = model.params().checksum("ssl.backbone.");
  std::uint64_t head_before = model.params().checksum("head.");
  StagePlan plan = make_stage_plan("ssl-s1-frozen", {1e-3, 1e-5, 1, 8});
  run_stage(model, plan, full_data(s), s.cfg.loss, 1e-4, 3);
  CHECK(model.params().checksum("ssl.backbone.") == backbone_before);
  CHECK(model.params().checksum("head.") != head_before);

  std::uint64_t backbone_frozen = model.params().checksum("ssl.backbone.");
  StagePlan fine = make_stage_plan("ssl-s1-finetune", {1e-4, 1e-6, 1, 8});
  run_stage(model, fine, full_data(s), s.cfg.loss, 1e-4, 4);
  CHECK(model.params().checksum("ssl.backbone.") != backbone_frozen);
  fs::remove_all(s.dir);
}

TEST_CASE("run_stage histories are consistent with their own best epoch") {
  TinySetup s = make_setup();
  fusion::ModelSpec ms = s.cfg.model;
  ms.ssl_branch = false;
  fusion::Predictor model(ms, s.cfg.audio, s.cache.vocabulary);

  StagePlan plan = make_stage_plan("spec-s1", {1e-3, 1e-5, 4, 8});
  TrainHistory hist = run_stage(model, plan, full_data(s), s.cfg.loss, 1e-4, 11);
  REQUIRE(hist.epochs.size() == 4);
  double best = -2.0;
  std::size_t best_epoch = 0;
  for (const EpochRecord& e : hist.epochs) {
    CHECK(std::isfinite(e.train_loss));
    CHECK(e.val_srcc >= -1.0);
    CHECK(e.val_srcc <= 1.0);
    if (e.val_srcc > best) {
      best = e.val_srcc;
      best_epoch = e.epoch;
    }
  }
  CHECK(hist.best_epoch == best_epoch);
  CHECK(hist.best_srcc == doctest::Approx(best));
  fs::remove_all(s.dir);
}

TEST_CASE("reruns with identical seeds reproduce the first-epoch loss exactly") {
  TinySetup s = make_setup();
  auto run_once = [&]() {
    fusion::ModelSpec ms = s.cfg.model;
    ms.ssl_branch = false;
    fusion::Predictor model(ms, s.cfg.audio, s.cache.vocabulary);
    StagePlan plan = make_stage_plan("spec-s1", {1e-3, 1e-5, 1, 8});
    return run_stage(model, plan, full_data(s), s.cfg.loss, 1e-4, 21).epochs[0].train_loss;
  };
  CHECK(run_once() == run_once());
  fs::remove_all(s.dir);
}

TEST_CASE("train_full emits one checkpoint per fold and a selection report") {
  TinySetup s = make_setup();
  RunConfig cfg = s.cfg;
  cfg.train.folds = 3;
  // Shorten everything below the fixture defaults.
  for (auto& [name, plan] : cfg.train.stages) {
    plan.epochs = 1;
    plan.batch_size = 8;
  }
  fs::path out = s.dir / "train_out";
  TrainOutcome outcome = train_full(s.manifest, cfg, out.string(), "full");

  REQUIRE(outcome.fold_results.size() == 3);
  for (std::size_t f = 0; f < 3; ++f) {
    CHECK(fs::exists(outcome.fold_results[f].checkpoint_path));
    CHECK(fs::exists(out / "history" / ("fold_" + std::to_string(f) + ".jsonl")));
    // full arm: spec-s1, ssl-s1-frozen, ssl-s1-finetune, s2, s3
    CHECK(outcome.fold_results[f].history.size() == 5);
  }
  CHECK(outcome.selection_report.contains("mean_best_val_srcc_final_stage"));

  checkpoint::Loaded loaded = checkpoint::load(outcome.fold_results[0].checkpoint_path);
  CHECK(loaded.model->feature_dim() ==
        loaded.model->spec_dim() + loaded.model->ssl_dim() + 1);
  fs::remove_all(s.dir);
}

TEST_CASE("ablation arms shape the stage list") {
  CHECK(stages_for_arm("full", true, true) ==
        std::vector<std::string>({"spec-s1", "ssl-s1-frozen", "ssl-s1-finetune", "s2-fusion",
                                  "s3-finetune"}));
  CHECK(stages_for_arm("no-ssl", true, false) == std::vector<std::string>({"spec-s1"}));
  CHECK(stages_for_arm("no-spec", false, true) ==
        std::vector<std::string>({"ssl-s1-frozen", "ssl-s1-finetune"}));
  CHECK(stages_for_arm("no-stage2", true, true) ==
        std::vector<std::string>({"spec-s1", "ssl-s1-frozen", "ssl-s1-finetune",
                                  "no-stage2-finetune"}));
  CHECK(stages_for_arm("only-stage3", true, true) == std::vector<std::string>({"only-stage3"}));
  CHECK_THROWS(stages_for_arm("mystery", true, true));
}

TEST_CASE("the no-stage2 arm runs both branch stages and the direct fine-tune") {
  TinySetup s = make_setup(4, 3);
  RunConfig cfg = s.cfg;
  cfg.train.folds = 2;
  for (auto& [name, plan] : cfg.train.stages) plan.epochs = 1;
  fs::path out = s.dir / "no_stage2";
  TrainOutcome outcome = train_full(s.manifest, cfg, out.string(), "no-stage2");
  REQUIRE(outcome.fold_results.size() == 2);
  std::vector<std::string> stages;
  for (const TrainHistory& h : outcome.fold_results[0].history) stages.push_back(h.stage);
  CHECK(stages == std::vector<std::string>({"spec-s1", "ssl-s1-frozen", "ssl-s1-finetune",
                                            "no-stage2-finetune"}));
  CHECK(outcome.selection_report["arm"] == "no-stage2");
  fs::remove_all(s.dir);
}

TEST_CASE("the only-stage3 arm trains one joint model from scratch") {
  TinySetup s = make_setup(4, 3);
  RunConfig cfg = s.cfg;
  cfg.train.folds = 2;
  for (auto& [name, plan] : cfg.train.stages) plan.epochs = 1;
  fs::path out = s.dir / "only_s3";
  TrainOutcome outcome = train_full(s.manifest, cfg, out.string(), "only-stage3");
  REQUIRE(outcome.fold_results.size() == 2);
  REQUIRE(outcome.fold_results[0].history.size() == 1);
  CHECK(outcome.fold_results[0].history[0].stage == "only-stage3");
  checkpoint::Loaded loaded = checkpoint::load(outcome.fold_results[0].checkpoint_path);
  CHECK(loaded.model->model_spec().spec_branch);
  CHECK(loaded.model->model_spec().ssl_branch);
  fs::remove_all(s.dir);
}

TEST_CASE("stage defaults carry the reference schedule") {
  const auto& plans = default_stage_plans();
  CHECK(plans.at("spec-s1").lr_start == 1e-3);
  CHECK(plans.at("spec-s1").lr_end == 1e-7);
  CHECK(plans.at("spec-s1").epochs == 20);
  CHECK(plans.at("spec-s1").batch_size == 10);
  CHECK(plans.at("ssl-s1-frozen").batch_size == 32);
  CHECK(plans.at("ssl-s1-frozen").epochs == 20);
  CHECK(plans.at("ssl-s1-finetune").lr_start == 3e-5);
  CHECK(plans.at("ssl-s1-finetune").lr_end == 1e-9);
  CHECK(plans.at("ssl-s1-finetune").epochs == 5);
  CHECK(plans.at("s2-fusion").lr_start == 1e-3);
  CHECK(plans.at("s2-fusion").lr_end == 1e-5);
  CHECK(plans.at("s2-fusion").epochs == 8);
  CHECK(plans.at("s2-fusion").batch_size == 16);
  CHECK(plans.at("s3-finetune").lr_start == 5e-5);
  CHECK(plans.at("s3-finetune").lr_end == 1e-8);
  CHECK(plans.at("s3-finetune").epochs == 2);
  CHECK(plans.at("s3-finetune").batch_size == 8);
  CHECK(plans.at("no-stage2-finetune").lr_start == 1e-4);
  CHECK(plans.at("only-stage3").epochs == 20);
}

TEST_CASE("a non-finite loss aborts with the offending batch ids") {
  TinySetup s = make_setup(2, 3);
  fusion::ModelSpec ms = s.cfg.model;
  ms.ssl_branch = false;
  fusion::Predictor model(ms, s.cfg.audio, s.cache.vocabulary);
  // Blow up the head so the squared error overflows to inf.
  for (double& v : model.head_weight()->value.data) v = 1e200;
  model.head_bias()->value.data[0] = 1e200;

  StagePlan plan = make_stage_plan("spec-s1", {1e-3, 1e-5, 1, 6});
  CHECK_THROWS_WITH_AS(run_stage(model, plan, full_data(s), s.cfg.loss, 1e-4, 5),
                       doctest::Contains("not finite"), std::runtime_error);
  fs::remove_all(s.dir);
}

TEST_CASE("the finetune arm continues from existing fold checkpoints") {
  TinySetup s = make_setup(4, 3);
  RunConfig cfg = s.cfg;
  cfg.train.folds = 2;
  for (auto& [name, plan] : cfg.train.stages) plan.epochs = 1;
  fs::path first = s.dir / "first";
  TrainOutcome base = train_full(s.manifest, cfg, first.string(), "no-ssl");

  RunConfig cont = cfg;
  cont.train.init_checkpoints = (first / "checkpoints").string();
  fs::path second = s.dir / "second";
  TrainOutcome tuned = train_full(s.manifest, cont, second.string(), "finetune");
  REQUIRE(tuned.fold_results.size() == 2);
  for (const FoldResult& fr : tuned.fold_results) {
    REQUIRE(fr.history.size() == 1);
    CHECK(fr.history[0].stage == "s3-finetune");
    checkpoint::Loaded loaded = checkpoint::load(fr.checkpoint_path);
    CHECK(loaded.model->model_spec().ssl_branch == false);  // architecture carried over
  }
  fs::remove_all(s.dir);
}

TEST_CASE("checkpoints round-trip through save and load") {
  TinySetup s = make_setup(2, 2);
  fusion::Predictor model(s.cfg.model, s.cfg.audio, s.cache.vocabulary);
  fs::path ckpt = s.dir / "model.ckpt.json";
  checkpoint::save(ckpt.string(), model, s.cfg.snapshot);

  checkpoint::Loaded loaded = checkpoint::load(ckpt.string());
  CHECK(loaded.model->params().checksum() == model.params().checksum());
  CHECK(loaded.config_snapshot == s.cfg.snapshot);
  fs::remove_all(s.dir);
}
