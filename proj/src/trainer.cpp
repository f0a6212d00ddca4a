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

#include "mosfuse/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include "mosfuse/checkpoint.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mosfuse::trainer {

FoldSplit make_folds(const ingest::Manifest& manifest, std::size_t k, std::uint64_t seed) {
  MOSFUSE_CHECK(k >= 2, "make_folds: k must be >= 2");
  MOSFUSE_CHECK(!manifest.labels.empty(), "make_folds: empty manifest");

  std::map<std::string, std::set<std::string>> systems_by_dataset;
  for (const ingest::UtteranceLabel& l : manifest.labels)
    systems_by_dataset[l.dataset_id].insert(l.system_id);

  FoldSplit split;
  split.k = k;
  split.seed = seed;
  for (const auto& [dataset, systems] : systems_by_dataset) {
    if (systems.size() < k)
      split.warnings.push_back("dataset " + dataset + " has only " +
                               std::to_string(systems.size()) + " systems for " +
                               std::to_string(k) + " folds; spreading best-effort");
    std::vector<std::string> ordered(systems.begin(), systems.end());
    Rng rng(derive_seed(seed, "folds", dataset));
    std::vector<std::size_t> perm = rng.permutation(ordered.size());
    for (std::size_t i = 0; i < ordered.size(); ++i)
      split.assignments[{dataset, ordered[perm[i]]}] = i % k;
  }
  return split;
}

double cosine_lr(std::size_t step, std::size_t total_steps, double lr_start, double lr_end) {
  MOSFUSE_CHECK(total_steps > 0, "cosine_lr: total_steps must be positive");
  MOSFUSE_CHECK(step <= total_steps, "cosine_lr: step out of range");
  double phase = M_PI * static_cast<double>(step) / static_cast<double>(total_steps);
  return lr_end + 0.5 * (lr_start - lr_end) * (1.0 + std::cos(phase));
}

StagePlan make_stage_plan(const std::string& stage, const StagePlanConfig& cfg) {
  StagePlan plan;
  plan.stage = stage;
  plan.lr_start = cfg.lr_start;
  plan.lr_end = cfg.lr_end;
  plan.epochs = cfg.epochs;
  plan.batch_size = cfg.batch_size;
  if (stage == "ssl-s1-frozen") plan.frozen_prefixes = {"ssl.backbone."};
  if (stage == "s2-fusion") plan.frozen_prefixes = {"spec.", "ssl."};
  return plan;
}

void AdamW::step(const std::vector<Param*>& params, double lr) {
  ++t_;
  double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (Param* p : params) {
    if (!p->trainable) continue;
    auto [it, fresh] = state_.try_emplace(p);
    if (fresh) {
      it->second.m = Tensor(p->value.shape, 0.0);
      it->second.v = Tensor(p->value.shape, 0.0);
    }
    State& s = it->second;
    for (std::size_t i = 0; i < p->value.numel(); ++i) {
      double g = p->grad.data[i];
      s.m.data[i] = b1_ * s.m.data[i] + (1.0 - b1_) * g;
      s.v.data[i] = b2_ * s.v.data[i] + (1.0 - b2_) * g * g;
      double mhat = s.m.data[i] / bc1;
      double vhat = s.v.data[i] / bc2;
      p->value.data[i] -= lr * (mhat / (std::sqrt(vhat) + eps_) + wd_ * p->value.data[i]);
    }
  }
}

DataCache load_data(const ingest::Manifest& manifest, const audio::AudioConfig& acfg) {
  DataCache cache;
  cache.vocabulary = manifest.domain_vocabulary;
  cache.items.resize(manifest.labels.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(manifest.labels.size()); ++i) {
    const ingest::UtteranceLabel& l = manifest.labels[i];
    cache.items[i].label = l;
    cache.items[i].wave = audio::load_audio(l.audio_path, acfg.sample_rate);
  }
  return cache;
}

namespace {

std::vector<std::vector<std::size_t>> make_batches(std::vector<std::size_t> order,
                                                   std::size_t batch_size) {
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    std::size_t end = std::min(i + batch_size, order.size());
    batches.emplace_back(order.begin() + i, order.begin() + end);
  }
  // A singleton tail has no pairs for the contrastive term; merge it back.
  if (batches.size() >= 2 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back()[0]);
    batches.pop_back();
  }
  return batches;
}

std::vector<std::vector<audio::MelImage>> mix_images(
    const std::vector<std::vector<audio::MelImage>>& a,
    const std::vector<std::vector<audio::MelImage>>& b, double lam) {
  std::vector<std::vector<audio::MelImage>> out = a;
  for (std::size_t k = 0; k < out.size(); ++k)
    for (std::size_t n = 0; n < out[k].size(); ++n) {
      Tensor& px = out[k][n].pixels;
      const Tensor& pb = b[k][n].pixels;
      for (std::size_t i = 0; i < px.numel(); ++i)
        px.data[i] = lam * px.data[i] + (1.0 - lam) * pb.data[i];
    }
  return out;
}

double train_step(fusion::Predictor& model, const DataCache& cache,
                  const std::vector<std::size_t>& batch, const objective::LossConfig& loss_cfg,
                  std::uint64_t step_seed, double lr, AdamW& opt) {
  const audio::AudioConfig& acfg = model.audio_config();
  const std::size_t b = batch.size();
  const bool use_spec = model.model_spec().spec_branch;
  const bool use_ssl = model.model_spec().ssl_branch;
  const bool use_domain = model.model_spec().domain_encoding;

  Tape tape;

  // Raw per-item inputs.
  std::vector<std::vector<std::vector<audio::MelImage>>> images(b);
  if (use_spec) {
    for (std::size_t i = 0; i < b; ++i) {
      const TrainItem& item = cache.items[batch[i]];
      audio::FrameSet frames = audio::extract_frames(
          item.wave, acfg.frames_per_utt, acfg.frame_samples,
          derive_seed(step_seed, "frames", item.label.utterance_id));
      images[i] = audio::mel_images(frames, acfg);
    }
  }
  std::vector<int> ssl_agg(b, -1);
  if (use_ssl)
    for (std::size_t i = 0; i < b; ++i)
      ssl_agg[i] = model.ssl_extractor()->forward_sequence(tape, cache.items[batch[i]].wave);
  std::vector<int> domain_emb(b, -1);
  if (use_domain)
    for (std::size_t i = 0; i < b; ++i)
      domain_emb[i] = model.domain()->embed_index(
          tape, model.domain()->index_of(cache.items[batch[i]].label.dataset_id));

  objective::MixupPlan plan =
      objective::make_mixup_plan(b, loss_cfg.mixup_alpha, derive_seed(step_seed, "mixup"));

  // Blend mel images and aggregated SSL sequences pairwise, then pool.
  std::vector<int> features(b);
  for (std::size_t i = 0; i < b; ++i) {
    std::size_t j = plan.partner[i];
    double lam = plan.lam[i];
    int h_spec = -1, h_ssl = -1, h_dom = -1;
    if (use_spec) {
      if (j == i || lam >= 1.0) {
        h_spec = model.spec_extractor()->forward(tape, images[i]);
      } else {
        h_spec = model.spec_extractor()->forward(tape, mix_images(images[i], images[j], lam));
      }
    }
    if (use_ssl) {
      if (j == i || lam >= 1.0) {
        h_ssl = model.ssl_extractor()->pool_sequence(tape, ssl_agg[i]);
      } else {
        std::size_t ti = tape.value(ssl_agg[i]).dim(0);
        std::size_t tj = tape.value(ssl_agg[j]).dim(0);
        std::size_t tmin = std::min(ti, tj);
        int a = ti == tmin ? ssl_agg[i] : tape.crop_rows_center(ssl_agg[i], tmin);
        int c = tj == tmin ? ssl_agg[j] : tape.crop_rows_center(ssl_agg[j], tmin);
        h_ssl = model.ssl_extractor()->pool_sequence(tape, tape.lincomb(lam, a, 1.0 - lam, c));
      }
    }
    if (use_domain) {
      h_dom = (j == i || lam >= 1.0)
                  ? domain_emb[i]
                  : tape.lincomb(lam, domain_emb[i], 1.0 - lam, domain_emb[j]);
    }
    features[i] = model.item_features(tape, h_spec, h_ssl, h_dom);
  }

  std::vector<double> targets(b);
  for (std::size_t i = 0; i < b; ++i) targets[i] = cache.items[batch[i]].label.mos;
  std::vector<double> mixed = objective::mix_targets(plan, targets);

  int preds = model.predict_rows(tape, features);
  int loss = objective::combined_loss_node(tape, preds, Tensor::vec(mixed), loss_cfg);
  double loss_value = tape.scalar(loss);
  if (!std::isfinite(loss_value)) {
    std::string ids;
    for (std::size_t i = 0; i < b; ++i)
      ids += (i ? ", " : "") + cache.items[batch[i]].label.utterance_id;
    MOSFUSE_CHECK(false, "training loss is not finite; offending batch: [" + ids + "]");
  }

  model.params().zero_grads();
  tape.backward(loss);
  opt.step(model.params().all(), lr);
  return loss_value;
}

double validation_srcc(const metrics::Table& preds, const metrics::Table& truths,
                       std::string* level) {
  try {
    metrics::MetricReport r = metrics::system_metrics(preds, truths);
    *level = "system";
    return r.srcc;
  } catch (const std::exception&) {
  }
  try {
    metrics::MetricReport r = metrics::utterance_metrics(preds, truths);
    *level = "utterance";
    return r.srcc;
  } catch (const std::exception&) {
  }
  *level = "none";
  return -1.0;
}

}  // namespace

metrics::Table predict_plain(fusion::Predictor& model, const DataCache& cache,
                             const std::vector<std::size_t>& idx, std::uint64_t seed) {
  const audio::AudioConfig& acfg = model.audio_config();
  metrics::Table rows(idx.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t q = 0; q < static_cast<std::ptrdiff_t>(idx.size()); ++q) {
    const TrainItem& item = cache.items[idx[q]];
    Tape tape;
    int h_spec = -1, h_ssl = -1, h_dom = -1;
    if (model.model_spec().spec_branch) {
      audio::FrameSet frames =
          audio::extract_frames(item.wave, acfg.frames_per_utt, acfg.frame_samples,
                                derive_seed(seed, "val", item.label.utterance_id));
      h_spec = model.spec_extractor()->forward(tape, audio::mel_images(frames, acfg));
    }
    if (model.model_spec().ssl_branch)
      h_ssl = model.ssl_extractor()->forward(tape, item.wave);
    if (model.model_spec().domain_encoding)
      h_dom = model.domain()->embed_index(tape, model.domain()->index_of(item.label.dataset_id));
    int pred = model.predict_rows(tape, {model.item_features(tape, h_spec, h_ssl, h_dom)});
    rows[q] = {item.label.dataset_id, item.label.system_id, item.label.utterance_id,
               tape.value(pred).data[0]};
  }
  return rows;
}

TrainHistory run_stage(fusion::Predictor& model, const StagePlan& plan, const StageData& data,
                       const objective::LossConfig& loss_cfg, double weight_decay,
                       std::uint64_t seed) {
  MOSFUSE_CHECK(data.cache != nullptr, "run_stage: no data");
  MOSFUSE_CHECK(data.train_idx.size() >= 2, "run_stage: need at least 2 training items");
  MOSFUSE_CHECK(!data.val_idx.empty(), "run_stage: empty validation set");
  MOSFUSE_CHECK(plan.epochs >= 1 && plan.batch_size >= 2, "run_stage: bad plan");

  model.params().set_trainable(true);
  for (const std::string& prefix : plan.frozen_prefixes)
    model.params().set_trainable_prefix(prefix, false);

  metrics::Table val_truths;
  for (std::size_t i : data.val_idx) {
    const ingest::UtteranceLabel& l = data.cache->items[i].label;
    val_truths.push_back({l.dataset_id, l.system_id, l.utterance_id, l.mos});
  }

  AdamW opt(weight_decay);
  std::uint64_t stage_seed = derive_seed(seed, "stage", plan.stage);
  std::size_t steps_per_epoch =
      make_batches(data.train_idx, plan.batch_size).size();
  std::size_t total_steps = plan.epochs * steps_per_epoch;

  TrainHistory hist;
  hist.stage = plan.stage;
  std::vector<Tensor> best_values;
  std::size_t step_counter = 0;

  for (std::size_t epoch = 1; epoch <= plan.epochs; ++epoch) {
    std::vector<std::size_t> order = data.train_idx;
    Rng rng(derive_seed(stage_seed, "shuffle", std::to_string(epoch)));
    std::vector<std::size_t> perm = rng.permutation(order.size());
    std::vector<std::size_t> shuffled(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) shuffled[i] = order[perm[i]];

    double loss_sum = 0.0;
    double lr = plan.lr_start;
    std::vector<std::vector<std::size_t>> batches = make_batches(shuffled, plan.batch_size);
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      lr = cosine_lr(step_counter, total_steps, plan.lr_start, plan.lr_end);
      std::uint64_t step_seed =
          derive_seed(stage_seed, "step", std::to_string(epoch) + ":" + std::to_string(bi));
      loss_sum += train_step(model, *data.cache, batches[bi], loss_cfg, step_seed, lr, opt);
      ++step_counter;
    }

    metrics::Table val_preds =
        predict_plain(model, *data.cache, data.val_idx, derive_seed(seed, "val"));
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(batches.size());
    rec.val_srcc = validation_srcc(val_preds, val_truths, &rec.val_level);
    rec.lr = lr;
    hist.epochs.push_back(rec);

    if (rec.val_srcc > hist.best_srcc) {
      hist.best_srcc = rec.val_srcc;
      hist.best_epoch = epoch;
      best_values = model.params().snapshot_values();
    }
  }

  if (!best_values.empty()) model.params().restore_values(best_values);
  return hist;
}

std::vector<std::string> stages_for_arm(const std::string& arm, bool spec_branch,
                                        bool ssl_branch) {
  auto s1 = [&]() {
    std::vector<std::string> v;
    if (spec_branch) v.push_back("spec-s1");
    if (ssl_branch) {
      v.push_back("ssl-s1-frozen");
      v.push_back("ssl-s1-finetune");
    }
    return v;
  };
  if (arm == "full" || arm == "no-ssl" || arm == "no-spec") {
    std::vector<std::string> v = s1();
    if (spec_branch && ssl_branch) {
      v.push_back("s2-fusion");
      v.push_back("s3-finetune");
    }
    return v;
  }
  if (arm == "no-stage2") {
    std::vector<std::string> v = s1();
    v.push_back("no-stage2-finetune");
    return v;
  }
  if (arm == "only-stage3") return {"only-stage3"};
  if (arm == "finetune") return {"s3-finetune"};
  MOSFUSE_CHECK(false, "unknown training arm '" + arm + "'");
  return {};
}

TrainOutcome train_full(const ingest::Manifest& manifest, const RunConfig& cfg,
                        const std::string& out_dir, const std::string& arm) {
  fusion::ModelSpec base_spec = cfg.model;
  if (arm == "no-ssl") base_spec.ssl_branch = false;
  if (arm == "no-spec") base_spec.spec_branch = false;
  const bool use_spec = base_spec.spec_branch;
  const bool use_ssl = base_spec.ssl_branch;
  std::vector<std::string> stages = stages_for_arm(arm, use_spec, use_ssl);
  MOSFUSE_CHECK(!stages.empty(), "train_full: nothing to train for arm '" + arm + "'");

  DataCache cache = load_data(manifest, cfg.audio);
  FoldSplit folds = make_folds(manifest, cfg.train.folds, cfg.train.fold_seed);
  for (const std::string& w : folds.warnings) std::cerr << "[mosfuse] warning: " << w << "\n";

  fs::create_directories(fs::path(out_dir) / "checkpoints");
  fs::create_directories(fs::path(out_dir) / "history");

  TrainOutcome outcome;
  outcome.folds = folds;
  json fold_reports = json::array();

  for (std::size_t f = 0; f < cfg.train.folds; ++f) {
    std::vector<std::size_t> train_idx, val_idx;
    for (std::size_t i = 0; i < cache.items.size(); ++i) {
      const ingest::UtteranceLabel& l = cache.items[i].label;
      std::size_t fold = folds.assignments.at({l.dataset_id, l.system_id});
      (fold == f ? val_idx : train_idx).push_back(i);
    }
    if (val_idx.empty()) {
      std::cerr << "[mosfuse] warning: fold " << f
                << " has no held-out systems; validating on the training set\n";
      val_idx = train_idx;
    }
    if (train_idx.size() < 2) {
      std::cerr << "[mosfuse] warning: fold " << f
                << " has fewer than 2 training items; training on the full set\n";
      train_idx.clear();
      for (std::size_t i = 0; i < cache.items.size(); ++i) train_idx.push_back(i);
    }

    std::uint64_t fold_seed = derive_seed(cfg.seed, "fold", std::to_string(f));
    fusion::ModelSpec ms = base_spec;
    ms.spec.seed = derive_seed(fold_seed, "spec-init");
    ms.ssl.seed = derive_seed(fold_seed, "ssl-init");
    ms.head_seed = derive_seed(fold_seed, "head-init");

    std::shared_ptr<specfeat::SpecExtractor> spec_ext;
    std::shared_ptr<sslfeat::SslExtractor> ssl_ext;
    std::unique_ptr<fusion::Predictor> spec_pred, ssl_pred, fused;

    if (arm == "finetune") {
      MOSFUSE_CHECK(!cfg.train.init_checkpoints.empty(),
                    "arm 'finetune' requires train.init_checkpoints");
      fs::path src = fs::path(cfg.train.init_checkpoints) /
                     ("fold_" + std::to_string(f) + ".ckpt.json");
      fused = checkpoint::load(src.string()).model;
      if (fused->model_spec().domain_encoding)
        for (const std::string& d : manifest.domain_vocabulary)
          fused->domain()->index_of(d);  // every new dataset must be known
    }

    FoldResult result;
    result.fold = f;
    StageData data{&cache, train_idx, val_idx};
    json stage_reports = json::array();

    for (const std::string& stage : stages) {
      StagePlan plan = make_stage_plan(stage, cfg.train.stages.at(stage));
      fusion::Predictor* target = nullptr;
      if (stage == "spec-s1") {
        fusion::ModelSpec m = ms;
        m.ssl_branch = false;
        spec_pred = std::make_unique<fusion::Predictor>(m, cfg.audio, cache.vocabulary);
        spec_ext = spec_pred->shared_spec();
        target = spec_pred.get();
      } else if (stage == "ssl-s1-frozen" || stage == "ssl-s1-finetune") {
        if (!ssl_pred) {
          fusion::ModelSpec m = ms;
          m.spec_branch = false;
          ssl_pred = std::make_unique<fusion::Predictor>(m, cfg.audio, cache.vocabulary);
          ssl_ext = ssl_pred->shared_ssl();
        }
        target = ssl_pred.get();
      } else if (stage == "s2-fusion" || stage == "no-stage2-finetune") {
        fused = std::make_unique<fusion::Predictor>(ms, cfg.audio, cache.vocabulary, spec_ext,
                                                    ssl_ext);
        target = fused.get();
      } else if (stage == "s3-finetune") {
        MOSFUSE_CHECK(fused != nullptr, "s3-finetune requires a model to fine-tune");
        target = fused.get();
      } else if (stage == "only-stage3") {
        fused = std::make_unique<fusion::Predictor>(ms, cfg.audio, cache.vocabulary);
        target = fused.get();
      }
      MOSFUSE_CHECK(target != nullptr, "train_full: no model for stage " + stage);

      TrainHistory hist =
          run_stage(*target, plan, data, cfg.loss, cfg.train.weight_decay, fold_seed);
      json epochs = json::array();
      for (const EpochRecord& e : hist.epochs)
        epochs.push_back({{"epoch", e.epoch},
                          {"train_loss", e.train_loss},
                          {"val_srcc", e.val_srcc},
                          {"val_level", e.val_level},
                          {"lr", e.lr}});
      stage_reports.push_back({{"stage", hist.stage},
                               {"best_epoch", hist.best_epoch},
                               {"best_srcc", hist.best_srcc},
                               {"epochs", epochs}});
      result.history.push_back(std::move(hist));
    }

    fusion::Predictor* final_model =
        fused ? fused.get() : (spec_pred ? spec_pred.get() : ssl_pred.get());
    MOSFUSE_CHECK(final_model != nullptr, "train_full: no final model");

    fs::path ckpt = fs::path(out_dir) / "checkpoints" / ("fold_" + std::to_string(f) + ".ckpt.json");
    checkpoint::save(ckpt.string(), *final_model, cfg.snapshot);
    result.checkpoint_path = ckpt.string();

    std::ofstream hist_out(fs::path(out_dir) / "history" / ("fold_" + std::to_string(f) + ".jsonl"));
    for (const TrainHistory& h : result.history)
      for (const EpochRecord& e : h.epochs)
        hist_out << json({{"stage", h.stage},
                          {"epoch", e.epoch},
                          {"train_loss", e.train_loss},
                          {"val_srcc", e.val_srcc},
                          {"val_level", e.val_level},
                          {"lr", e.lr}})
                        .dump()
                 << "\n";

    fold_reports.push_back({{"fold", f},
                            {"checkpoint", result.checkpoint_path},
                            {"stages", stage_reports}});
    outcome.fold_results.push_back(std::move(result));
  }

  double mean_final = 0.0;
  for (const FoldResult& r : outcome.fold_results)
    mean_final += r.history.back().best_srcc;
  mean_final /= static_cast<double>(outcome.fold_results.size());

  outcome.selection_report = {{"arm", arm},
                              {"config_hash", cfg.snapshot_hash()},
                              {"folds", fold_reports},
                              {"mean_best_val_srcc_final_stage", mean_final}};
  return outcome;
}

}  // namespace mosfuse::trainer
