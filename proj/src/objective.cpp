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

#include "mosfuse/objective.hpp"

#include "mosfuse/kernels.hpp"

namespace mosfuse::objective {

double contrastive_loss(std::span<const double> targets, std::span<const double> preds,
                        double alpha, bool ordered_pairs) {
  MOSFUSE_CHECK(targets.size() == preds.size(), "contrastive_loss: length mismatch");
  MOSFUSE_CHECK(!targets.empty(), "contrastive_loss: empty input");
  return kernels::contrastive_hinge(targets.data(), preds.data(), targets.size(), alpha,
                                    ordered_pairs);
}

double mse_loss(std::span<const double> targets, std::span<const double> preds) {
  MOSFUSE_CHECK(targets.size() == preds.size(), "mse_loss: length mismatch");
  MOSFUSE_CHECK(!targets.empty(), "mse_loss: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    double d = targets[i] - preds[i];
    acc += d * d;
  }
  return acc / static_cast<double>(targets.size());
}

double combined_loss(std::span<const double> targets, std::span<const double> preds,
                     const LossConfig& cfg) {
  cfg.validate();
  return cfg.lambda_con * contrastive_loss(targets, preds, cfg.alpha, cfg.ordered_pairs) +
         cfg.lambda_mse * mse_loss(targets, preds);
}

int combined_loss_node(Tape& t, int preds, const Tensor& targets, const LossConfig& cfg) {
  cfg.validate();
  int con = t.contrastive(preds, targets, cfg.alpha, cfg.ordered_pairs);
  int mse = t.mean_square(t.sub_const(preds, targets));
  return t.lincomb(cfg.lambda_con, con, cfg.lambda_mse, mse);
}

MixupPlan make_mixup_plan(std::size_t batch, double mixup_alpha, std::uint64_t seed) {
  MOSFUSE_CHECK(batch >= 2, "mixup: batch size must be >= 2");
  MixupPlan plan;
  Rng rng(seed);
  plan.partner = rng.permutation(batch);
  plan.lam.resize(batch);
  for (std::size_t i = 0; i < batch; ++i)
    plan.lam[i] = mixup_alpha > 0.0 ? rng.beta(mixup_alpha, mixup_alpha) : 1.0;
  return plan;
}

std::vector<double> mix_targets(const MixupPlan& plan, std::span<const double> targets) {
  MOSFUSE_CHECK(plan.partner.size() == targets.size(), "mix_targets: size mismatch");
  std::vector<double> out(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i)
    out[i] = plan.lam[i] * targets[i] + (1.0 - plan.lam[i]) * targets[plan.partner[i]];
  return out;
}

}  // namespace mosfuse::objective
