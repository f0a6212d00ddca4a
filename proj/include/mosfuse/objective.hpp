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

#ifndef MOSFUSE_OBJECTIVE_HPP_
#define MOSFUSE_OBJECTIVE_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "mosfuse/autodiff.hpp"

namespace mosfuse::objective {

struct LossConfig {
  double alpha = 0.2;        // contrastive margin
  double lambda_con = 0.2;
  double lambda_mse = 0.7;
  double mixup_alpha = 0.4;  // Beta parameter; <= 0 disables mixing
  bool ordered_pairs = true; // sum over ordered pairs i != j (unordered halves it)

  void validate() const {
    MOSFUSE_CHECK(alpha > 0.0, "LossConfig: alpha must be > 0");
    MOSFUSE_CHECK(lambda_con >= 0.0 && lambda_mse >= 0.0, "LossConfig: negative loss weight");
    MOSFUSE_CHECK(mixup_alpha >= 0.0, "LossConfig: mixup_alpha must be >= 0");
  }
};

/// Pairwise margin loss: sum over pairs of max(0, |(s_i-s_j)-(p_i-p_j)| - alpha).
double contrastive_loss(std::span<const double> targets, std::span<const double> preds,
                        double alpha, bool ordered_pairs = true);

double mse_loss(std::span<const double> targets, std::span<const double> preds);

double combined_loss(std::span<const double> targets, std::span<const double> preds,
                     const LossConfig& cfg);

/// Graph version used in training: lambda_con * contrastive + lambda_mse * mse
/// of the prediction node against constant targets.
int combined_loss_node(Tape& t, int preds, const Tensor& targets, const LossConfig& cfg);

/// Mixup pairing plan for one batch: item i is blended with item partner[i]
/// using weight lam[i] (lam = 1 keeps item i unchanged).
struct MixupPlan {
  std::vector<std::size_t> partner;
  std::vector<double> lam;
};

/// Draws a seeded permutation pairing and per-pair Beta(alpha, alpha)
/// weights. With mixup_alpha <= 0 every lam is 1 (mixing disabled).
MixupPlan make_mixup_plan(std::size_t batch, double mixup_alpha, std::uint64_t seed);

std::vector<double> mix_targets(const MixupPlan& plan, std::span<const double> targets);

}  // namespace mosfuse::objective

#endif  // MOSFUSE_OBJECTIVE_HPP_
