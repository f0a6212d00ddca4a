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

#include "mosfuse/objective.hpp"
#include "support/oracles.hpp"

using namespace mosfuse;
using namespace mosfuse::objective;

TEST_CASE("perfect predictions give zero loss for any positive margin") {
  std::vector<double> s = {1.0, 2.5, 4.0, 3.3};
  CHECK(contrastive_loss(s, s, 0.2) == 0.0);
  CHECK(contrastive_loss(s, s, 0.01) == 0.0);
  CHECK(mse_loss(s, s) == 0.0);
  CHECK(combined_loss(s, s, {}) == 0.0);
}

TEST_CASE("the margin absorbs pairwise errors smaller than alpha") {
  std::vector<double> s = {1.0, 2.0};
  std::vector<double> p = {1.0, 2.1};
  CHECK(contrastive_loss(s, p, 0.2) == 0.0);
}

TEST_CASE("the hand-computed ordered-pair case yields exactly 6.8") {
  std::vector<double> s = {1.0, 2.0, 4.0};
  std::vector<double> p = {1.0, 3.0, 3.0};
  CHECK(contrastive_loss(s, p, 0.2) == doctest::Approx(6.8).epsilon(1e-12));
  CHECK(mse_loss(s, p) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  LossConfig cfg;
  CHECK(combined_loss(s, p, cfg) == doctest::Approx(1.8266667).epsilon(1e-6));
}

TEST_CASE("a single-element batch has zero contrastive loss") {
  std::vector<double> s = {2.0};
  std::vector<double> p = {4.5};
  CHECK(contrastive_loss(s, p, 0.2) == 0.0);
}

TEST_CASE("scalar-pair mse matches the squared difference") {
  CHECK(mse_loss(std::vector<double>{2.0}, std::vector<double>{4.0}) == doctest::Approx(4.0));
}

TEST_CASE("length mismatches are rejected") {
  std::vector<double> s = {1.0, 2.0};
  std::vector<double> p = {1.0};
  CHECK_THROWS(contrastive_loss(s, p, 0.2));
  CHECK_THROWS(mse_loss(s, p));
}

TEST_CASE("200 random batches match the brute-force enumeration to 1e-9") {
  Rng rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t n = 2 + rng.uniform_index(15);
    std::vector<double> s(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = rng.uniform(1.0, 5.0);
      p[i] = rng.uniform(0.0, 6.0);
    }
    double want = oracles::contrastive_brute(s, p, 0.2);
    CHECK(std::fabs(contrastive_loss(s, p, 0.2) - want) <= 1e-9);
  }
}

TEST_CASE("lambda_con = 0 reduces the combined loss to weighted mse") {
  Rng rng(43);
  std::vector<double> s(6), p(6);
  for (std::size_t i = 0; i < 6; ++i) {
    s[i] = rng.uniform(1.0, 5.0);
    p[i] = rng.uniform(1.0, 5.0);
  }
  LossConfig cfg;
  cfg.lambda_con = 0.0;
  CHECK(combined_loss(s, p, cfg) == doctest::Approx(0.7 * mse_loss(s, p)).epsilon(1e-12));
}

TEST_CASE("contrastive loss is invariant to common permutations and prediction shifts") {
  Rng rng(44);
  std::size_t n = 9;
  std::vector<double> s(n), p(n);
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = rng.uniform(1.0, 5.0);
    p[i] = rng.uniform(1.0, 5.0);
  }
  double base = contrastive_loss(s, p, 0.2);

  for (int trial = 0; trial < 10; ++trial) {
    std::vector<std::size_t> perm = rng.permutation(n);
    std::vector<double> sp(n), pp(n);
    for (std::size_t i = 0; i < n; ++i) {
      sp[i] = s[perm[i]];
      pp[i] = p[perm[i]];
    }
    CHECK(contrastive_loss(sp, pp, 0.2) == doctest::Approx(base).epsilon(1e-12));

    double c = rng.uniform(-3.0, 3.0);
    std::vector<double> shifted = p;
    for (double& v : shifted) v += c;
    CHECK(std::fabs(contrastive_loss(s, shifted, 0.2) - base) <= 1e-9);
  }
}

TEST_CASE("losses are nonnegative on random inputs") {
  Rng rng(45);
  for (int trial = 0; trial < 50; ++trial) {
    std::size_t n = 2 + rng.uniform_index(10);
    std::vector<double> s(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = rng.uniform(1.0, 5.0);
      p[i] = rng.uniform(-2.0, 8.0);
    }
    CHECK(contrastive_loss(s, p, 0.2) >= 0.0);
    CHECK(mse_loss(s, p) >= 0.0);
    CHECK(combined_loss(s, p, {}) >= 0.0);
  }
}

TEST_CASE("unordered pair mode halves the ordered sum") {
  Rng rng(46);
  std::vector<double> s(7), p(7);
  for (std::size_t i = 0; i < 7; ++i) {
    s[i] = rng.uniform(1.0, 5.0);
    p[i] = rng.uniform(1.0, 5.0);
  }
  CHECK(contrastive_loss(s, p, 0.2, false) ==
        doctest::Approx(0.5 * contrastive_loss(s, p, 0.2, true)).epsilon(1e-12));
}

TEST_CASE("the combined loss node gradient matches finite differences away from kinks") {
  // Chosen so no pair difference lands exactly on the margin.
  std::vector<double> s = {1.0, 2.0, 4.0, 3.1};
  Param preds("p", Tensor::vec({1.3, 2.9, 3.4, 3.0}));
  LossConfig cfg;

  Tape t;
  int pn = t.param(&preds);
  int loss = combined_loss_node(t, pn, Tensor::vec(s), cfg);
  preds.zero_grad();
  t.backward(loss);

  for (std::size_t i = 0; i < preds.value.numel(); ++i) {
    double saved = preds.value.data[i];
    auto eval = [&](double x) {
      std::vector<double> p = preds.value.data;
      p[i] = x;
      return combined_loss(s, p, cfg);
    };
    double h = 1e-7;
    double numeric = (eval(saved + h) - eval(saved - h)) / (2.0 * h);
    double analytic = preds.grad.data[i];
    double scale = std::max({1.0, std::fabs(numeric), std::fabs(analytic)});
    CHECK(std::fabs(numeric - analytic) / scale <= 1e-4);
  }
}

TEST_CASE("mixup with alpha <= 0 leaves every item unchanged") {
  MixupPlan plan = make_mixup_plan(6, 0.0, 99);
  for (double l : plan.lam) CHECK(l == 1.0);
  std::vector<double> targets = {1.0, 2.0, 3.0, 4.0, 5.0, 2.5};
  CHECK(mix_targets(plan, targets) == targets);
}

TEST_CASE("a forced midpoint mix of targets 2 and 4 gives 3") {
  MixupPlan plan;
  plan.partner = {1, 0};
  plan.lam = {0.5, 0.5};
  std::vector<double> mixed = mix_targets(plan, std::vector<double>{2.0, 4.0});
  CHECK(mixed[0] == doctest::Approx(3.0));
  CHECK(mixed[1] == doctest::Approx(3.0));
}

TEST_CASE("mixup plans are deterministic in the seed") {
  MixupPlan a = make_mixup_plan(8, 0.4, 7);
  MixupPlan b = make_mixup_plan(8, 0.4, 7);
  CHECK(a.partner == b.partner);
  CHECK(a.lam == b.lam);
  MixupPlan c = make_mixup_plan(8, 0.4, 8);
  CHECK((a.partner != c.partner || a.lam != c.lam));
}

TEST_CASE("mixed targets stay within the bounds of each pair") {
  Rng rng(47);
  for (int trial = 0; trial < 30; ++trial) {
    std::size_t n = 2 + rng.uniform_index(10);
    std::vector<double> targets(n);
    for (double& v : targets) v = rng.uniform(1.0, 5.0);
    MixupPlan plan = make_mixup_plan(n, 0.4, 1000 + trial);
    std::vector<double> mixed = mix_targets(plan, targets);
    for (std::size_t i = 0; i < n; ++i) {
      double lo = std::min(targets[i], targets[plan.partner[i]]);
      double hi = std::max(targets[i], targets[plan.partner[i]]);
      CHECK(mixed[i] >= lo - 1e-12);
      CHECK(mixed[i] <= hi + 1e-12);
      CHECK(plan.lam[i] >= 0.0);
      CHECK(plan.lam[i] <= 1.0);
    }
  }
}

TEST_CASE("mixup rejects single-item batches") {
  CHECK_THROWS(make_mixup_plan(1, 0.4, 1));
}
