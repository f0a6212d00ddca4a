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

#include <functional>

#include "mosfuse/autodiff.hpp"
#include "mosfuse/nn.hpp"

using namespace mosfuse;

namespace {

// Checks the tape gradient of a scalar graph against central differences for
// every element of every parameter.
void check_gradients(std::vector<Param>& params,
                     const std::function<int(Tape&, std::vector<Param>&)>& build,
                     double tol = 1e-6, double h = 1e-5) {
  Tape tape;
  int loss = build(tape, params);
  for (Param& p : params) p.zero_grad();
  tape.backward(loss);

  std::vector<Tensor> grads;
  for (Param& p : params) grads.push_back(p.grad);

  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    for (std::size_t i = 0; i < params[pi].value.numel(); ++i) {
      double saved = params[pi].value.data[i];
      auto eval = [&](double x) {
        params[pi].value.data[i] = x;
        Tape t2;
        return t2.value(build(t2, params)).data[0];
      };
      double num = (eval(saved + h) - eval(saved - h)) / (2.0 * h);
      params[pi].value.data[i] = saved;
      double ana = grads[pi].data[i];
      double scale = std::max({1.0, std::fabs(num), std::fabs(ana)});
      CHECK(std::fabs(num - ana) / scale < tol);
    }
  }
}

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double sd = 0.7) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = rng.normal(0.0, sd);
  return t;
}

}  // namespace

TEST_CASE("elementwise, linear and reduction ops pass finite-difference checks") {
  Rng rng(11);
  std::vector<Param> ps;
  ps.emplace_back("a", random_tensor({3, 4}, rng));
  ps.emplace_back("b", random_tensor({3, 4}, rng));
  ps.emplace_back("v", random_tensor({4}, rng));

  check_gradients(ps, [](Tape& t, std::vector<Param>& p) {
    int a = t.param(&p[0]);
    int b = t.param(&p[1]);
    int v = t.param(&p[2]);
    int x = t.add(a, b);
    x = t.lincomb(0.3, x, -0.6, b);
    x = t.scale(x, 1.7);
    x = t.add_rowvec(x, v);
    x = t.tanh_op(x);
    return t.mean_square(x);
  });
}

TEST_CASE("matmul family passes finite-difference checks") {
  Rng rng(12);
  std::vector<Param> ps;
  ps.emplace_back("A", random_tensor({3, 4}, rng));
  ps.emplace_back("B", random_tensor({4, 2}, rng));
  ps.emplace_back("C", random_tensor({3, 2}, rng));

  check_gradients(ps, [](Tape& t, std::vector<Param>& p) {
    int ab = t.matmul(t.param(&p[0]), t.param(&p[1]));       // [3,2]
    int tn = t.matmul_tn(t.param(&p[2]), ab);                // [2,2]
    int tr = t.transpose2d(tn);
    return t.mean_square(t.reshape(tr, {4}));
  });
}

TEST_CASE("softmax, relu and attention pooling pass finite-difference checks") {
  Rng rng(13);
  std::vector<Param> ps;
  ps.emplace_back("seq", random_tensor({5, 3}, rng));
  ps.emplace_back("q", random_tensor({3}, rng));

  check_gradients(ps, [](Tape& t, std::vector<Param>& p) {
    int pooled = nn::attention_pool(t, t.param(&p[0]), t.param(&p[1]));
    int r = t.relu(pooled);
    return t.mean_square(r);
  });
}

TEST_CASE("conv2d passes finite-difference checks") {
  Rng rng(14);
  std::vector<Param> ps;
  ps.emplace_back("x", random_tensor({2, 6, 6}, rng));
  ps.emplace_back("w", random_tensor({3, 2, 3, 3}, rng, 0.4));
  ps.emplace_back("b", random_tensor({3}, rng, 0.2));

  check_gradients(
      ps,
      [](Tape& t, std::vector<Param>& p) {
        int y = t.conv2d(t.param(&p[0]), t.param(&p[1]), t.param(&p[2]), 2, 1);
        return t.mean_square(t.tanh_op(y));
      },
      1e-5);
}

TEST_CASE("reductions, concat and stacking pass finite-difference checks") {
  Rng rng(15);
  std::vector<Param> ps;
  ps.emplace_back("m1", random_tensor({2, 3, 2}, rng));
  ps.emplace_back("m2", random_tensor({2, 3, 4}, rng));
  ps.emplace_back("vec", random_tensor({5}, rng));

  check_gradients(ps, [](Tape& t, std::vector<Param>& p) {
    int cat = t.concat_axis2({t.param(&p[0]), t.param(&p[1])});  // [2,3,6]
    int mean2 = t.reduce_mean_axis2(cat);                        // [2,3]
    int max2 = t.reduce_max_axis2(cat);                          // [2,3]
    int r1 = t.reduce_max_axis1(mean2);                          // [2]
    int r0 = t.reduce_max_axis0(max2);                           // [3]
    int v = t.concat_vec({r1, r0, t.param(&p[2])});              // [10]
    int stacked = t.stack_rows({v, t.scale(v, 0.5)});            // [2,10]
    return t.mean_square(stacked);
  });
}

TEST_CASE("weighted sums, embeddings, crops and smoothing pass finite-difference checks") {
  Rng rng(16);
  std::vector<Param> ps;
  ps.emplace_back("items", random_tensor({4, 3}, rng));
  ps.emplace_back("w", random_tensor({2}, rng));
  ps.emplace_back("table", random_tensor({3, 2}, rng));

  check_gradients(ps, [](Tape& t, std::vector<Param>& p) {
    int x = t.param(&p[0]);
    int sm = t.neighbor_mean3(x);                       // [4,3]
    int cropped = t.crop_rows_center(sm, 2);            // [2,3]
    int w0 = t.mul_scalar_elem(cropped, t.param(&p[1]), 0);
    int w1 = t.mul_scalar_elem(cropped, t.param(&p[1]), 1);
    int agg = t.add(w0, w1);
    int emb = t.embedding_row(&p[2], 1);                // [2]
    int all = t.concat_vec({t.reshape(agg, {6}), emb});
    return t.mean_square(all);
  });
}

TEST_CASE("contrastive and mse nodes pass finite-difference checks away from kinks") {
  std::vector<Param> ps;
  ps.emplace_back("preds", Tensor::vec({1.0, 3.05, 2.6, 4.4}));
  Tensor targets = Tensor::vec({1.0, 3.0, 3.0, 4.0});

  check_gradients(
      ps,
      [&targets](Tape& t, std::vector<Param>& p) {
        int preds = t.param(&p[0]);
        int con = t.contrastive(preds, targets, 0.2, true);
        int mse = t.mean_square(t.sub_const(preds, targets));
        return t.lincomb(0.2, con, 0.7, mse);
      },
      1e-6, 1e-7);
}

TEST_CASE("gradients accumulate across shared subgraphs") {
  std::vector<Param> ps;
  ps.emplace_back("x", Tensor::vec({2.0}));
  Tape t;
  int x = t.param(&ps[0]);
  int y = t.add(x, x);  // 2x
  int loss = t.mean_square(y);  // 4x^2
  ps[0].zero_grad();
  t.backward(loss);
  CHECK(ps[0].grad.data[0] == doctest::Approx(8.0 * 2.0).epsilon(1e-12));
}

TEST_CASE("backward rejects non-scalar losses") {
  Tape t;
  int c = t.constant(Tensor::vec({1.0, 2.0}));
  CHECK_THROWS(t.backward(c));
}
