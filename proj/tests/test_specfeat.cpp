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

#include "mosfuse/specfeat.hpp"
#include "support/oracles.hpp"

using namespace mosfuse;
using namespace mosfuse::specfeat;

namespace {

audio::MelImage make_image(std::size_t f, std::size_t window, Rng& rng) {
  audio::MelImage img;
  img.pixels = Tensor({f, f});
  for (double& v : img.pixels.data) v = rng.uniform();
  img.window_size = window;
  return img;
}

std::vector<audio::MelImage> images_for(const SpecExtractor&, const std::vector<std::size_t>& windows,
                                        std::size_t f, Rng& rng) {
  std::vector<audio::MelImage> out;
  for (std::size_t w : windows) out.push_back(make_image(f, w, rng));
  return out;
}

}  // namespace

TEST_CASE("encode_windows emits one map per window with the encoder's shape") {
  std::vector<std::size_t> windows = {128, 256, 512, 1024};
  SpecOptions opt;
  opt.mid_channels = 4;
  opt.out_channels = 8;
  SpecExtractor ext(windows, opt);
  Rng rng(1);
  auto images = images_for(ext, windows, 16, rng);

  Tape t;
  std::vector<int> maps = ext.encode_windows(t, images);
  REQUIRE(maps.size() == 4);
  for (int m : maps) CHECK(t.value(m).shape == std::vector<std::size_t>{8, 4, 4});
}

TEST_CASE("identical images and weights produce identical maps across tapes") {
  std::vector<std::size_t> windows = {128, 256};
  SpecExtractor ext(windows, {});
  Rng rng(2);
  auto images = images_for(ext, windows, 16, rng);

  Tape t1, t2;
  auto m1 = ext.encode_windows(t1, images);
  auto m2 = ext.encode_windows(t2, images);
  for (std::size_t n = 0; n < m1.size(); ++n)
    CHECK(t1.value(m1[n]).data == t2.value(m2[n]).data);
}

TEST_CASE("perturbing one window's image changes only that window's map") {
  std::vector<std::size_t> windows = {128, 256, 512};
  SpecExtractor ext(windows, {});
  Rng rng(3);
  auto images = images_for(ext, windows, 16, rng);
  auto perturbed = images;
  perturbed[1].pixels.data[7] += 0.25;

  Tape t1, t2;
  auto a = ext.encode_windows(t1, images);
  auto b = ext.encode_windows(t2, perturbed);
  CHECK(t1.value(a[0]).data == t2.value(b[0]).data);
  CHECK(t1.value(a[1]).data != t2.value(b[1]).data);
  CHECK(t1.value(a[2]).data == t2.value(b[2]).data);
}

TEST_CASE("window/encoder mismatches are rejected") {
  SpecExtractor ext({128, 256}, {});
  Rng rng(4);
  std::vector<audio::MelImage> wrong = {make_image(16, 256, rng), make_image(16, 128, rng)};
  Tape t;
  CHECK_THROWS(ext.encode_windows(t, wrong));
}

TEST_CASE("one-hot window weights reduce aggregation to exact selection") {
  SpecExtractor ext({128, 256, 512}, {});
  Rng rng(5);
  auto images = images_for(ext, {128, 256, 512}, 16, rng);
  ext.window_weights()->value = Tensor::vec({0.0, 0.0, 1.0});

  Tape t;
  auto maps = ext.encode_windows(t, images);
  int agg = ext.aggregate_windows(t, maps);
  const Tensor& want = t.value(maps[2]);
  const Tensor& got = t.value(agg);
  for (std::size_t i = 0; i < got.numel(); ++i)
    CHECK(got.data[i] == doctest::Approx(want.data[i]).epsilon(1e-7));
}

TEST_CASE("uniform weights over identical maps reproduce the map") {
  SpecExtractor ext({128, 128}, {});  // same window twice, same seed per index differs
  Rng rng(6);
  audio::MelImage img = make_image(16, 128, rng);

  Tape t;
  // Hand-built identical maps via constants to isolate the weighted sum.
  Tensor map({4, 2, 2});
  for (double& v : map.data) v = rng.uniform();
  int m1 = t.constant(map);
  int m2 = t.constant(map);
  int agg = nn::weighted_sum(t, {m1, m2}, t.param(ext.window_weights()));
  for (std::size_t i = 0; i < map.numel(); ++i)
    CHECK(t.value(agg).data[i] == doctest::Approx(map.data[i]).epsilon(1e-12));
}

TEST_CASE("weights (0.3, 0.7) over constant maps 1 and 2 give 1.7") {
  SpecExtractor ext({128, 256}, {});
  ext.window_weights()->value = Tensor::vec({0.3, 0.7});
  Tape t;
  int m1 = t.constant(Tensor({2, 2, 2}, 1.0));
  int m2 = t.constant(Tensor({2, 2, 2}, 2.0));
  int agg = ext.aggregate_windows(t, {m1, m2});
  for (double v : t.value(agg).data) CHECK(v == doctest::Approx(1.7).epsilon(1e-12));
}

TEST_CASE("pooling a constant map yields the constant in every slice") {
  SpecOptions opt;
  opt.out_channels = 3;
  SpecExtractor ext({128}, opt);
  Tape t;
  int m = t.constant(Tensor({3, 4, 5}, 3.0));
  int h = ext.concat_and_pool(t, {m});
  REQUIRE(t.value(h).numel() == ext.feature_dim());
  // Attention over a constant sequence is a convex combination of equal
  // rows, so every pooled slice equals the constant.
  for (double v : t.value(h).data) CHECK(v == doctest::Approx(3.0).epsilon(1e-9));
}

TEST_CASE("swapping frame order leaves the max-over-time reduction unchanged") {
  SpecOptions opt;
  opt.out_channels = 2;
  SpecExtractor ext({128}, opt);
  Rng rng(7);
  Tensor a({2, 3, 4}), b({2, 3, 4});
  for (double& v : a.data) v = rng.uniform();
  for (double& v : b.data) v = rng.uniform();

  Tape t1, t2;
  int h1 = ext.concat_and_pool(t1, {t1.constant(a), t1.constant(b)});
  int h2 = ext.concat_and_pool(t2, {t2.constant(b), t2.constant(a)});
  // Slices: [att(mean), max(mean), att(max), max(max)], each of length c.
  std::size_t c = ext.map_channels();
  for (std::size_t i = 2 * c; i < 4 * c; ++i)
    CHECK(t1.value(h1).data[i] == doctest::Approx(t2.value(h2).data[i]).epsilon(1e-12));
  // Mean over time is also frame-order invariant; attention over the pooled
  // 2-D maps therefore matches as well.
  for (std::size_t i = 0; i < 2 * c; ++i)
    CHECK(t1.value(h1).data[i] == doctest::Approx(t2.value(h2).data[i]).epsilon(1e-12));
}

TEST_CASE("hand-set 2x2x2 map matches direct mean/max/attention computation") {
  SpecOptions opt;
  opt.out_channels = 2;
  SpecExtractor ext({128}, opt);
  Tensor m({2, 2, 2});
  m.data = {1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0};
  // channel 0: f0 = (1,2), f1 = (3,4); channel 1: f0 = (5,6), f1 = (7,8)

  Tape t;
  int h = ext.concat_and_pool(t, {t.constant(m)});
  const Tensor& out = t.value(h);
  REQUIRE(out.numel() == 8);

  // time-mean map: [[1.5, 3.5], [5.5, 7.5]]; time-max map: [[2, 4], [6, 8]]
  std::vector<std::vector<double>> mean_fc = {{1.5, 5.5}, {3.5, 7.5}};  // [f][c]
  std::vector<std::vector<double>> max_fc = {{2.0, 6.0}, {4.0, 8.0}};
  const Tensor& query = ext.freq_query()->value;
  std::vector<double> att_mean = oracles::attention_pool_brute(mean_fc, query.data);
  std::vector<double> att_max = oracles::attention_pool_brute(max_fc, query.data);

  CHECK(out.data[0] == doctest::Approx(att_mean[0]).epsilon(1e-9));
  CHECK(out.data[1] == doctest::Approx(att_mean[1]).epsilon(1e-9));
  CHECK(out.data[2] == doctest::Approx(3.5).epsilon(1e-12));  // max over f of time-mean, ch 0
  CHECK(out.data[3] == doctest::Approx(7.5).epsilon(1e-12));
  CHECK(out.data[4] == doctest::Approx(att_max[0]).epsilon(1e-9));
  CHECK(out.data[5] == doctest::Approx(att_max[1]).epsilon(1e-9));
  CHECK(out.data[6] == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(out.data[7] == doctest::Approx(8.0).epsilon(1e-12));
}

TEST_CASE("window weights are initialized to sum to one") {
  for (std::size_t n : {1u, 2u, 3u, 4u, 7u}) {
    std::vector<std::size_t> windows;
    for (std::size_t i = 0; i < n; ++i) windows.push_back(128u << (i % 3));
    SpecExtractor ext(windows, {});
    double sum = 0.0;
    for (double v : ext.window_weights()->value.data) sum += v;
    CHECK(std::fabs(sum - 1.0) <= 1e-6);
  }
}

TEST_CASE("d_spec is four times the encoder channel count") {
  SpecOptions opt;
  opt.out_channels = 12;
  SpecExtractor ext({128, 256}, opt);
  CHECK(ext.feature_dim() == 48);
}

TEST_CASE("finite differences validate the gradient of h_spec w.r.t. w_spec") {
  std::vector<std::size_t> windows = {128, 256};
  SpecExtractor ext(windows, {});
  Rng rng(8);
  auto images = images_for(ext, windows, 8, rng);
  std::vector<double> probe(ext.feature_dim());
  for (double& v : probe) v = rng.normal();

  auto value_of = [&]() {
    Tape t;
    int h = ext.forward(t, {images});
    double acc = 0.0;
    for (std::size_t i = 0; i < probe.size(); ++i) acc += probe[i] * t.value(h).data[i];
    return acc;
  };

  Tape t;
  int h = ext.forward(t, {images});
  int loss = t.mean_square(t.sub_const(
      h, [&] {
        Tensor target({probe.size()});
        const Tensor& hv = t.value(h);
        for (std::size_t i = 0; i < probe.size(); ++i)
          target.data[i] = hv.data[i] - probe[i];  // makes d(loss)/dh = 2/n * probe
        return target;
      }()));
  for (Param* p : [&] {
         std::vector<Param*> ps;
         ext.collect_params(&ps);
         return ps;
       }())
    p->zero_grad();
  t.backward(loss);

  Param* w = ext.window_weights();
  const double n = static_cast<double>(probe.size());
  for (std::size_t i = 0; i < w->value.numel(); ++i) {
    double saved = w->value.data[i];
    double h_step = 1e-6;
    w->value.data[i] = saved + h_step;
    double up = value_of();
    w->value.data[i] = saved - h_step;
    double down = value_of();
    w->value.data[i] = saved;
    double numeric = (up - down) / (2.0 * h_step);  // d(probe . h)/dw
    double analytic = w->grad.data[i] * n / 2.0;     // undo the mean-square scaling
    double scale = std::max({1.0, std::fabs(numeric), std::fabs(analytic)});
    CHECK(std::fabs(numeric - analytic) / scale <= 1e-3);
  }
}
