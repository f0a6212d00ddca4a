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

// Times the serial reference kernels against the OpenMP ones and reports the
// speedup plus the largest absolute deviation between the two results.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <vector>

#include "mosfuse/kernels.hpp"
#include "mosfuse/tensor.hpp"

using namespace mosfuse;
namespace k = mosfuse::kernels;

namespace {

double time_of(const std::function<void()>& fn, int reps) {
  // One warmup, then the best of reps.
  fn();
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    auto t0 = std::chrono::steady_clock::now();
    fn();
    auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

void report(const char* name, double serial_ms, double par_ms, double diff) {
  std::printf("%-24s serial %9.2f ms   openmp %9.2f ms   speedup %5.2fx   max|diff| %.3g\n",
              name, serial_ms, par_ms, serial_ms / par_ms, diff);
}

}  // namespace

int main() {
  std::printf("threads: %d (openmp %s)\n\n", k::thread_count(),
              k::openmp_compiled() ? "enabled" : "disabled");
  Rng rng(1);

  {
    std::size_t m = 384, kk = 384, n = 384;
    std::vector<double> a(m * kk), b(kk * n), cs(m * n), cp(m * n);
    for (double& v : a) v = rng.normal();
    for (double& v : b) v = rng.normal();
    double ts = time_of([&] { k::serial::gemm(a.data(), b.data(), cs.data(), m, kk, n); }, 3);
    double tp = time_of([&] { k::par::gemm(a.data(), b.data(), cp.data(), m, kk, n); }, 3);
    report("gemm 384^3", ts, tp, max_abs_diff(cs, cp));
  }

  {
    k::Conv2dShape s{16, 128, 128, 32, 3, 3, 2, 1};
    std::vector<double> x(s.in_ch * s.in_h * s.in_w), w(s.out_ch * s.in_ch * s.kh * s.kw),
        bias(s.out_ch);
    for (double& v : x) v = rng.normal();
    for (double& v : w) v = rng.normal();
    for (double& v : bias) v = rng.normal();
    std::vector<double> ys(s.out_ch * s.out_h() * s.out_w()), yp(ys.size());
    double ts = time_of(
        [&] { k::serial::conv2d_forward(s, x.data(), w.data(), bias.data(), ys.data()); }, 3);
    double tp =
        time_of([&] { k::par::conv2d_forward(s, x.data(), w.data(), bias.data(), yp.data()); }, 3);
    report("conv2d 16->32 @128", ts, tp, max_abs_diff(ys, yp));
  }

  {
    std::size_t len = 262144, window = 2048, hop = 512;
    std::size_t frames = (len + hop - 1) / hop, bins = window / 2 + 1;
    std::vector<double> x(len), os(frames * bins), op(frames * bins);
    for (double& v : x) v = rng.normal();
    double ts =
        time_of([&] { k::serial::stft_magnitude(x.data(), len, window, hop, frames, os.data()); }, 3);
    double tp =
        time_of([&] { k::par::stft_magnitude(x.data(), len, window, hop, frames, op.data()); }, 3);
    report("stft 2048/512 @256k", ts, tp, max_abs_diff(os, op));
  }

  {
    std::size_t n = 4096;
    std::vector<double> s(n), p(n), gs(n), gp(n);
    for (double& v : s) v = rng.uniform(1.0, 5.0);
    for (double& v : p) v = rng.uniform(1.0, 5.0);
    double vs = 0.0, vp = 0.0;
    double ts = time_of([&] { vs = k::serial::contrastive_hinge(s.data(), p.data(), n, 0.2, true); }, 3);
    double tp = time_of([&] { vp = k::par::contrastive_hinge(s.data(), p.data(), n, 0.2, true); }, 3);
    report("contrastive n=4096", ts, tp, std::fabs(vs - vp));
    ts = time_of(
        [&] { k::serial::contrastive_hinge_grad(s.data(), p.data(), n, 0.2, true, gs.data()); }, 3);
    tp = time_of(
        [&] { k::par::contrastive_hinge_grad(s.data(), p.data(), n, 0.2, true, gp.data()); }, 3);
    report("contrastive grad", ts, tp, max_abs_diff(gs, gp));
  }

  return 0;
}
