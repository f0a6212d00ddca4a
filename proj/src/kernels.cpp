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

#include "mosfuse/kernels.hpp"

#include <atomic>
#include <cmath>
#include <complex>
#include <cstring>

#include "mosfuse/tensor.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mosfuse::kernels {

namespace {

std::atomic<Backend> g_backend{
#ifdef _OPENMP
    Backend::kOpenMP
#else
    Backend::kSerial
#endif
};

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// Iterative radix-2 FFT, in place over interleaved complex doubles.
void fft_pow2(std::complex<double>* a, std::size_t n) {
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    double ang = -2.0 * M_PI / static_cast<double>(len);
    std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        std::complex<double> u = a[i + j];
        std::complex<double> v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

inline double hann(std::size_t i, std::size_t n) {
  return 0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(i) / static_cast<double>(n));
}

// Gathers the windowed frame centered at frame_idx * hop (zero outside the
// signal) and writes its spectrum magnitudes.
void stft_one_frame(const double* x, std::size_t len, std::size_t window, std::size_t hop,
                    std::size_t frame_idx, double* out, std::vector<double>& scratch) {
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(window) / 2;
  const std::ptrdiff_t center = static_cast<std::ptrdiff_t>(frame_idx * hop);
  scratch.resize(window);
  for (std::size_t i = 0; i < window; ++i) {
    std::ptrdiff_t src = center - half + static_cast<std::ptrdiff_t>(i);
    double v = (src >= 0 && src < static_cast<std::ptrdiff_t>(len)) ? x[src] : 0.0;
    scratch[i] = v * hann(i, window);
  }
  if (is_pow2(window)) {
    std::vector<std::complex<double>> buf(window);
    for (std::size_t i = 0; i < window; ++i) buf[i] = scratch[i];
    fft_pow2(buf.data(), window);
    for (std::size_t b = 0; b <= window / 2; ++b) out[b] = std::abs(buf[b]);
  } else {
    serial::dft_frame_magnitude(scratch.data(), window, out);
  }
}

inline double hinge_term(double si, double sj, double pi, double pj, double alpha) {
  double v = std::fabs((si - sj) - (pi - pj)) - alpha;
  return v > 0.0 ? v : 0.0;
}

}  // namespace

Backend backend() { return g_backend.load(); }
void set_backend(Backend b) { g_backend.store(b); }

bool openmp_compiled() {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

int thread_count() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

// ---------------------------------------------------------------------------
// serial
// ---------------------------------------------------------------------------

namespace serial {

void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
    for (std::size_t p = 0; p < k; ++p) {
      double av = a[i * k + p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t k, std::size_t m, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
    for (std::size_t p = 0; p < k; ++p) {
      double av = a[p * m + i];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] = acc;
    }
  }
}

namespace detail {

inline void conv2d_forward_one(const Conv2dShape& s, const double* x, const double* w,
                               const double* bias, double* y, std::size_t oc) {
  const std::size_t oh = s.out_h(), ow = s.out_w();
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      double acc = bias ? bias[oc] : 0.0;
      for (std::size_t ic = 0; ic < s.in_ch; ++ic) {
        for (std::size_t ky = 0; ky < s.kh; ++ky) {
          std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * s.stride + ky) -
                              static_cast<std::ptrdiff_t>(s.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(s.in_h)) continue;
          for (std::size_t kx = 0; kx < s.kw; ++kx) {
            std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * s.stride + kx) -
                                static_cast<std::ptrdiff_t>(s.pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(s.in_w)) continue;
            acc += x[(ic * s.in_h + iy) * s.in_w + ix] *
                   w[((oc * s.in_ch + ic) * s.kh + ky) * s.kw + kx];
          }
        }
      }
      y[(oc * oh + oy) * ow + ox] = acc;
    }
  }
}

inline void conv2d_backward_input_one(const Conv2dShape& s, const double* gy, const double* w,
                                      double* gx, std::size_t ic) {
  const std::size_t oh = s.out_h(), ow = s.out_w();
  for (std::size_t iy = 0; iy < s.in_h; ++iy) {
    for (std::size_t ix = 0; ix < s.in_w; ++ix) {
      double acc = 0.0;
      for (std::size_t oc = 0; oc < s.out_ch; ++oc) {
        for (std::size_t ky = 0; ky < s.kh; ++ky) {
          std::ptrdiff_t num_y = static_cast<std::ptrdiff_t>(iy + s.pad) -
                                 static_cast<std::ptrdiff_t>(ky);
          if (num_y < 0 || num_y % static_cast<std::ptrdiff_t>(s.stride)) continue;
          std::size_t oy = static_cast<std::size_t>(num_y) / s.stride;
          if (oy >= oh) continue;
          for (std::size_t kx = 0; kx < s.kw; ++kx) {
            std::ptrdiff_t num_x = static_cast<std::ptrdiff_t>(ix + s.pad) -
                                   static_cast<std::ptrdiff_t>(kx);
            if (num_x < 0 || num_x % static_cast<std::ptrdiff_t>(s.stride)) continue;
            std::size_t ox = static_cast<std::size_t>(num_x) / s.stride;
            if (ox >= ow) continue;
            acc += gy[(oc * oh + oy) * ow + ox] *
                   w[((oc * s.in_ch + ic) * s.kh + ky) * s.kw + kx];
          }
        }
      }
      gx[(ic * s.in_h + iy) * s.in_w + ix] = acc;
    }
  }
}

inline void conv2d_backward_weight_one(const Conv2dShape& s, const double* gy, const double* x,
                                       double* gw, double* gbias, std::size_t oc) {
  const std::size_t oh = s.out_h(), ow = s.out_w();
  double bacc = 0.0;
  for (std::size_t oy = 0; oy < oh; ++oy)
    for (std::size_t ox = 0; ox < ow; ++ox) bacc += gy[(oc * oh + oy) * ow + ox];
  if (gbias) gbias[oc] = bacc;
  for (std::size_t ic = 0; ic < s.in_ch; ++ic) {
    for (std::size_t ky = 0; ky < s.kh; ++ky) {
      for (std::size_t kx = 0; kx < s.kw; ++kx) {
        double acc = 0.0;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * s.stride + ky) -
                              static_cast<std::ptrdiff_t>(s.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(s.in_h)) continue;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * s.stride + kx) -
                                static_cast<std::ptrdiff_t>(s.pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(s.in_w)) continue;
            acc += gy[(oc * oh + oy) * ow + ox] * x[(ic * s.in_h + iy) * s.in_w + ix];
          }
        }
        gw[((oc * s.in_ch + ic) * s.kh + ky) * s.kw + kx] = acc;
      }
    }
  }
}

}  // namespace detail

void conv2d_forward(const Conv2dShape& s, const double* x, const double* w,
                    const double* bias, double* y) {
  for (std::size_t oc = 0; oc < s.out_ch; ++oc)
    detail::conv2d_forward_one(s, x, w, bias, y, oc);
}

void conv2d_backward_input(const Conv2dShape& s, const double* gy, const double* w, double* gx) {
  for (std::size_t ic = 0; ic < s.in_ch; ++ic)
    detail::conv2d_backward_input_one(s, gy, w, gx, ic);
}

void conv2d_backward_weight(const Conv2dShape& s, const double* gy, const double* x,
                            double* gw, double* gbias) {
  for (std::size_t oc = 0; oc < s.out_ch; ++oc)
    detail::conv2d_backward_weight_one(s, gy, x, gw, gbias, oc);
}

void stft_magnitude(const double* x, std::size_t len, std::size_t window, std::size_t hop,
                    std::size_t n_frames, double* out) {
  const std::size_t n_bins = window / 2 + 1;
  std::vector<double> scratch;
  for (std::size_t f = 0; f < n_frames; ++f)
    stft_one_frame(x, len, window, hop, f, out + f * n_bins, scratch);
}

void dft_frame_magnitude(const double* frame, std::size_t window, double* out) {
  const std::size_t n_bins = window / 2 + 1;
  for (std::size_t b = 0; b < n_bins; ++b) {
    double re = 0.0, im = 0.0;
    for (std::size_t i = 0; i < window; ++i) {
      double ang = -2.0 * M_PI * static_cast<double>(b) * static_cast<double>(i) /
                   static_cast<double>(window);
      re += frame[i] * std::cos(ang);
      im += frame[i] * std::sin(ang);
    }
    out[b] = std::sqrt(re * re + im * im);
  }
}

double contrastive_hinge(const double* target, const double* pred, std::size_t n,
                         double alpha, bool ordered_pairs) {
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t j = ordered_pairs ? 0 : i + 1; j < n; ++j) {
      if (j == i) continue;
      row += hinge_term(target[i], target[j], pred[i], pred[j], alpha);
    }
    total += row;
  }
  return total;
}

void contrastive_hinge_grad(const double* target, const double* pred, std::size_t n,
                            double alpha, bool ordered_pairs, double* grad_pred) {
  // d/d pred_i of max(0, |d_t - d_p| - alpha) with d_p = pred_i - pred_j is
  // -sign(d_t - d_p) when the hinge is active; the j side gets the opposite
  // sign. Subgradient 0 exactly at the kink.
  const double pair_w = ordered_pairs ? 2.0 : 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double diff = (target[i] - target[j]) - (pred[i] - pred[j]);
      if (std::fabs(diff) - alpha > 0.0) acc += (diff > 0.0 ? -1.0 : 1.0);
    }
    grad_pred[i] = pair_w * acc;
  }
}

}  // namespace serial

// ---------------------------------------------------------------------------
// par (OpenMP)
// ---------------------------------------------------------------------------

namespace par {

void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
    for (std::size_t p = 0; p < k; ++p) {
      double av = a[i * k + p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t k, std::size_t m, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
    for (std::size_t p = 0; p < k; ++p) {
      double av = a[p * m + i];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] = acc;
    }
  }
}

void conv2d_forward(const Conv2dShape& s, const double* x, const double* w,
                    const double* bias, double* y) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t oc = 0; oc < static_cast<std::ptrdiff_t>(s.out_ch); ++oc)
    serial::detail::conv2d_forward_one(s, x, w, bias, y, static_cast<std::size_t>(oc));
}

void conv2d_backward_input(const Conv2dShape& s, const double* gy, const double* w, double* gx) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ic = 0; ic < static_cast<std::ptrdiff_t>(s.in_ch); ++ic)
    serial::detail::conv2d_backward_input_one(s, gy, w, gx, static_cast<std::size_t>(ic));
}

void conv2d_backward_weight(const Conv2dShape& s, const double* gy, const double* x,
                            double* gw, double* gbias) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t oc = 0; oc < static_cast<std::ptrdiff_t>(s.out_ch); ++oc)
    serial::detail::conv2d_backward_weight_one(s, gy, x, gw, gbias, static_cast<std::size_t>(oc));
}

void stft_magnitude(const double* x, std::size_t len, std::size_t window, std::size_t hop,
                    std::size_t n_frames, double* out) {
  const std::size_t n_bins = window / 2 + 1;
#pragma omp parallel
  {
    std::vector<double> scratch;
#pragma omp for schedule(static)
    for (std::ptrdiff_t f = 0; f < static_cast<std::ptrdiff_t>(n_frames); ++f)
      stft_one_frame(x, len, window, hop, static_cast<std::size_t>(f), out + f * n_bins, scratch);
  }
}

double contrastive_hinge(const double* target, const double* pred, std::size_t n,
                         double alpha, bool ordered_pairs) {
  // Per-row partials summed in row order afterwards keeps the result
  // independent of the thread count.
  std::vector<double> row(n, 0.0);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    double acc = 0.0;
    for (std::size_t j = ordered_pairs ? 0 : static_cast<std::size_t>(i) + 1; j < n; ++j) {
      if (j == static_cast<std::size_t>(i)) continue;
      acc += hinge_term(target[i], target[j], pred[i], pred[j], alpha);
    }
    row[i] = acc;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += row[i];
  return total;
}

void contrastive_hinge_grad(const double* target, const double* pred, std::size_t n,
                            double alpha, bool ordered_pairs, double* grad_pred) {
  const double pair_w = ordered_pairs ? 2.0 : 1.0;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == static_cast<std::size_t>(i)) continue;
      double diff = (target[i] - target[j]) - (pred[i] - pred[j]);
      if (std::fabs(diff) - alpha > 0.0) acc += (diff > 0.0 ? -1.0 : 1.0);
    }
    grad_pred[i] = pair_w * acc;
  }
}

}  // namespace par

// ---------------------------------------------------------------------------
// dispatch
// ---------------------------------------------------------------------------

#define MOSFUSE_DISPATCH(fn, ...)                        \
  do {                                                   \
    if (backend() == Backend::kOpenMP)                   \
      return par::fn(__VA_ARGS__);                       \
    return serial::fn(__VA_ARGS__);                      \
  } while (0)

void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  MOSFUSE_DISPATCH(gemm, a, b, c, m, k, n);
}
void gemm_tn(const double* a, const double* b, double* c, std::size_t k, std::size_t m, std::size_t n) {
  MOSFUSE_DISPATCH(gemm_tn, a, b, c, k, m, n);
}
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  MOSFUSE_DISPATCH(gemm_nt, a, b, c, m, k, n);
}
void conv2d_forward(const Conv2dShape& s, const double* x, const double* w,
                    const double* bias, double* y) {
  MOSFUSE_DISPATCH(conv2d_forward, s, x, w, bias, y);
}
void conv2d_backward_input(const Conv2dShape& s, const double* gy, const double* w, double* gx) {
  MOSFUSE_DISPATCH(conv2d_backward_input, s, gy, w, gx);
}
void conv2d_backward_weight(const Conv2dShape& s, const double* gy, const double* x,
                            double* gw, double* gbias) {
  MOSFUSE_DISPATCH(conv2d_backward_weight, s, gy, x, gw, gbias);
}
void stft_magnitude(const double* x, std::size_t len, std::size_t window, std::size_t hop,
                    std::size_t n_frames, double* out) {
  MOSFUSE_DISPATCH(stft_magnitude, x, len, window, hop, n_frames, out);
}
double contrastive_hinge(const double* target, const double* pred, std::size_t n,
                         double alpha, bool ordered_pairs) {
  if (backend() == Backend::kOpenMP)
    return par::contrastive_hinge(target, pred, n, alpha, ordered_pairs);
  return serial::contrastive_hinge(target, pred, n, alpha, ordered_pairs);
}
void contrastive_hinge_grad(const double* target, const double* pred, std::size_t n,
                            double alpha, bool ordered_pairs, double* grad_pred) {
  MOSFUSE_DISPATCH(contrastive_hinge_grad, target, pred, n, alpha, ordered_pairs, grad_pred);
}

#undef MOSFUSE_DISPATCH

namespace {
inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }
}  // namespace

void mel_filterbank(std::size_t n_mels, std::size_t window, double rate, std::vector<double>* filt) {
  MOSFUSE_CHECK(n_mels >= 1 && window >= 2, "mel_filterbank: bad sizes");
  const std::size_t n_bins = window / 2 + 1;
  filt->assign(n_mels * n_bins, 0.0);
  const double mel_max = hz_to_mel(rate / 2.0);
  std::vector<double> edges(n_mels + 2);
  for (std::size_t i = 0; i < n_mels + 2; ++i)
    edges[i] = mel_to_hz(mel_max * static_cast<double>(i) / static_cast<double>(n_mels + 1));
  for (std::size_t m = 0; m < n_mels; ++m) {
    double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    for (std::size_t b = 0; b < n_bins; ++b) {
      double hz = rate * static_cast<double>(b) / static_cast<double>(window);
      double w = 0.0;
      if (hz > lo && hz < hi)
        w = hz <= mid ? (hz - lo) / (mid - lo) : (hi - hz) / (hi - mid);
      (*filt)[m * n_bins + b] = w;
    }
  }
}

double mel_band_center_hz(std::size_t i, std::size_t n_mels, double rate) {
  const double mel_max = hz_to_mel(rate / 2.0);
  return mel_to_hz(mel_max * static_cast<double>(i + 1) / static_cast<double>(n_mels + 1));
}

}  // namespace mosfuse::kernels
