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

#ifndef MOSFUSE_KERNELS_HPP_
#define MOSFUSE_KERNELS_HPP_

#include <cstddef>
#include <vector>

// Compute kernels behind the model and feature pipeline. Every kernel has a
// serial implementation (kernels::serial) and an OpenMP one (kernels::par);
// the unqualified entry points dispatch on the process-wide backend.
//
// Parallel kernels only distribute independent output elements across
// threads; no kernel does a cross-thread floating-point reduction, so results
// are bit-identical to the serial path for any thread count.

namespace mosfuse::kernels {

enum class Backend { kSerial, kOpenMP };

Backend backend();
void set_backend(Backend b);
bool openmp_compiled();
int thread_count();

struct Conv2dShape {
  std::size_t in_ch, in_h, in_w;
  std::size_t out_ch, kh, kw;
  std::size_t stride, pad;
  std::size_t out_h() const { return (in_h + 2 * pad - kh) / stride + 1; }
  std::size_t out_w() const { return (in_w + 2 * pad - kw) / stride + 1; }
};

namespace serial {

// C[m,n] = A[m,k] * B[k,n]
void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
// C[m,n] = A[k,m]^T * B[k,n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t k, std::size_t m, std::size_t n);
// C[m,n] = A[m,k] * B[n,k]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);

void conv2d_forward(const Conv2dShape& s, const double* x, const double* w,
                    const double* bias, double* y);
void conv2d_backward_input(const Conv2dShape& s, const double* gy, const double* w, double* gx);
void conv2d_backward_weight(const Conv2dShape& s, const double* gy, const double* x,
                            double* gw, double* gbias);

// Magnitude STFT with a Hann window, centered frames, zero padding at the
// signal edges. out is [n_frames, window/2 + 1].
void stft_magnitude(const double* x, std::size_t len, std::size_t window, std::size_t hop,
                    std::size_t n_frames, double* out);

// Naive DFT magnitude of one windowed frame; the test oracle for the FFT
// path and the fallback for non power-of-two windows.
void dft_frame_magnitude(const double* frame, std::size_t window, double* out);

double contrastive_hinge(const double* target, const double* pred, std::size_t n,
                         double alpha, bool ordered_pairs);
void contrastive_hinge_grad(const double* target, const double* pred, std::size_t n,
                            double alpha, bool ordered_pairs, double* grad_pred);

}  // namespace serial

namespace par {

void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
void gemm_tn(const double* a, const double* b, double* c, std::size_t k, std::size_t m, std::size_t n);
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
void conv2d_forward(const Conv2dShape& s, const double* x, const double* w,
                    const double* bias, double* y);
void conv2d_backward_input(const Conv2dShape& s, const double* gy, const double* w, double* gx);
void conv2d_backward_weight(const Conv2dShape& s, const double* gy, const double* x,
                            double* gw, double* gbias);
void stft_magnitude(const double* x, std::size_t len, std::size_t window, std::size_t hop,
                    std::size_t n_frames, double* out);
double contrastive_hinge(const double* target, const double* pred, std::size_t n,
                         double alpha, bool ordered_pairs);
void contrastive_hinge_grad(const double* target, const double* pred, std::size_t n,
                            double alpha, bool ordered_pairs, double* grad_pred);

}  // namespace par

// Dispatching entry points.
void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
void gemm_tn(const double* a, const double* b, double* c, std::size_t k, std::size_t m, std::size_t n);
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
void conv2d_forward(const Conv2dShape& s, const double* x, const double* w,
                    const double* bias, double* y);
void conv2d_backward_input(const Conv2dShape& s, const double* gy, const double* w, double* gx);
void conv2d_backward_weight(const Conv2dShape& s, const double* gy, const double* x,
                            double* gw, double* gbias);
void stft_magnitude(const double* x, std::size_t len, std::size_t window, std::size_t hop,
                    std::size_t n_frames, double* out);
double contrastive_hinge(const double* target, const double* pred, std::size_t n,
                         double alpha, bool ordered_pairs);
void contrastive_hinge_grad(const double* target, const double* pred, std::size_t n,
                            double alpha, bool ordered_pairs, double* grad_pred);

// Triangular mel filterbank on DFT bin centers, HTK mel scale, bands spanning
// [0, rate/2]. filt is [n_mels, n_bins] with n_bins = window/2 + 1.
void mel_filterbank(std::size_t n_mels, std::size_t window, double rate, std::vector<double>* filt);

// Center frequency (Hz) of mel band i; used by tests as an independent
// reference for peak locations.
double mel_band_center_hz(std::size_t i, std::size_t n_mels, double rate);

}  // namespace mosfuse::kernels

#endif  // MOSFUSE_KERNELS_HPP_
