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

#ifndef MOSFUSE_TENSOR_HPP_
#define MOSFUSE_TENSOR_HPP_

#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mosfuse {

[[noreturn]] void fail(const std::string& msg);

#define MOSFUSE_CHECK(cond, msg)                       \
  do {                                                 \
    if (!(cond)) ::mosfuse::fail(msg);                 \
  } while (0)

/// Dense row-major tensor of doubles. Rank is dynamic; most of the code
/// only uses ranks 1-4.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s, double fill = 0.0);

  static Tensor scalar(double v);
  static Tensor vec(std::vector<double> v);
  static Tensor mat(std::size_t rows, std::size_t cols, std::vector<double> v);

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  // 2-D / 3-D accessors (row-major).
  double& at(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }
  double& at(std::size_t i, std::size_t j, std::size_t k) {
    return data[(i * shape[1] + j) * shape[2] + k];
  }
  double at(std::size_t i, std::size_t j, std::size_t k) const {
    return data[(i * shape[1] + j) * shape[2] + k];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool all_finite() const;
  std::string shape_str() const;
};

/// FNV-1a over a byte range. Used for parameter checksums and seed derivation.
std::uint64_t hash_bytes(const void* p, std::size_t n, std::uint64_t h = 1469598103934665603ull);
std::uint64_t hash_str(std::string_view s, std::uint64_t h = 1469598103934665603ull);

/// Deterministic RNG. The engine (mt19937_64) is standardized; all
/// distributions are hand-rolled so streams are identical across platforms
/// and standard-library versions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
  std::size_t uniform_index(std::size_t n);

  double normal(double mean = 0.0, double sd = 1.0);
  double gamma(double a);
  double beta(double a, double b);

  std::vector<std::size_t> permutation(std::size_t n);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Stable seed for a sub-stream, e.g. derive_seed(seed, "val", utt_id).
std::uint64_t derive_seed(std::uint64_t base, std::string_view a, std::string_view b = {});

}  // namespace mosfuse

#endif  // MOSFUSE_TENSOR_HPP_
