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

#include "mosfuse/tensor.hpp"

#include <cmath>
#include <sstream>

namespace mosfuse {

void fail(const std::string& msg) { throw std::runtime_error(msg); }

Tensor::Tensor(std::vector<std::size_t> s, double fill) : shape(std::move(s)) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  data.assign(n, fill);
}

Tensor Tensor::scalar(double v) {
  Tensor t({1});
  t.data[0] = v;
  return t;
}

Tensor Tensor::vec(std::vector<double> v) {
  Tensor t;
  t.shape = {v.size()};
  t.data = std::move(v);
  return t;
}

Tensor Tensor::mat(std::size_t rows, std::size_t cols, std::vector<double> v) {
  MOSFUSE_CHECK(v.size() == rows * cols, "Tensor::mat: size mismatch");
  Tensor t;
  t.shape = {rows, cols};
  t.data = std::move(v);
  return t;
}

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ")";
  return os.str();
}

std::uint64_t hash_bytes(const void* p, std::size_t n, std::uint64_t h) {
  const auto* b = static_cast<const unsigned char*>(p);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= b[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t hash_str(std::string_view s, std::uint64_t h) {
  return hash_bytes(s.data(), s.size(), h);
}

std::size_t Rng::uniform_index(std::size_t n) {
  MOSFUSE_CHECK(n > 0, "uniform_index: n must be positive");
  std::uint64_t un = n;
  std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
  std::uint64_t r;
  do {
    r = next_u64();
  } while (r >= limit);
  return static_cast<std::size_t>(r % un);
}

double Rng::normal(double mean, double sd) {
  if (has_spare_) {
    has_spare_ = false;
    return mean + sd * spare_;
  }
  double u1 = 1.0 - uniform();  // (0, 1]
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double z0 = r * std::cos(2.0 * M_PI * u2);
  spare_ = r * std::sin(2.0 * M_PI * u2);
  has_spare_ = true;
  return mean + sd * z0;
}

// Marsaglia-Tsang, with the a < 1 boost.
double Rng::gamma(double a) {
  MOSFUSE_CHECK(a > 0.0, "gamma: shape must be positive");
  if (a < 1.0) {
    double u = uniform();
    return gamma(a + 1.0) * std::pow(u, 1.0 / a);
  }
  double d = a - 1.0 / 3.0;
  double c = 1.0 / (3.0 * std::sqrt(d));
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    double u = uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

double Rng::beta(double a, double b) {
  double x = gamma(a);
  double y = gamma(b);
  double s = x + y;
  return s > 0.0 ? x / s : 0.5;
}

std::vector<std::size_t> Rng::permutation(std::size_t n) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    std::size_t j = uniform_index(i);
    std::swap(p[i - 1], p[j]);
  }
  return p;
}

std::uint64_t derive_seed(std::uint64_t base, std::string_view a, std::string_view b) {
  std::uint64_t h = hash_bytes(&base, sizeof(base));
  h = hash_str(a, h);
  if (!b.empty()) h = hash_str(b, h);
  return h;
}

}  // namespace mosfuse
