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

#include "mosfuse/nn.hpp"

#include <cmath>

namespace mosfuse::nn {

void ParamSet::set_trainable_prefix(std::string_view prefix, bool trainable) {
  for (Param* p : params_)
    if (std::string_view(p->name).substr(0, prefix.size()) == prefix) p->trainable = trainable;
}

Param* ParamSet::find(std::string_view name) const {
  for (Param* p : params_)
    if (p->name == name) return p;
  return nullptr;
}

std::uint64_t ParamSet::checksum(std::string_view prefix) const {
  std::uint64_t h = 1469598103934665603ull;
  for (Param* p : params_) {
    if (!prefix.empty() && std::string_view(p->name).substr(0, prefix.size()) != prefix) continue;
    h = hash_str(p->name, h);
    h = hash_bytes(p->value.data.data(), p->value.data.size() * sizeof(double), h);
  }
  return h;
}

std::vector<Tensor> ParamSet::snapshot_values() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (Param* p : params_) out.push_back(p->value);
  return out;
}

void ParamSet::restore_values(const std::vector<Tensor>& values) {
  MOSFUSE_CHECK(values.size() == params_.size(), "restore_values: size mismatch");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    MOSFUSE_CHECK(values[i].same_shape(params_[i]->value), "restore_values: shape mismatch");
    params_[i]->value = values[i];
  }
}

int attention_pool(Tape& t, int seq, int query) {
  const Tensor& s = t.value(seq);
  MOSFUSE_CHECK(s.rank() == 2, "attention_pool: sequence must be [T,d]");
  std::size_t d = s.dim(1);
  MOSFUSE_CHECK(t.value(query).numel() == d, "attention_pool: query dim mismatch");
  int qcol = t.reshape(query, {d, 1});
  int scores = t.scale(t.matmul(seq, qcol), 1.0 / std::sqrt(static_cast<double>(d)));  // [T,1]
  int weights = t.softmax(scores);
  int pooled = t.matmul_tn(seq, weights);  // [d,1]
  return t.reshape(pooled, {d});
}

int weighted_sum(Tape& t, const std::vector<int>& items, int weights) {
  MOSFUSE_CHECK(!items.empty(), "weighted_sum: no items");
  MOSFUSE_CHECK(t.value(weights).numel() == items.size(), "weighted_sum: weight count mismatch");
  int acc = t.mul_scalar_elem(items[0], weights, 0);
  for (std::size_t n = 1; n < items.size(); ++n)
    acc = t.add(acc, t.mul_scalar_elem(items[n], weights, n));
  return acc;
}

void init_normal(Rng& rng, Tensor* t, double sd) {
  for (double& v : t->data) v = rng.normal(0.0, sd);
}

void init_uniform_weights(Tensor* t) {
  double v = 1.0 / static_cast<double>(t->numel());
  for (double& x : t->data) x = v;
}

}  // namespace mosfuse::nn
