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

#ifndef MOSFUSE_NN_HPP_
#define MOSFUSE_NN_HPP_

#include <string_view>
#include <vector>

#include "mosfuse/autodiff.hpp"

namespace mosfuse::nn {

/// Non-owning registry over a model's parameters.
class ParamSet {
 public:
  void add(Param* p) { params_.push_back(p); }
  void add_all(const std::vector<Param*>& ps) {
    params_.insert(params_.end(), ps.begin(), ps.end());
  }
  const std::vector<Param*>& all() const { return params_; }

  void zero_grads() {
    for (Param* p : params_) p->zero_grad();
  }
  void set_trainable(bool trainable) {
    for (Param* p : params_) p->trainable = trainable;
  }
  void set_trainable_prefix(std::string_view prefix, bool trainable);
  Param* find(std::string_view name) const;

  /// Combined checksum over the byte representation of all parameters whose
  /// name starts with prefix (all parameters when prefix is empty).
  std::uint64_t checksum(std::string_view prefix = {}) const;

  std::vector<Tensor> snapshot_values() const;
  void restore_values(const std::vector<Tensor>& values);

 private:
  std::vector<Param*> params_;
};

/// Single-head scaled dot-product pooling with one learned query:
/// scores = seq . q / sqrt(d), weights = softmax(scores),
/// output = sum_t weights_t * seq_t. seq is [T,d], query [d]; returns [d].
int attention_pool(Tape& t, int seq, int query);

/// Weighted sum over equally shaped tensors with weights taken from a
/// parameter vector node: sum_n weights[n] * items[n].
int weighted_sum(Tape& t, const std::vector<int>& items, int weights);

void init_normal(Rng& rng, Tensor* t, double sd);
void init_uniform_weights(Tensor* t);  // fill with 1/n so the entries sum to 1

}  // namespace mosfuse::nn

#endif  // MOSFUSE_NN_HPP_
