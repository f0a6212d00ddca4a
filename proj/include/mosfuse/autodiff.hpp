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

#ifndef MOSFUSE_AUTODIFF_HPP_
#define MOSFUSE_AUTODIFF_HPP_

#include <functional>
#include <string>
#include <vector>

#include "mosfuse/tensor.hpp"

namespace mosfuse {

/// A persistent, named model parameter. Gradients are accumulated into
/// `grad` by Tape::backward; the optimizer consumes and clears them.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  Param() = default;
  Param(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {
    grad = Tensor(value.shape, 0.0);
  }
  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
  std::uint64_t checksum() const {
    return hash_bytes(value.data.data(), value.data.size() * sizeof(double));
  }
};

/// Reverse-mode tape. Build the graph with the op methods (each returns a
/// node id), call backward(loss) once, then read parameter gradients from
/// the bound Params. One tape per training step; tapes are not thread-safe,
/// use one per thread.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  int constant(Tensor v);
  int param(Param* p);

  const Tensor& value(int id) const { return nodes_[id].val; }
  const Tensor& grad(int id) const { return nodes_[id].grad; }
  double scalar(int id) const { return nodes_[id].val.data[0]; }
  std::size_t size() const { return nodes_.size(); }

  int add(int a, int b);
  int lincomb(double ca, int a, double cb, int b);
  int scale(int a, double c);
  int add_rowvec(int a, int b);                     // [m,n] + [n]
  int matmul(int a, int b);                         // [m,k] x [k,n]
  int matmul_tn(int a, int b);                      // [k,m]^T x [k,n]
  int transpose2d(int a);
  int tanh_op(int a);
  int relu(int a);
  int softmax(int a);                               // over the whole buffer
  int conv2d(int x, int w, int b, std::size_t stride, std::size_t pad);
  int reduce_mean_axis2(int a);                     // [c,f,t] -> [c,f]
  int reduce_max_axis2(int a);                      // [c,f,t] -> [c,f]
  int reduce_max_axis1(int a);                      // [m,n] -> [m]
  int reduce_max_axis0(int a);                      // [m,n] -> [n]
  int reduce_mean_vec(int a);                       // -> scalar
  int concat_axis2(const std::vector<int>& maps);   // [c,f,t_i] -> [c,f,sum t]
  int concat_vec(const std::vector<int>& vecs);
  int stack_rows(const std::vector<int>& rows);     // B x [d] -> [B,d]
  int reshape(int a, std::vector<std::size_t> shape);
  int mul_scalar_elem(int a, int vec, std::size_t idx);  // a * vec[idx]
  int crop_rows_center(int a, std::size_t rows);    // [T,d] -> [rows,d]
  int neighbor_mean3(int a);                        // [T,d], mean of t-1,t,t+1 rows
  int embedding_row(Param* table, std::size_t row); // -> [d]
  int sub_const(int a, const Tensor& t);
  int mean_square(int a);                           // -> scalar
  int contrastive(int pred, const Tensor& targets, double alpha, bool ordered_pairs);

  void backward(int loss_id);

 private:
  struct Node {
    Tensor val;
    Tensor grad;
    std::function<void(Tape&, int)> back;  // may be empty for leaves
    Param* bound = nullptr;
  };

  int push(Tensor val, std::function<void(Tape&, int)> back = {}, Param* bound = nullptr);

  std::vector<Node> nodes_;
};


}  // namespace mosfuse

#endif  // MOSFUSE_AUTODIFF_HPP_
