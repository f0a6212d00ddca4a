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

#include "mosfuse/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "mosfuse/kernels.hpp"

namespace mosfuse {

int Tape::push(Tensor val, std::function<void(Tape&, int)> back, Param* bound) {
  Node n;
  n.val = std::move(val);
  n.back = std::move(back);
  n.bound = bound;
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

int Tape::constant(Tensor v) { return push(std::move(v)); }

int Tape::param(Param* p) {
  MOSFUSE_CHECK(p != nullptr, "param: null");
  return push(p->value, {}, p);
}

int Tape::add(int a, int b) {
  MOSFUSE_CHECK(value(a).same_shape(value(b)), "add: shape mismatch");
  Tensor out = value(a);
  const Tensor& vb = value(b);
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] += vb.data[i];
  return push(std::move(out), [a, b](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    Tensor& ga = t.nodes_[a].grad;
    Tensor& gb = t.nodes_[b].grad;
    for (std::size_t i = 0; i < g.numel(); ++i) {
      ga.data[i] += g.data[i];
      gb.data[i] += g.data[i];
    }
  });
}

int Tape::lincomb(double ca, int a, double cb, int b) {
  MOSFUSE_CHECK(value(a).same_shape(value(b)), "lincomb: shape mismatch");
  Tensor out(value(a).shape);
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = ca * va.data[i] + cb * vb.data[i];
  return push(std::move(out), [a, b, ca, cb](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    Tensor& ga = t.nodes_[a].grad;
    Tensor& gb = t.nodes_[b].grad;
    for (std::size_t i = 0; i < g.numel(); ++i) {
      ga.data[i] += ca * g.data[i];
      gb.data[i] += cb * g.data[i];
    }
  });
}

int Tape::scale(int a, double c) {
  Tensor out = value(a);
  for (double& v : out.data) v *= c;
  return push(std::move(out), [a, c](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    Tensor& ga = t.nodes_[a].grad;
    for (std::size_t i = 0; i < g.numel(); ++i) ga.data[i] += c * g.data[i];
  });
}

int Tape::add_rowvec(int a, int b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  MOSFUSE_CHECK(va.rank() == 2 && vb.numel() == va.dim(1), "add_rowvec: shape mismatch");
  Tensor out = va;
  for (std::size_t i = 0; i < va.dim(0); ++i)
    for (std::size_t j = 0; j < va.dim(1); ++j) out.at(i, j) += vb.data[j];
  return push(std::move(out), [a, b](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    Tensor& ga = t.nodes_[a].grad;
    Tensor& gb = t.nodes_[b].grad;
    std::size_t m = g.dim(0), n = g.dim(1);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        ga.data[i * n + j] += g.data[i * n + j];
        gb.data[j] += g.data[i * n + j];
      }
  });
}

int Tape::matmul(int a, int b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  MOSFUSE_CHECK(va.rank() == 2 && vb.rank() == 2 && va.dim(1) == vb.dim(0),
                "matmul: shape mismatch " + va.shape_str() + " x " + vb.shape_str());
  std::size_t m = va.dim(0), k = va.dim(1), n = vb.dim(1);
  Tensor out({m, n});
  kernels::gemm(va.data.data(), vb.data.data(), out.data.data(), m, k, n);
  return push(std::move(out), [a, b, m, k, n](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& va = t.nodes_[a].val;
    const Tensor& vb = t.nodes_[b].val;
    Tensor tmp_a({m, k});
    kernels::gemm_nt(g.data.data(), vb.data.data(), tmp_a.data.data(), m, n, k);
    Tensor tmp_b({k, n});
    kernels::gemm_tn(va.data.data(), g.data.data(), tmp_b.data.data(), m, k, n);
    Tensor& ga = t.nodes_[a].grad;
    Tensor& gb = t.nodes_[b].grad;
    for (std::size_t i = 0; i < ga.numel(); ++i) ga.data[i] += tmp_a.data[i];
    for (std::size_t i = 0; i < gb.numel(); ++i) gb.data[i] += tmp_b.data[i];
  });
}

int Tape::matmul_tn(int a, int b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  MOSFUSE_CHECK(va.rank() == 2 && vb.rank() == 2 && va.dim(0) == vb.dim(0),
                "matmul_tn: shape mismatch");
  std::size_t k = va.dim(0), m = va.dim(1), n = vb.dim(1);
  Tensor out({m, n});
  kernels::gemm_tn(va.data.data(), vb.data.data(), out.data.data(), k, m, n);
  return push(std::move(out), [a, b, k, m, n](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;  // [m,n]
    const Tensor& va = t.nodes_[a].val;     // [k,m]
    const Tensor& vb = t.nodes_[b].val;     // [k,n]
    Tensor tmp_a({k, m});
    kernels::gemm_nt(vb.data.data(), g.data.data(), tmp_a.data.data(), k, n, m);
    Tensor tmp_b({k, n});
    kernels::gemm(va.data.data(), g.data.data(), tmp_b.data.data(), k, m, n);
    Tensor& ga = t.nodes_[a].grad;
    Tensor& gb = t.nodes_[b].grad;
    for (std::size_t i = 0; i < ga.numel(); ++i) ga.data[i] += tmp_a.data[i];
    for (std::size_t i = 0; i < gb.numel(); ++i) gb.data[i] += tmp_b.data[i];
  });
}

int Tape::transpose2d(int a) {
  const Tensor& va = value(a);
  MOSFUSE_CHECK(va.rank() == 2, "transpose2d: rank != 2");
  std::size_t m = va.dim(0), n = va.dim(1);
  Tensor out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(j, i) = va.at(i, j);
  return push(std::move(out), [a, m, n](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;  // [n,m]
    Tensor& ga = t.nodes_[a].grad;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga.data[i * n + j] += g.data[j * m + i];
  });
}

int Tape::tanh_op(int a) {
  Tensor out = value(a);
  for (double& v : out.data) v = std::tanh(v);
  return push(std::move(out), [a](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& y = t.nodes_[self].val;
    Tensor& ga = t.nodes_[a].grad;
    for (std::size_t i = 0; i < g.numel(); ++i)
      ga.data[i] += g.data[i] * (1.0 - y.data[i] * y.data[i]);
  });
}

int Tape::relu(int a) {
  Tensor out = value(a);
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return push(std::move(out), [a](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& x = t.nodes_[a].val;
    Tensor& ga = t.nodes_[a].grad;
    for (std::size_t i = 0; i < g.numel(); ++i)
      if (x.data[i] > 0.0) ga.data[i] += g.data[i];
  });
}

int Tape::softmax(int a) {
  Tensor out = value(a);
  double mx = out.data[0];
  for (double v : out.data) mx = std::max(mx, v);
  double sum = 0.0;
  for (double& v : out.data) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : out.data) v /= sum;
  return push(std::move(out), [a](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& y = t.nodes_[self].val;
    Tensor& ga = t.nodes_[a].grad;
    double dot = 0.0;
    for (std::size_t i = 0; i < g.numel(); ++i) dot += g.data[i] * y.data[i];
    for (std::size_t i = 0; i < g.numel(); ++i)
      ga.data[i] += y.data[i] * (g.data[i] - dot);
  });
}

int Tape::conv2d(int x, int w, int b, std::size_t stride, std::size_t pad) {
  const Tensor& vx = value(x);
  const Tensor& vw = value(w);
  const Tensor& vb = value(b);
  MOSFUSE_CHECK(vx.rank() == 3 && vw.rank() == 4, "conv2d: rank mismatch");
  MOSFUSE_CHECK(vw.dim(1) == vx.dim(0), "conv2d: channel mismatch");
  MOSFUSE_CHECK(vb.numel() == vw.dim(0), "conv2d: bias size");
  kernels::Conv2dShape s{vx.dim(0), vx.dim(1), vx.dim(2),
                         vw.dim(0), vw.dim(2), vw.dim(3), stride, pad};
  Tensor out({s.out_ch, s.out_h(), s.out_w()});
  kernels::conv2d_forward(s, vx.data.data(), vw.data.data(), vb.data.data(), out.data.data());
  return push(std::move(out), [x, w, b, s](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& vx = t.nodes_[x].val;
    const Tensor& vw = t.nodes_[w].val;
    Tensor gx(vx.shape);
    Tensor gw(vw.shape);
    Tensor gb({s.out_ch});
    kernels::conv2d_backward_input(s, g.data.data(), vw.data.data(), gx.data.data());
    kernels::conv2d_backward_weight(s, g.data.data(), vx.data.data(), gw.data.data(),
                                    gb.data.data());
    Tensor& nx = t.nodes_[x].grad;
    Tensor& nw = t.nodes_[w].grad;
    Tensor& nb = t.nodes_[b].grad;
    for (std::size_t i = 0; i < nx.numel(); ++i) nx.data[i] += gx.data[i];
    for (std::size_t i = 0; i < nw.numel(); ++i) nw.data[i] += gw.data[i];
    for (std::size_t i = 0; i < nb.numel(); ++i) nb.data[i] += gb.data[i];
  });
}

int Tape::reduce_mean_axis2(int a) {
  const Tensor& va = value(a);
  MOSFUSE_CHECK(va.rank() == 3, "reduce_mean_axis2: rank != 3");
  std::size_t c = va.dim(0), f = va.dim(1), tt = va.dim(2);
  Tensor out({c, f});
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = 0; j < f; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < tt; ++k) acc += va.at(i, j, k);
      out.at(i, j) = acc / static_cast<double>(tt);
    }
  return push(std::move(out), [a, c, f, tt](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    Tensor& ga = t.nodes_[a].grad;
    double inv = 1.0 / static_cast<double>(tt);
    for (std::size_t i = 0; i < c; ++i)
      for (std::size_t j = 0; j < f; ++j) {
        double gv = g.data[i * f + j] * inv;
        for (std::size_t k = 0; k < tt; ++k) ga.data[(i * f + j) * tt + k] += gv;
      }
  });
}

int Tape::reduce_max_axis2(int a) {
  const Tensor& va = value(a);
  MOSFUSE_CHECK(va.rank() == 3, "reduce_max_axis2: rank != 3");
  std::size_t c = va.dim(0), f = va.dim(1), tt = va.dim(2);
  Tensor out({c, f});
  auto arg = std::make_shared<std::vector<std::size_t>>(c * f);
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = 0; j < f; ++j) {
      std::size_t best = 0;
      double bv = va.at(i, j, 0);
      for (std::size_t k = 1; k < tt; ++k)
        if (va.at(i, j, k) > bv) {
          bv = va.at(i, j, k);
          best = k;
        }
      out.at(i, j) = bv;
      (*arg)[i * f + j] = best;
    }
  return push(std::move(out), [a, c, f, tt, arg](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    Tensor& ga = t.nodes_[a].grad;
    for (std::size_t i = 0; i < c * f; ++i)
      ga.data[i * tt + (*arg)[i]] += g.data[i];
  });
}

int Tape::reduce_max_axis1(int a) {
  const Tensor& va = value(a);
  MOSFUSE_CHECK(va.rank() == 2, "reduce_max_axis1: rank != 2");
  std::size_t m = va.dim(0), n = va.dim(1);
  Tensor out({m});
  auto arg = std::make_shared<std::vector<std::size_t>>(m);
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t best = 0;
    double bv = va.at(i, 0);
    for (std::size_t j = 1; j < n; ++j)
      if (va.at(i, j) > bv) {
        bv = va.at(i, j);
        best = j;
      }
    out.data[i] = bv;
    (*arg)[i] = best;
  }
  return push(std::move(out), [a, m, n, arg](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    Tensor& ga = t.nodes_[a].grad;
    for (std::size_t i = 0; i < m; ++i) ga.data[i * n + (*arg)[i]] += g.data[i];
  });
}

int Tape::reduce_max_axis0(int a) {
  const Tensor& va = value(a);
  MOSFUSE_CHECK(va.rank() == 2, "reduce_max_axis0: rank != 2");
  std::size_t m = va.dim(0), n = va.dim(1);
  Tensor out({n});
  auto arg = std::make_shared<std::vector<std::size_t>>(n);
  for (std::size_t j = 0; j < n; ++j) {
    std::size_t best = 0;
    double bv = va.at(0, j);
    for (std::size_t i = 1; i < m; ++i)
      if (va.at(i, j) > bv) {
        bv = va.at(i, j);
        best = i;
      }
    out.data[j] = bv;
    (*arg)[j] = best;
  }
  return push(std::move(out), [a, m, n, arg](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    Tensor& ga = t.nodes_[a].grad;
    for (std::size_t j = 0; j < n; ++j) ga.data[(*arg)[j] * n + j] += g.data[j];
  });
}

int Tape::reduce_mean_vec(int a) {
  const Tensor& va = value(a);
  std::size_t n = va.numel();
  MOSFUSE_CHECK(n >= 1, "reduce_mean_vec: empty");
  double acc = 0.0;
  for (double v : va.data) acc += v;
  return push(Tensor::scalar(acc / static_cast<double>(n)), [a, n](Tape& t, int self) {
    double g = t.nodes_[self].grad.data[0] / static_cast<double>(n);
    Tensor& ga = t.nodes_[a].grad;
    for (double& v : ga.data) v += g;
  });
}

int Tape::concat_axis2(const std::vector<int>& maps) {
  MOSFUSE_CHECK(!maps.empty(), "concat_axis2: empty");
  std::size_t c = value(maps[0]).dim(0), f = value(maps[0]).dim(1);
  std::size_t total = 0;
  for (int m : maps) {
    const Tensor& v = value(m);
    MOSFUSE_CHECK(v.rank() == 3 && v.dim(0) == c && v.dim(1) == f, "concat_axis2: shape mismatch");
    total += v.dim(2);
  }
  Tensor out({c, f, total});
  std::size_t off = 0;
  for (int m : maps) {
    const Tensor& v = value(m);
    std::size_t tt = v.dim(2);
    for (std::size_t i = 0; i < c; ++i)
      for (std::size_t j = 0; j < f; ++j)
        for (std::size_t k = 0; k < tt; ++k) out.at(i, j, off + k) = v.at(i, j, k);
    off += tt;
  }
  auto parts = std::make_shared<std::vector<int>>(maps);
  return push(std::move(out), [parts, c, f, total](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    std::size_t off = 0;
    for (int m : *parts) {
      Tensor& gm = t.nodes_[m].grad;
      std::size_t tt = t.nodes_[m].val.dim(2);
      for (std::size_t i = 0; i < c; ++i)
        for (std::size_t j = 0; j < f; ++j)
          for (std::size_t k = 0; k < tt; ++k)
            gm.data[(i * f + j) * tt + k] += g.data[(i * f + j) * total + off + k];
      off += tt;
    }
  });
}

int Tape::concat_vec(const std::vector<int>& vecs) {
  MOSFUSE_CHECK(!vecs.empty(), "concat_vec: empty");
  std::size_t total = 0;
  for (int v : vecs) total += value(v).numel();
  Tensor out({total});
  std::size_t off = 0;
  for (int v : vecs) {
    const Tensor& t = value(v);
    std::copy(t.data.begin(), t.data.end(), out.data.begin() + off);
    off += t.numel();
  }
  auto parts = std::make_shared<std::vector<int>>(vecs);
  return push(std::move(out), [parts](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    std::size_t off = 0;
    for (int m : *parts) {
      Tensor& gm = t.nodes_[m].grad;
      for (std::size_t i = 0; i < gm.numel(); ++i) gm.data[i] += g.data[off + i];
      off += gm.numel();
    }
  });
}

int Tape::stack_rows(const std::vector<int>& rows) {
  MOSFUSE_CHECK(!rows.empty(), "stack_rows: empty");
  std::size_t d = value(rows[0]).numel();
  Tensor out({rows.size(), d});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Tensor& v = value(rows[r]);
    MOSFUSE_CHECK(v.numel() == d, "stack_rows: length mismatch");
    std::copy(v.data.begin(), v.data.end(), out.data.begin() + r * d);
  }
  auto parts = std::make_shared<std::vector<int>>(rows);
  return push(std::move(out), [parts, d](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    for (std::size_t r = 0; r < parts->size(); ++r) {
      Tensor& gm = t.nodes_[(*parts)[r]].grad;
      for (std::size_t i = 0; i < d; ++i) gm.data[i] += g.data[r * d + i];
    }
  });
}

int Tape::reshape(int a, std::vector<std::size_t> shape) {
  Tensor out = value(a);
  std::size_t n = 1;
  for (std::size_t s : shape) n *= s;
  MOSFUSE_CHECK(n == out.numel(), "reshape: element count mismatch");
  out.shape = std::move(shape);
  return push(std::move(out), [a](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    Tensor& ga = t.nodes_[a].grad;
    for (std::size_t i = 0; i < g.numel(); ++i) ga.data[i] += g.data[i];
  });
}

int Tape::mul_scalar_elem(int a, int vec, std::size_t idx) {
  const Tensor& va = value(a);
  const Tensor& vv = value(vec);
  MOSFUSE_CHECK(idx < vv.numel(), "mul_scalar_elem: index out of range");
  double c = vv.data[idx];
  Tensor out = va;
  for (double& v : out.data) v *= c;
  return push(std::move(out), [a, vec, idx](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& x = t.nodes_[a].val;
    double c = t.nodes_[vec].val.data[idx];
    Tensor& ga = t.nodes_[a].grad;
    Tensor& gv = t.nodes_[vec].grad;
    double dot = 0.0;
    for (std::size_t i = 0; i < g.numel(); ++i) {
      ga.data[i] += c * g.data[i];
      dot += x.data[i] * g.data[i];
    }
    gv.data[idx] += dot;
  });
}

int Tape::crop_rows_center(int a, std::size_t rows) {
  const Tensor& va = value(a);
  MOSFUSE_CHECK(va.rank() == 2 && rows >= 1 && rows <= va.dim(0),
                "crop_rows_center: bad row count");
  std::size_t d = va.dim(1);
  std::size_t start = (va.dim(0) - rows) / 2;
  Tensor out({rows, d});
  std::copy(va.data.begin() + start * d, va.data.begin() + (start + rows) * d, out.data.begin());
  return push(std::move(out), [a, rows, d, start](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    Tensor& ga = t.nodes_[a].grad;
    for (std::size_t i = 0; i < rows * d; ++i) ga.data[start * d + i] += g.data[i];
  });
}

int Tape::neighbor_mean3(int a) {
  const Tensor& va = value(a);
  MOSFUSE_CHECK(va.rank() == 2 && va.dim(0) >= 1, "neighbor_mean3: bad shape");
  std::size_t T = va.dim(0), d = va.dim(1);
  Tensor out({T, d});
  for (std::size_t t = 0; t < T; ++t) {
    std::size_t tm = t == 0 ? 0 : t - 1;
    std::size_t tp = t + 1 >= T ? T - 1 : t + 1;
    for (std::size_t j = 0; j < d; ++j)
      out.at(t, j) = (va.at(tm, j) + va.at(t, j) + va.at(tp, j)) / 3.0;
  }
  return push(std::move(out), [a, T, d](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    Tensor& ga = t.nodes_[a].grad;
    for (std::size_t ti = 0; ti < T; ++ti) {
      std::size_t tm = ti == 0 ? 0 : ti - 1;
      std::size_t tp = ti + 1 >= T ? T - 1 : ti + 1;
      for (std::size_t j = 0; j < d; ++j) {
        double gv = g.data[ti * d + j] / 3.0;
        ga.data[tm * d + j] += gv;
        ga.data[ti * d + j] += gv;
        ga.data[tp * d + j] += gv;
      }
    }
  });
}

int Tape::embedding_row(Param* table, std::size_t row) {
  MOSFUSE_CHECK(table != nullptr && table->value.rank() == 2, "embedding_row: bad table");
  MOSFUSE_CHECK(row < table->value.dim(0), "embedding_row: row out of range");
  std::size_t d = table->value.dim(1);
  Tensor out({d});
  for (std::size_t j = 0; j < d; ++j) out.data[j] = table->value.at(row, j);
  return push(std::move(out), [table, row, d](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    for (std::size_t j = 0; j < d; ++j) table->grad.data[row * d + j] += g.data[j];
  });
}

int Tape::sub_const(int a, const Tensor& t) {
  const Tensor& va = value(a);
  MOSFUSE_CHECK(va.numel() == t.numel(), "sub_const: size mismatch");
  Tensor out = va;
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] -= t.data[i];
  return push(std::move(out), [a](Tape& tp, int self) {
    const Tensor& g = tp.nodes_[self].grad;
    Tensor& ga = tp.nodes_[a].grad;
    for (std::size_t i = 0; i < g.numel(); ++i) ga.data[i] += g.data[i];
  });
}

int Tape::mean_square(int a) {
  const Tensor& va = value(a);
  std::size_t n = va.numel();
  MOSFUSE_CHECK(n >= 1, "mean_square: empty");
  double acc = 0.0;
  for (double v : va.data) acc += v * v;
  return push(Tensor::scalar(acc / static_cast<double>(n)), [a, n](Tape& t, int self) {
    double g = t.nodes_[self].grad.data[0];
    const Tensor& x = t.nodes_[a].val;
    Tensor& ga = t.nodes_[a].grad;
    double c = 2.0 * g / static_cast<double>(n);
    for (std::size_t i = 0; i < x.numel(); ++i) ga.data[i] += c * x.data[i];
  });
}

int Tape::contrastive(int pred, const Tensor& targets, double alpha, bool ordered_pairs) {
  const Tensor& vp = value(pred);
  MOSFUSE_CHECK(vp.numel() == targets.numel(), "contrastive: length mismatch");
  MOSFUSE_CHECK(vp.numel() >= 1, "contrastive: empty batch");
  double loss = kernels::contrastive_hinge(targets.data.data(), vp.data.data(), vp.numel(),
                                           alpha, ordered_pairs);
  auto tgt = std::make_shared<Tensor>(targets);
  return push(Tensor::scalar(loss), [pred, tgt, alpha, ordered_pairs](Tape& t, int self) {
    double g = t.nodes_[self].grad.data[0];
    const Tensor& vp = t.nodes_[pred].val;
    Tensor gp({vp.numel()});
    kernels::contrastive_hinge_grad(tgt->data.data(), vp.data.data(), vp.numel(), alpha,
                                    ordered_pairs, gp.data.data());
    Tensor& ga = t.nodes_[pred].grad;
    for (std::size_t i = 0; i < gp.numel(); ++i) ga.data[i] += g * gp.data[i];
  });
}

void Tape::backward(int loss_id) {
  MOSFUSE_CHECK(loss_id >= 0 && loss_id < static_cast<int>(nodes_.size()), "backward: bad id");
  MOSFUSE_CHECK(nodes_[loss_id].val.numel() == 1, "backward: loss must be scalar");
  for (Node& n : nodes_) n.grad = Tensor(n.val.shape, 0.0);
  nodes_[loss_id].grad.data[0] = 1.0;
  for (int i = loss_id; i >= 0; --i)
    if (nodes_[i].back) nodes_[i].back(*this, i);
  for (Node& n : nodes_)
    if (n.bound)
      for (std::size_t i = 0; i < n.grad.numel(); ++i) n.bound->grad.data[i] += n.grad.data[i];
}


}  // namespace mosfuse
