/* Copyright 2026 The iterfeed Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef ITERFEED_AUTODIFF_HPP_
#define ITERFEED_AUTODIFF_HPP_

// Reverse-mode autodiff on a per-batch tape. Graphs are built define-by-run;
// parameters are leafed as views (no copy) and receive gradient accumulation
// on backward(). A frozen parameter (trainable == false) never produces a
// weight gradient, which is what the phase-wise training isolation relies on.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <memory>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "iterfeed/common.hpp"
#include "iterfeed/tensor.hpp"

namespace iterfeed {

template <class S>
struct Parameter {
  std::string name;
  Tensor<S> value;
  Tensor<S> grad;
  bool trainable = true;

  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), S(0)); }
  std::int64_t size() const { return value.size(); }
};

template <class S>
class Tape;

template <class S>
struct Var {
  Tape<S>* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Tensor<S>& value() const;
  const Shape& shape() const { return value().shape; }
};

template <class S>
using EigenMat =
    Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using MatMap = Eigen::Map<EigenMat<S>>;
template <class S>
using ConstMatMap = Eigen::Map<const EigenMat<S>>;

template <class S>
class Tape {
 public:
  struct Node {
    Tensor<S> value;
    const Tensor<S>* view = nullptr;  // set for parameter leaves
    Tensor<S> grad;
    bool requires_grad = false;
    bool grad_set = false;
    std::vector<int> parents;
    std::function<void(Tape&, int)> back;
    Parameter<S>* param = nullptr;
  };

  const Tensor<S>& val(int id) const {
    const Node& n = nodes_[id];
    return n.view ? *n.view : n.value;
  }

  Tensor<S>& grad_buf(int id) {
    Node& n = nodes_[id];
    if (!n.grad_set) {
      n.grad = Tensor<S>::zeros(val(id).shape);
      n.grad_set = true;
    }
    return n.grad;
  }

  void accumulate(int id, const Tensor<S>& g) {
    Tensor<S>& dst = grad_buf(id);
    for (std::int64_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
  }

  std::size_t num_nodes() const { return nodes_.size(); }

  // ---- graph construction -------------------------------------------------

  Var<S> leaf(Parameter<S>& p) {
    Node n;
    n.view = &p.value;
    n.param = &p;
    n.requires_grad = p.trainable;
    touched_.insert(p.name);
    if (p.trainable) {
      n.back = [](Tape& t, int id) {
        Node& self = t.nodes_[id];
        Parameter<S>* par = self.param;
        if (par->grad.size() != par->value.size())
          par->grad = Tensor<S>::zeros(par->value.shape);
        for (std::int64_t i = 0; i < self.grad.size(); ++i)
          par->grad[i] += self.grad[i];
        t.grad_received_.insert(par->name);
      };
    }
    return push(std::move(n));
  }

  Var<S> input(Tensor<S> v) {
    Node n;
    n.value = std::move(v);
    return push(std::move(n));
  }

  Var<S> scalar(S v) { return input(Tensor<S>::scalar(v)); }

  // ---- elementwise --------------------------------------------------------

  Var<S> add(Var<S> a, Var<S> b) {
    check_same(a, b, "add");
    Tensor<S> out = val(a.id);
    const Tensor<S>& bv = val(b.id);
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    return make(std::move(out), {a.id, b.id}, [](Tape& t, int id) {
      Node& self = t.nodes_[id];
      for (int p : self.parents)
        if (t.nodes_[p].requires_grad) t.accumulate(p, self.grad);
    });
  }

  Var<S> sub(Var<S> a, Var<S> b) {
    check_same(a, b, "sub");
    Tensor<S> out = val(a.id);
    const Tensor<S>& bv = val(b.id);
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    return make(std::move(out), {a.id, b.id}, [](Tape& t, int id) {
      Node& self = t.nodes_[id];
      if (t.nodes_[self.parents[0]].requires_grad)
        t.accumulate(self.parents[0], self.grad);
      if (t.nodes_[self.parents[1]].requires_grad) {
        Tensor<S>& dst = t.grad_buf(self.parents[1]);
        for (std::int64_t i = 0; i < dst.size(); ++i) dst[i] -= self.grad[i];
      }
    });
  }

  Var<S> mul(Var<S> a, Var<S> b) {
    check_same(a, b, "mul");
    Tensor<S> out = val(a.id);
    const Tensor<S>& bv = val(b.id);
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    return make(std::move(out), {a.id, b.id}, [](Tape& t, int id) {
      Node& self = t.nodes_[id];
      int pa = self.parents[0], pb = self.parents[1];
      const Tensor<S>& av = t.val(pa);
      const Tensor<S>& bv2 = t.val(pb);
      if (t.nodes_[pa].requires_grad) {
        Tensor<S>& dst = t.grad_buf(pa);
        for (std::int64_t i = 0; i < dst.size(); ++i)
          dst[i] += self.grad[i] * bv2[i];
      }
      if (t.nodes_[pb].requires_grad) {
        Tensor<S>& dst = t.grad_buf(pb);
        for (std::int64_t i = 0; i < dst.size(); ++i)
          dst[i] += self.grad[i] * av[i];
      }
    });
  }

  Var<S> div(Var<S> a, Var<S> b) {
    check_same(a, b, "div");
    Tensor<S> out = val(a.id);
    const Tensor<S>& bv = val(b.id);
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] /= bv[i];
    return make(std::move(out), {a.id, b.id}, [](Tape& t, int id) {
      Node& self = t.nodes_[id];
      int pa = self.parents[0], pb = self.parents[1];
      const Tensor<S>& av = t.val(pa);
      const Tensor<S>& bv2 = t.val(pb);
      if (t.nodes_[pa].requires_grad) {
        Tensor<S>& dst = t.grad_buf(pa);
        for (std::int64_t i = 0; i < dst.size(); ++i)
          dst[i] += self.grad[i] / bv2[i];
      }
      if (t.nodes_[pb].requires_grad) {
        Tensor<S>& dst = t.grad_buf(pb);
        for (std::int64_t i = 0; i < dst.size(); ++i)
          dst[i] -= self.grad[i] * av[i] / (bv2[i] * bv2[i]);
      }
    });
  }

  // out = x * mul_c + add_c
  Var<S> affine(Var<S> x, S mul_c, S add_c) {
    Tensor<S> out = val(x.id);
    for (std::int64_t i = 0; i < out.size(); ++i)
      out[i] = out[i] * mul_c + add_c;
    return make(std::move(out), {x.id}, [mul_c](Tape& t, int id) {
      Node& self = t.nodes_[id];
      int p = self.parents[0];
      if (!t.nodes_[p].requires_grad) return;
      Tensor<S>& dst = t.grad_buf(p);
      for (std::int64_t i = 0; i < dst.size(); ++i)
        dst[i] += self.grad[i] * mul_c;
    });
  }

  Var<S> neg(Var<S> x) { return affine(x, S(-1), S(0)); }
  Var<S> scale(Var<S> x, S c) { return affine(x, c, S(0)); }

  Var<S> tanh_(Var<S> x) {
    Tensor<S> out = val(x.id);
    for (auto& v : out.data) v = std::tanh(v);
    return unary_from_output(std::move(out), x, [](S y, S g) {
      return g * (S(1) - y * y);
    });
  }

  Var<S> sigmoid_(Var<S> x) {
    Tensor<S> out = val(x.id);
    for (auto& v : out.data)
      v = v >= S(0) ? S(1) / (S(1) + std::exp(-v))
                    : std::exp(v) / (S(1) + std::exp(v));
    return unary_from_output(std::move(out), x, [](S y, S g) {
      return g * y * (S(1) - y);
    });
  }

  Var<S> relu_(Var<S> x) {
    Tensor<S> out = val(x.id);
    for (auto& v : out.data) v = v > S(0) ? v : S(0);
    return make(std::move(out), {x.id}, [](Tape& t, int id) {
      Node& self = t.nodes_[id];
      int p = self.parents[0];
      if (!t.nodes_[p].requires_grad) return;
      const Tensor<S>& xv = t.val(p);
      Tensor<S>& dst = t.grad_buf(p);
      for (std::int64_t i = 0; i < dst.size(); ++i)
        if (xv[i] > S(0)) dst[i] += self.grad[i];
    });
  }

  Var<S> exp_(Var<S> x) {
    Tensor<S> out = val(x.id);
    for (auto& v : out.data) v = std::exp(v);
    return unary_from_output(std::move(out), x, [](S y, S g) { return g * y; });
  }

  Var<S> log_(Var<S> x) {
    Tensor<S> out = val(x.id);
    for (auto& v : out.data) v = std::log(v);
    return make(std::move(out), {x.id}, [](Tape& t, int id) {
      Node& self = t.nodes_[id];
      int p = self.parents[0];
      if (!t.nodes_[p].requires_grad) return;
      const Tensor<S>& xv = t.val(p);
      Tensor<S>& dst = t.grad_buf(p);
      for (std::int64_t i = 0; i < dst.size(); ++i)
        dst[i] += self.grad[i] / xv[i];
    });
  }

  Var<S> clamp_(Var<S> x, S lo, S hi) {
    Tensor<S> out = val(x.id);
    for (auto& v : out.data) v = std::min(hi, std::max(lo, v));
    return make(std::move(out), {x.id}, [lo, hi](Tape& t, int id) {
      Node& self = t.nodes_[id];
      int p = self.parents[0];
      if (!t.nodes_[p].requires_grad) return;
      const Tensor<S>& xv = t.val(p);
      Tensor<S>& dst = t.grad_buf(p);
      for (std::int64_t i = 0; i < dst.size(); ++i)
        if (xv[i] > lo && xv[i] < hi) dst[i] += self.grad[i];
    });
  }

  // ---- linear algebra -----------------------------------------------------

  Var<S> matmul(Var<S> a, Var<S> b, bool trans_a = false,
                bool trans_b = false) {
    const Tensor<S>& av = val(a.id);
    const Tensor<S>& bv = val(b.id);
    if (av.rank() != 2 || bv.rank() != 2)
      throw DataError("matmul: expects rank-2, got " + shape_str(av.shape) +
                      " x " + shape_str(bv.shape));
    int m = trans_a ? av.cols() : av.rows();
    int k = trans_a ? av.rows() : av.cols();
    int kb = trans_b ? bv.cols() : bv.rows();
    int n = trans_b ? bv.rows() : bv.cols();
    if (k != kb)
      throw DataError("matmul: inner dim mismatch " + shape_str(av.shape) +
                      " x " + shape_str(bv.shape));
    Tensor<S> out(Shape{m, n});
    ConstMatMap<S> A(av.data.data(), av.rows(), av.cols());
    ConstMatMap<S> B(bv.data.data(), bv.rows(), bv.cols());
    MatMap<S> C(out.data.data(), m, n);
    if (!trans_a && !trans_b)
      C.noalias() = A * B;
    else if (trans_a && !trans_b)
      C.noalias() = A.transpose() * B;
    else if (!trans_a && trans_b)
      C.noalias() = A * B.transpose();
    else
      C.noalias() = A.transpose() * B.transpose();
    return make(std::move(out), {a.id, b.id},
                [trans_a, trans_b](Tape& t, int id) {
                  Node& self = t.nodes_[id];
                  int pa = self.parents[0], pb = self.parents[1];
                  const Tensor<S>& av2 = t.val(pa);
                  const Tensor<S>& bv2 = t.val(pb);
                  ConstMatMap<S> A(av2.data.data(), av2.rows(), av2.cols());
                  ConstMatMap<S> B(bv2.data.data(), bv2.rows(), bv2.cols());
                  ConstMatMap<S> G(self.grad.data.data(), self.grad.rows(),
                                   self.grad.cols());
                  if (t.nodes_[pa].requires_grad) {
                    Tensor<S>& da = t.grad_buf(pa);
                    MatMap<S> DA(da.data.data(), da.rows(), da.cols());
                    if (!trans_a && !trans_b)
                      DA.noalias() += G * B.transpose();
                    else if (trans_a && !trans_b)
                      DA.noalias() += B * G.transpose();
                    else if (!trans_a && trans_b)
                      DA.noalias() += G * B;
                    else
                      DA.noalias() += B.transpose() * G.transpose();
                  }
                  if (t.nodes_[pb].requires_grad) {
                    Tensor<S>& db = t.grad_buf(pb);
                    MatMap<S> DB(db.data.data(), db.rows(), db.cols());
                    if (!trans_a && !trans_b)
                      DB.noalias() += A.transpose() * G;
                    else if (trans_a && !trans_b)
                      DB.noalias() += A * G;
                    else if (!trans_a && trans_b)
                      DB.noalias() += G.transpose() * A;
                    else
                      DB.noalias() += G.transpose() * A.transpose();
                  }
                });
  }

  // M [m,n] + broadcast row r (n elements).
  Var<S> add_row(Var<S> m, Var<S> r) {
    const Tensor<S>& mv = val(m.id);
    const Tensor<S>& rv = val(r.id);
    if (mv.rank() != 2 || rv.size() != mv.cols())
      throw DataError("add_row: shape mismatch " + shape_str(mv.shape) +
                      " + " + shape_str(rv.shape));
    Tensor<S> out = mv;
    int rows = mv.rows(), cols = mv.cols();
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) out.at2(i, j) += rv[j];
    return make(std::move(out), {m.id, r.id}, [](Tape& t, int id) {
      Node& self = t.nodes_[id];
      int pm = self.parents[0], pr = self.parents[1];
      if (t.nodes_[pm].requires_grad) t.accumulate(pm, self.grad);
      if (t.nodes_[pr].requires_grad) {
        Tensor<S>& dr = t.grad_buf(pr);
        int rows = self.grad.rows(), cols = self.grad.cols();
        for (int i = 0; i < rows; ++i)
          for (int j = 0; j < cols; ++j) dr[j] += self.grad.at2(i, j);
      }
    });
  }

  // ---- shape ops ----------------------------------------------------------

  Var<S> reshape(Var<S> x, Shape sh) {
    Tensor<S> out = reshaped(val(x.id), sh);
    return make(std::move(out), {x.id}, [](Tape& t, int id) {
      Node& self = t.nodes_[id];
      int p = self.parents[0];
      if (!t.nodes_[p].requires_grad) return;
      Tensor<S>& dst = t.grad_buf(p);
      for (std::int64_t i = 0; i < dst.size(); ++i) dst[i] += self.grad[i];
    });
  }

  Var<S> slice_cols(Var<S> x, int c0, int c1) {
    const Tensor<S>& xv = val(x.id);
    if (xv.rank() != 2 || c0 < 0 || c1 > xv.cols() || c0 >= c1)
      throw DataError("slice_cols: bad range on " + shape_str(xv.shape));
    int rows = xv.rows(), w = c1 - c0;
    Tensor<S> out(Shape{rows, w});
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < w; ++j) out.at2(i, j) = xv.at2(i, c0 + j);
    return make(std::move(out), {x.id}, [c0](Tape& t, int id) {
      Node& self = t.nodes_[id];
      int p = self.parents[0];
      if (!t.nodes_[p].requires_grad) return;
      Tensor<S>& dst = t.grad_buf(p);
      int rows = self.grad.rows(), w = self.grad.cols();
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < w; ++j) dst.at2(i, c0 + j) += self.grad.at2(i, j);
    });
  }

  Var<S> row(Var<S> x, int r) {
    const Tensor<S>& xv = val(x.id);
    if (xv.rank() != 2 || r < 0 || r >= xv.rows())
      throw DataError("row: bad index on " + shape_str(xv.shape));
    int cols = xv.cols();
    Tensor<S> out(Shape{1, cols});
    for (int j = 0; j < cols; ++j) out[j] = xv.at2(r, j);
    return make(std::move(out), {x.id}, [r](Tape& t, int id) {
      Node& self = t.nodes_[id];
      int p = self.parents[0];
      if (!t.nodes_[p].requires_grad) return;
      Tensor<S>& dst = t.grad_buf(p);
      for (std::int64_t j = 0; j < self.grad.size(); ++j)
        dst.at2(r, static_cast<int>(j)) += self.grad[j];
    });
  }

  Var<S> concat_cols(const std::vector<Var<S>>& parts) {
    if (parts.empty()) throw DataError("concat_cols: empty");
    int total = 0;
    for (const auto& v : parts) {
      const Tensor<S>& t = val(v.id);
      if (t.rank() != 2 || t.rows() != 1)
        throw DataError("concat_cols: expects [1,n] rows, got " +
                        shape_str(t.shape));
      total += t.cols();
    }
    Tensor<S> out(Shape{1, total});
    std::vector<int> ids;
    int off = 0;
    for (const auto& v : parts) {
      const Tensor<S>& t = val(v.id);
      for (int j = 0; j < t.cols(); ++j) out[off + j] = t[j];
      off += t.cols();
      ids.push_back(v.id);
    }
    return make(std::move(out), ids, [](Tape& t, int id) {
      Node& self = t.nodes_[id];
      int off = 0;
      for (int p : self.parents) {
        int w = t.val(p).cols();
        if (t.nodes_[p].requires_grad) {
          Tensor<S>& dst = t.grad_buf(p);
          for (int j = 0; j < w; ++j) dst[j] += self.grad[off + j];
        }
        off += w;
      }
    });
  }

  Var<S> vstack(const std::vector<Var<S>>& rows) {
    if (rows.empty()) throw DataError("vstack: empty");
    int cols = val(rows[0].id).cols();
    Tensor<S> out(Shape{static_cast<int>(rows.size()), cols});
    std::vector<int> ids;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const Tensor<S>& t = val(rows[i].id);
      if (t.rank() != 2 || t.rows() != 1 || t.cols() != cols)
        throw DataError("vstack: ragged row " + shape_str(t.shape));
      for (int j = 0; j < cols; ++j) out.at2(static_cast<int>(i), j) = t[j];
      ids.push_back(rows[i].id);
    }
    return make(std::move(out), ids, [](Tape& t, int id) {
      Node& self = t.nodes_[id];
      int cols = self.grad.cols();
      for (std::size_t i = 0; i < self.parents.size(); ++i) {
        int p = self.parents[i];
        if (!t.nodes_[p].requires_grad) continue;
        Tensor<S>& dst = t.grad_buf(p);
        for (int j = 0; j < cols; ++j)
          dst[j] += self.grad.at2(static_cast<int>(i), j);
      }
    });
  }

  // ---- reductions / distributions -----------------------------------------

  Var<S> sum_all(Var<S> x) {
    const Tensor<S>& xv = val(x.id);
    S acc = 0;
    for (const S& v : xv.data) acc += v;
    Tensor<S> out = Tensor<S>::scalar(acc);
    out.shape = Shape{1, 1};
    return make(std::move(out), {x.id}, [](Tape& t, int id) {
      Node& self = t.nodes_[id];
      int p = self.parents[0];
      if (!t.nodes_[p].requires_grad) return;
      Tensor<S>& dst = t.grad_buf(p);
      S g = self.grad[0];
      for (auto& v : dst.data) v += g;
    });
  }

  // Softmax over all elements, shape preserved.
  Var<S> softmax(Var<S> x) {
    Tensor<S> out = val(x.id);
    S mx = out.max_value();
    S denom = 0;
    for (auto& v : out.data) {
      v = std::exp(v - mx);
      denom += v;
    }
    for (auto& v : out.data) v /= denom;
    return make(std::move(out), {x.id}, [](Tape& t, int id) {
      Node& self = t.nodes_[id];
      int p = self.parents[0];
      if (!t.nodes_[p].requires_grad) return;
      const Tensor<S>& y = t.val(id);
      S dot = 0;
      for (std::int64_t i = 0; i < y.size(); ++i) dot += self.grad[i] * y[i];
      Tensor<S>& dst = t.grad_buf(p);
      for (std::int64_t i = 0; i < dst.size(); ++i)
        dst[i] += y[i] * (self.grad[i] - dot);
    });
  }

  // Log-softmax over all elements, shape preserved.
  Var<S> log_softmax(Var<S> x) {
    Tensor<S> out = val(x.id);
    S mx = out.max_value();
    S denom = 0;
    for (const auto& v : out.data) denom += std::exp(v - mx);
    S lse = mx + std::log(denom);
    for (auto& v : out.data) v -= lse;
    return make(std::move(out), {x.id}, [](Tape& t, int id) {
      Node& self = t.nodes_[id];
      int p = self.parents[0];
      if (!t.nodes_[p].requires_grad) return;
      const Tensor<S>& y = t.val(id);
      S gsum = 0;
      for (std::int64_t i = 0; i < self.grad.size(); ++i)
        gsum += self.grad[i];
      Tensor<S>& dst = t.grad_buf(p);
      for (std::int64_t i = 0; i < dst.size(); ++i)
        dst[i] += self.grad[i] - std::exp(y[i]) * gsum;
    });
  }

  // Single element by flat index, as a [1,1] scalar.
  Var<S> pick(Var<S> x, std::int64_t index) {
    const Tensor<S>& xv = val(x.id);
    if (index < 0 || index >= xv.size())
      throw DataError("pick: index out of range");
    Tensor<S> out(Shape{1, 1});
    out[0] = xv[index];
    return make(std::move(out), {x.id}, [index](Tape& t, int id) {
      Node& self = t.nodes_[id];
      int p = self.parents[0];
      if (!t.nodes_[p].requires_grad) return;
      t.grad_buf(p)[index] += self.grad[0];
    });
  }

  // ---- convolution (HWC x [kh,kw,cin,cout]) --------------------------------

  Var<S> conv2d(Var<S> x, Var<S> w, Var<S> b, int stride_h, int stride_w,
                int pad) {
    const Tensor<S>& xv = val(x.id);
    const Tensor<S>& wv = val(w.id);
    if (xv.rank() != 3 || wv.rank() != 4)
      throw DataError("conv2d: bad ranks " + shape_str(xv.shape) + ", " +
                      shape_str(wv.shape));
    int h = xv.shape[0], wd = xv.shape[1], cin = xv.shape[2];
    int kh = wv.shape[0], kw = wv.shape[1], cout = wv.shape[3];
    if (wv.shape[2] != cin)
      throw DataError("conv2d: channel mismatch " + shape_str(xv.shape) +
                      " vs " + shape_str(wv.shape));
    int ho = (h + 2 * pad - kh) / stride_h + 1;
    int wo = (wd + 2 * pad - kw) / stride_w + 1;
    int patch = kh * kw * cin;

    auto col = std::make_shared<Tensor<S>>(Shape{ho * wo, patch});
    im2col(xv, kh, kw, stride_h, stride_w, pad, ho, wo, *col);

    Tensor<S> out(Shape{ho, wo, cout});
    ConstMatMap<S> C(col->data.data(), ho * wo, patch);
    ConstMatMap<S> W(wv.data.data(), patch, cout);
    MatMap<S> O(out.data.data(), ho * wo, cout);
    O.noalias() = C * W;
    const Tensor<S>& bv = val(b.id);
    for (int i = 0; i < ho * wo; ++i)
      for (int c = 0; c < cout; ++c) out[i * cout + c] += bv[c];

    auto backfn = [col, kh, kw, stride_h, stride_w, pad, ho, wo,
                   patch](Tape& t, int id) {
      Node& self = t.nodes_[id];
      int px = self.parents[0], pw = self.parents[1], pb = self.parents[2];
      int cout = self.grad.shape[2];
      ConstMatMap<S> G(self.grad.data.data(), ho * wo, cout);
      if (t.nodes_[pw].requires_grad) {
        Tensor<S>& dw = t.grad_buf(pw);
        MatMap<S> DW(dw.data.data(), patch, cout);
        ConstMatMap<S> C(col->data.data(), ho * wo, patch);
        DW.noalias() += C.transpose() * G;
      }
      if (t.nodes_[pb].requires_grad) {
        Tensor<S>& db = t.grad_buf(pb);
        for (int i = 0; i < ho * wo; ++i)
          for (int c = 0; c < cout; ++c) db[c] += self.grad[i * cout + c];
      }
      if (t.nodes_[px].requires_grad) {
        const Tensor<S>& wv2 = t.val(pw);
        ConstMatMap<S> W(wv2.data.data(), patch, cout);
        Tensor<S> dcol(Shape{ho * wo, patch});
        MatMap<S> DC(dcol.data.data(), ho * wo, patch);
        DC.noalias() = G * W.transpose();
        Tensor<S>& dx = t.grad_buf(px);
        col2im(dcol, kh, kw, stride_h, stride_w, pad, ho, wo, dx);
      }
    };
    return make(std::move(out), {x.id, w.id, b.id}, backfn);
  }

  Var<S> upsample_nearest(Var<S> x, int fh, int fw) {
    const Tensor<S>& xv = val(x.id);
    if (xv.rank() != 3) throw DataError("upsample: expects HWC");
    int h = xv.shape[0], w = xv.shape[1], c = xv.shape[2];
    Tensor<S> out(Shape{h * fh, w * fw, c});
    for (int i = 0; i < h * fh; ++i)
      for (int j = 0; j < w * fw; ++j)
        for (int k = 0; k < c; ++k)
          out.at3(i, j, k) = xv.at3(i / fh, j / fw, k);
    return make(std::move(out), {x.id}, [fh, fw](Tape& t, int id) {
      Node& self = t.nodes_[id];
      int p = self.parents[0];
      if (!t.nodes_[p].requires_grad) return;
      Tensor<S>& dst = t.grad_buf(p);
      int ho = self.grad.shape[0], wo = self.grad.shape[1],
          c = self.grad.shape[2];
      for (int i = 0; i < ho; ++i)
        for (int j = 0; j < wo; ++j)
          for (int k = 0; k < c; ++k)
            dst.at3(i / fh, j / fw, k) += self.grad.at3(i, j, k);
    });
  }

  // ---- backward -----------------------------------------------------------

  void backward(Var<S> root) {
    const Tensor<S>& rv = val(root.id);
    if (rv.size() != 1)
      throw DataError("backward: root must be scalar, got " +
                      shape_str(rv.shape));
    Tensor<S>& g = grad_buf(root.id);
    g[0] = S(1);
    for (int id = root.id; id >= 0; --id) {
      Node& n = nodes_[id];
      if (n.grad_set && n.requires_grad && n.back) n.back(*this, id);
    }
  }

  // Parameters whose values were read while building this tape.
  const std::set<std::string>& touched_params() const { return touched_; }
  // Parameters that received nonzero-capable gradient accumulation.
  const std::set<std::string>& grad_received_params() const {
    return grad_received_;
  }

  void clear() {
    nodes_.clear();
    touched_.clear();
    grad_received_.clear();
  }

 private:
  friend struct Var<S>;

  Var<S> push(Node n) {
    nodes_.push_back(std::move(n));
    return Var<S>{this, static_cast<int>(nodes_.size()) - 1};
  }

  Var<S> make(Tensor<S> value, std::vector<int> parents,
              std::function<void(Tape&, int)> back) {
    Node n;
    n.value = std::move(value);
    n.parents = std::move(parents);
    for (int p : n.parents)
      if (nodes_[p].requires_grad) n.requires_grad = true;
    if (n.requires_grad) n.back = std::move(back);
    return push(std::move(n));
  }

  template <class F>
  Var<S> unary_from_output(Tensor<S> out, Var<S> x, F dfn) {
    return make(std::move(out), {x.id}, [dfn](Tape& t, int id) {
      Node& self = t.nodes_[id];
      int p = self.parents[0];
      if (!t.nodes_[p].requires_grad) return;
      const Tensor<S>& y = t.val(id);
      Tensor<S>& dst = t.grad_buf(p);
      for (std::int64_t i = 0; i < dst.size(); ++i)
        dst[i] += dfn(y[i], self.grad[i]);
    });
  }

  void check_same(Var<S> a, Var<S> b, const char* op) {
    if (!val(a.id).same_shape(val(b.id)))
      throw DataError(std::string(op) + ": shape mismatch " +
                      shape_str(val(a.id).shape) + " vs " +
                      shape_str(val(b.id).shape));
  }

  static void im2col(const Tensor<S>& x, int kh, int kw, int sh, int sw,
                     int pad, int ho, int wo, Tensor<S>& col) {
    int h = x.shape[0], w = x.shape[1], cin = x.shape[2];
    std::int64_t idx = 0;
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        int iy0 = oy * sh - pad, ix0 = ox * sw - pad;
        for (int ky = 0; ky < kh; ++ky) {
          int iy = iy0 + ky;
          for (int kx = 0; kx < kw; ++kx) {
            int ix = ix0 + kx;
            if (iy >= 0 && iy < h && ix >= 0 && ix < w) {
              const S* src = &x.data[(static_cast<std::size_t>(iy) * w + ix) *
                                     cin];
              std::copy(src, src + cin, &col.data[idx]);
            } else {
              std::fill(&col.data[idx], &col.data[idx] + cin, S(0));
            }
            idx += cin;
          }
        }
      }
    }
  }

  static void col2im(const Tensor<S>& dcol, int kh, int kw, int sh, int sw,
                     int pad, int ho, int wo, Tensor<S>& dx) {
    int h = dx.shape[0], w = dx.shape[1], cin = dx.shape[2];
    std::int64_t idx = 0;
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        int iy0 = oy * sh - pad, ix0 = ox * sw - pad;
        for (int ky = 0; ky < kh; ++ky) {
          int iy = iy0 + ky;
          for (int kx = 0; kx < kw; ++kx) {
            int ix = ix0 + kx;
            if (iy >= 0 && iy < h && ix >= 0 && ix < w) {
              S* dst = &dx.data[(static_cast<std::size_t>(iy) * w + ix) * cin];
              const S* src = &dcol.data[idx];
              for (int c = 0; c < cin; ++c) dst[c] += src[c];
            }
            idx += cin;
          }
        }
      }
    }
  }

  std::vector<Node> nodes_;
  std::set<std::string> touched_;
  std::set<std::string> grad_received_;
};

template <class S>
const Tensor<S>& Var<S>::value() const {
  return tape->val(id);
}

}  // namespace iterfeed

#endif  // ITERFEED_AUTODIFF_HPP_
