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

#ifndef ITERFEED_NN_HPP_
#define ITERFEED_NN_HPP_

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "iterfeed/autodiff.hpp"
#include "iterfeed/rng.hpp"
#include "iterfeed/tensor.hpp"

namespace iterfeed {

// Named parameter registry. Iteration order is the sorted name order, which
// keeps optimizer sweeps and serialization deterministic. Initialization
// draws from a per-name RNG stream so construction order does not matter.
template <class S>
class ParameterStore {
 public:
  explicit ParameterStore(std::uint64_t init_seed = 0) : init_seed_(init_seed) {}

  Parameter<S>& create(const std::string& name, Shape shape,
                       const std::function<void(Rng&, Tensor<S>&)>& init) {
    if (params_.count(name))
      throw DataError("parameter already exists: " + name);
    auto p = std::make_unique<Parameter<S>>();
    p->name = name;
    p->value = Tensor<S>(shape);
    p->grad = Tensor<S>(shape);
    Rng rng(mix_seed(init_seed_, fnv1a(name)));
    init(rng, p->value);
    Parameter<S>& ref = *p;
    params_[name] = std::move(p);
    return ref;
  }

  Parameter<S>* find(const std::string& name) {
    auto it = params_.find(name);
    return it == params_.end() ? nullptr : it->second.get();
  }
  const Parameter<S>* find(const std::string& name) const {
    auto it = params_.find(name);
    return it == params_.end() ? nullptr : it->second.get();
  }

  template <class F>
  void for_each(F fn) {
    for (auto& [name, p] : params_) fn(*p);
  }
  template <class F>
  void for_each(F fn) const {
    for (const auto& [name, p] : params_) fn(*p);
  }

  template <class F>
  void for_each_prefix(const std::string& prefix, F fn) {
    for (auto it = params_.lower_bound(prefix); it != params_.end(); ++it) {
      if (it->first.compare(0, prefix.size(), prefix) != 0) break;
      fn(*it->second);
    }
  }

  void set_trainable(const std::string& prefix, bool trainable) {
    for_each_prefix(prefix, [&](Parameter<S>& p) { p.trainable = trainable; });
  }

  void set_all_trainable(bool trainable) {
    for (auto& [name, p] : params_) p->trainable = trainable;
  }

  void zero_grads() {
    for (auto& [name, p] : params_) p->zero_grad();
  }

  std::int64_t count_params(const std::string& prefix) const {
    std::int64_t n = 0;
    for (auto it = params_.lower_bound(prefix); it != params_.end(); ++it) {
      if (it->first.compare(0, prefix.size(), prefix) != 0) break;
      n += it->second->size();
    }
    return n;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& [name, p] : params_) out.push_back(name);
    return out;
  }

  std::size_t size() const { return params_.size(); }
  std::uint64_t init_seed() const { return init_seed_; }

 private:
  std::uint64_t init_seed_;
  std::map<std::string, std::unique_ptr<Parameter<S>>> params_;
};

// ---- initializers ----------------------------------------------------------

template <class S>
std::function<void(Rng&, Tensor<S>&)> init_zeros() {
  return [](Rng&, Tensor<S>& t) {
    std::fill(t.data.begin(), t.data.end(), S(0));
  };
}

template <class S>
std::function<void(Rng&, Tensor<S>&)> init_const(S v) {
  return [v](Rng&, Tensor<S>& t) {
    std::fill(t.data.begin(), t.data.end(), v);
  };
}

template <class S>
std::function<void(Rng&, Tensor<S>&)> init_glorot(int fan_in, int fan_out) {
  return [fan_in, fan_out](Rng& rng, Tensor<S>& t) {
    double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (auto& v : t.data) v = static_cast<S>(rng.uniform(-limit, limit));
  };
}

template <class S>
std::function<void(Rng&, Tensor<S>&)> init_uniform(double lo, double hi) {
  return [lo, hi](Rng& rng, Tensor<S>& t) {
    for (auto& v : t.data) v = static_cast<S>(rng.uniform(lo, hi));
  };
}

// LSTM bias with forget gate at 1 (gate order i,f,g,o over 4*h entries).
template <class S>
std::function<void(Rng&, Tensor<S>&)> init_lstm_bias(int hidden) {
  return [hidden](Rng&, Tensor<S>& t) {
    std::fill(t.data.begin(), t.data.end(), S(0));
    for (int i = hidden; i < 2 * hidden; ++i) t.data[i] = S(1);
  };
}

// ---- layers ----------------------------------------------------------------

template <class S>
struct Linear {
  Parameter<S>* w = nullptr;
  Parameter<S>* b = nullptr;

  Linear() = default;
  Linear(ParameterStore<S>& ps, const std::string& prefix, int in, int out,
         bool zero_init = false) {
    auto winit = zero_init ? init_zeros<S>() : init_glorot<S>(in, out);
    w = &ps.create(prefix + "/w", Shape{in, out}, winit);
    b = &ps.create(prefix + "/b", Shape{out}, init_zeros<S>());
  }

  Var<S> operator()(Tape<S>& t, Var<S> x) const {
    return t.add_row(t.matmul(x, t.leaf(*w)), t.leaf(*b));
  }
};

template <class S>
struct LSTMCell {
  Parameter<S>* wx = nullptr;  // [in, 4h]
  Parameter<S>* wh = nullptr;  // [h, 4h]
  Parameter<S>* b = nullptr;   // [4h]
  int hidden = 0;

  LSTMCell() = default;
  LSTMCell(ParameterStore<S>& ps, const std::string& prefix, int in, int h)
      : hidden(h) {
    wx = &ps.create(prefix + "/wx", Shape{in, 4 * h}, init_glorot<S>(in, 4 * h));
    wh = &ps.create(prefix + "/wh", Shape{h, 4 * h}, init_glorot<S>(h, 4 * h));
    b = &ps.create(prefix + "/b", Shape{4 * h}, init_lstm_bias<S>(h));
  }

  struct State {
    Var<S> h, c;
  };

  State zero_state(Tape<S>& t) const {
    return {t.input(Tensor<S>(Shape{1, hidden})),
            t.input(Tensor<S>(Shape{1, hidden}))};
  }

  State step(Tape<S>& t, Var<S> x, const State& s) const {
    Var<S> gates = t.add_row(
        t.add(t.matmul(x, t.leaf(*wx)), t.matmul(s.h, t.leaf(*wh))),
        t.leaf(*b));
    Var<S> i = t.sigmoid_(t.slice_cols(gates, 0, hidden));
    Var<S> f = t.sigmoid_(t.slice_cols(gates, hidden, 2 * hidden));
    Var<S> g = t.tanh_(t.slice_cols(gates, 2 * hidden, 3 * hidden));
    Var<S> o = t.sigmoid_(t.slice_cols(gates, 3 * hidden, 4 * hidden));
    Var<S> c = t.add(t.mul(f, s.c), t.mul(i, g));
    Var<S> h = t.mul(o, t.tanh_(c));
    return {h, c};
  }
};

// Bidirectional LSTM over a [L, in] sequence; output [L, 2h].
template <class S>
struct BiLSTM {
  LSTMCell<S> fwd, bwd;

  BiLSTM() = default;
  BiLSTM(ParameterStore<S>& ps, const std::string& prefix, int in, int h)
      : fwd(ps, prefix + "/fwd", in, h), bwd(ps, prefix + "/bwd", in, h) {}

  struct Encoded {
    Var<S> outputs;      // [L, 2h]
    Var<S> final_state;  // [1, 2h]: last forward h ++ last backward h
  };

  Encoded encode(Tape<S>& t, Var<S> x) const {
    int L = t.val(x.id).rows();
    std::vector<Var<S>> hf(L), hb(L);
    auto sf = fwd.zero_state(t);
    for (int i = 0; i < L; ++i) {
      sf = fwd.step(t, t.row(x, i), sf);
      hf[i] = sf.h;
    }
    auto sb = bwd.zero_state(t);
    for (int i = L - 1; i >= 0; --i) {
      sb = bwd.step(t, t.row(x, i), sb);
      hb[i] = sb.h;
    }
    std::vector<Var<S>> rows(L);
    for (int i = 0; i < L; ++i) rows[i] = t.concat_cols({hf[i], hb[i]});
    return {t.vstack(rows), t.concat_cols({sf.h, sb.h})};
  }
};

template <class S>
struct Conv2d {
  Parameter<S>* w = nullptr;  // [kh, kw, cin, cout]
  Parameter<S>* b = nullptr;  // [cout]
  int stride_h = 1, stride_w = 1, pad = 1;

  Conv2d() = default;
  Conv2d(ParameterStore<S>& ps, const std::string& prefix, int kh, int kw,
         int cin, int cout, int sh, int sw, int pad_, bool zero_init = false)
      : stride_h(sh), stride_w(sw), pad(pad_) {
    auto winit = zero_init ? init_zeros<S>()
                           : init_glorot<S>(kh * kw * cin, kh * kw * cout);
    w = &ps.create(prefix + "/w", Shape{kh, kw, cin, cout}, winit);
    b = &ps.create(prefix + "/b", Shape{cout}, init_zeros<S>());
  }

  Var<S> operator()(Tape<S>& t, Var<S> x) const {
    return t.conv2d(x, t.leaf(*w), t.leaf(*b), stride_h, stride_w, pad);
  }
};

// Two-layer MLP with tanh nonlinearity after the hidden layer.
template <class S>
struct Mlp2 {
  Linear<S> l1, l2;

  Mlp2() = default;
  Mlp2(ParameterStore<S>& ps, const std::string& prefix, int in, int hidden,
       int out)
      : l1(ps, prefix + "/l1", in, hidden), l2(ps, prefix + "/l2", hidden, out) {}

  Var<S> operator()(Tape<S>& t, Var<S> x) const {
    return l2(t, t.tanh_(l1(t, x)));
  }
};

// Token embedding backed by a [vocab, dim] table.
template <class S>
struct Embedding {
  Parameter<S>* table = nullptr;

  Embedding() = default;
  Embedding(ParameterStore<S>& ps, const std::string& prefix, int vocab,
            int dim) {
    table = &ps.create(prefix + "/table", Shape{vocab, dim},
                       init_uniform<S>(-0.1, 0.1));
  }

  Var<S> operator()(Tape<S>& t, int token) const {
    return t.row(t.leaf(*table), token);
  }
};

}  // namespace iterfeed

#endif  // ITERFEED_NN_HPP_
