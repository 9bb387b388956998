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

#include <gtest/gtest.h>

#include <cmath>

#include "iterfeed/autodiff.hpp"
#include "iterfeed/nn.hpp"
#include "iterfeed/rng.hpp"
#include "iterfeed/tensor.hpp"
#include "test_util.hpp"

namespace iterfeed {
namespace {

using testing::fd_max_rel_err;
using testing::random_tensor;

TEST(Tensor, BasicsAndReshape) {
  Tensor<float> t(Shape{2, 3}, 1.5f);
  EXPECT_EQ(t.size(), 6);
  t.at2(1, 2) = -4.0f;
  EXPECT_EQ(t.min_value(), -4.0f);
  Tensor<float> r = reshaped(t, Shape{3, 2});
  EXPECT_EQ(r.shape, (Shape{3, 2}));
  EXPECT_THROW(reshaped(t, Shape{4, 2}), DataError);
}

TEST(Rng, DeterministicStreams) {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    double va = a.uniform();
    EXPECT_EQ(va, b.uniform());
    (void)c.uniform();
  }
  Rng d(7);
  double mean = 0;
  int n = 20000;
  for (int i = 0; i < n; ++i) mean += d.normal();
  mean /= n;
  EXPECT_NEAR(mean, 0.0, 0.05);
}

TEST(Autodiff, MatmulValue) {
  Tape<double> t;
  Var<double> a = t.input(Tensor<double>(Shape{2, 2}, {1, 2, 3, 4}));
  Var<double> b = t.input(Tensor<double>(Shape{2, 2}, {5, 6, 7, 8}));
  Var<double> c = t.matmul(a, b);
  EXPECT_EQ(c.value().at2(0, 0), 19);
  EXPECT_EQ(c.value().at2(0, 1), 22);
  EXPECT_EQ(c.value().at2(1, 0), 43);
  EXPECT_EQ(c.value().at2(1, 1), 50);
  Var<double> ct = t.matmul(a, b, true, false);
  EXPECT_EQ(ct.value().at2(0, 0), 1 * 5 + 3 * 7);
}

TEST(Autodiff, SoftmaxSumsToOne) {
  Rng rng(1);
  Tape<double> t;
  Var<double> x = t.input(random_tensor(Shape{1, 13}, rng, 4.0));
  Var<double> y = t.softmax(x);
  double sum = 0;
  for (double v : y.value().data) {
    sum += v;
    EXPECT_GE(v, 0.0);
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(Autodiff, MatmulChainGradient) {
  ParameterStore<double> ps(3);
  Rng rng(2);
  auto& a = ps.create("a", Shape{3, 4}, init_glorot<double>(3, 4));
  auto& b = ps.create("b", Shape{4, 2}, init_glorot<double>(4, 2));
  Tensor<double> x = random_tensor(Shape{2, 3}, rng);
  auto loss = [&](bool bw) {
    Tape<double> t;
    Var<double> h = t.tanh_(t.matmul(t.input(x), t.leaf(a)));
    Var<double> y = t.matmul(h, t.leaf(b));
    Var<double> l = t.sum_all(t.mul(y, y));
    if (bw) t.backward(l);
    return l.value()[0];
  };
  EXPECT_LT(fd_max_rel_err(ps, {"a", "b"}, loss, 1e-5, 24), 1e-6);
}

TEST(Autodiff, Conv2dShapeAndGradient) {
  ParameterStore<double> ps(4);
  Rng rng(3);
  auto& w = ps.create("w", Shape{3, 3, 2, 4}, init_glorot<double>(18, 36));
  auto& b = ps.create("b", Shape{4}, init_uniform<double>(-0.1, 0.1));
  auto& xin = ps.create("x", Shape{6, 10, 2}, init_uniform<double>(-1, 1));
  auto loss = [&](bool bw) {
    Tape<double> t;
    Var<double> y = t.conv2d(t.leaf(xin), t.leaf(w), t.leaf(b), 2, 2, 1);
    EXPECT_EQ(y.value().shape, (Shape{3, 5, 4}));
    Var<double> l = t.sum_all(t.mul(y, y));
    if (bw) t.backward(l);
    return l.value()[0];
  };
  EXPECT_LT(fd_max_rel_err(ps, {"w", "b", "x"}, loss, 1e-5, 30), 1e-6);
}

TEST(Autodiff, UpsampleGradient) {
  ParameterStore<double> ps(5);
  auto& xin = ps.create("x", Shape{2, 3, 2}, init_uniform<double>(-1, 1));
  auto loss = [&](bool bw) {
    Tape<double> t;
    Var<double> y = t.upsample_nearest(t.leaf(xin), 2, 1);
    EXPECT_EQ(y.value().shape, (Shape{4, 3, 2}));
    Var<double> l = t.sum_all(t.mul(y, y));
    if (bw) t.backward(l);
    return l.value()[0];
  };
  EXPECT_LT(fd_max_rel_err(ps, {"x"}, loss, 1e-5, 12), 1e-7);
}

TEST(Autodiff, LogSoftmaxPickGradient) {
  ParameterStore<double> ps(6);
  auto& xin = ps.create("x", Shape{1, 9}, init_uniform<double>(-2, 2));
  auto loss = [&](bool bw) {
    Tape<double> t;
    Var<double> lp = t.log_softmax(t.leaf(xin));
    Var<double> l = t.neg(t.pick(lp, 4));
    if (bw) t.backward(l);
    return l.value()[0];
  };
  EXPECT_LT(fd_max_rel_err(ps, {"x"}, loss, 1e-6, 9), 1e-7);
}

TEST(Autodiff, LstmStepGradient) {
  ParameterStore<double> ps(7);
  LSTMCell<double> cell(ps, "lstm", 5, 4);
  Rng rng(8);
  Tensor<double> x0 = random_tensor(Shape{1, 5}, rng);
  Tensor<double> x1 = random_tensor(Shape{1, 5}, rng);
  auto loss = [&](bool bw) {
    Tape<double> t;
    auto s = cell.zero_state(t);
    s = cell.step(t, t.input(x0), s);
    s = cell.step(t, t.input(x1), s);
    Var<double> l = t.sum_all(t.mul(s.h, s.h));
    if (bw) t.backward(l);
    return l.value()[0];
  };
  EXPECT_LT(
      fd_max_rel_err(ps, {"lstm/wx", "lstm/wh", "lstm/b"}, loss, 1e-5, 20),
      1e-6);
}

TEST(Autodiff, BiLstmGradientAndShapes) {
  ParameterStore<double> ps(8);
  BiLSTM<double> enc(ps, "enc", 3, 4);
  Rng rng(9);
  Tensor<double> x = random_tensor(Shape{6, 3}, rng);
  auto loss = [&](bool bw) {
    Tape<double> t;
    auto out = enc.encode(t, t.input(x));
    EXPECT_EQ(out.outputs.value().shape, (Shape{6, 8}));
    EXPECT_EQ(out.final_state.value().shape, (Shape{1, 8}));
    Var<double> l = t.sum_all(t.mul(out.outputs, out.outputs));
    if (bw) t.backward(l);
    return l.value()[0];
  };
  EXPECT_LT(fd_max_rel_err(ps, {"enc/fwd/wx", "enc/bwd/wh"}, loss, 1e-5, 16),
            1e-6);
}

TEST(Autodiff, DivClampSliceGradient) {
  ParameterStore<double> ps(9);
  auto& a = ps.create("a", Shape{1, 8}, init_uniform<double>(0.5, 2.0));
  auto& b = ps.create("b", Shape{1, 8}, init_uniform<double>(0.5, 2.0));
  auto loss = [&](bool bw) {
    Tape<double> t;
    Var<double> q = t.div(t.leaf(a), t.leaf(b));
    Var<double> c = t.clamp_(q, 0.3, 3.0);
    Var<double> s = t.slice_cols(c, 2, 6);
    Var<double> l = t.sum_all(t.mul(s, s));
    if (bw) t.backward(l);
    return l.value()[0];
  };
  EXPECT_LT(fd_max_rel_err(ps, {"a", "b"}, loss, 1e-6, 8), 1e-6);
}

TEST(Autodiff, FrozenParameterGetsNoGradient) {
  ParameterStore<double> ps(10);
  auto& a = ps.create("a", Shape{2, 2}, init_glorot<double>(2, 2));
  auto& b = ps.create("b", Shape{2, 2}, init_glorot<double>(2, 2));
  b.trainable = false;
  ps.zero_grads();
  Tape<double> t;
  Var<double> y = t.matmul(t.leaf(a), t.leaf(b));
  Var<double> l = t.sum_all(t.mul(y, y));
  t.backward(l);
  EXPECT_TRUE(t.grad_received_params().count("a"));
  EXPECT_FALSE(t.grad_received_params().count("b"));
  for (double g : b.grad.data) EXPECT_EQ(g, 0.0);
  double asum = 0;
  for (double g : a.grad.data) asum += std::fabs(g);
  EXPECT_GT(asum, 0.0);
  EXPECT_TRUE(t.touched_params().count("b"));
}

TEST(Autodiff, VstackConcatRowGradient) {
  ParameterStore<double> ps(11);
  auto& m = ps.create("m", Shape{4, 3}, init_glorot<double>(4, 3));
  auto loss = [&](bool bw) {
    Tape<double> t;
    Var<double> lm = t.leaf(m);
    std::vector<Var<double>> rows;
    for (int i = 0; i < 4; ++i)
      rows.push_back(t.concat_cols({t.row(lm, i), t.row(lm, 3 - i)}));
    Var<double> s = t.vstack(rows);
    Var<double> l = t.sum_all(t.mul(s, s));
    if (bw) t.backward(l);
    return l.value()[0];
  };
  EXPECT_LT(fd_max_rel_err(ps, {"m"}, loss, 1e-6, 12), 1e-7);
}

TEST(ParameterStore, PrefixOpsAndDeterministicInit) {
  ParameterStore<double> ps(1234);
  ps.create("feedback/f_p/w", Shape{4}, init_glorot<double>(2, 2));
  ps.create("feedback/f_enc/w", Shape{4}, init_glorot<double>(2, 2));
  ps.create("recognizer/w", Shape{4}, init_glorot<double>(2, 2));
  EXPECT_EQ(ps.count_params("feedback/"), 8);
  EXPECT_EQ(ps.count_params(""), 12);
  ps.set_trainable("feedback/", false);
  EXPECT_FALSE(ps.find("feedback/f_p/w")->trainable);
  EXPECT_TRUE(ps.find("recognizer/w")->trainable);

  ParameterStore<double> ps2(1234);
  ps2.create("recognizer/w", Shape{4}, init_glorot<double>(2, 2));
  EXPECT_EQ(ps.find("recognizer/w")->value.data,
            ps2.find("recognizer/w")->value.data);
}

}  // namespace
}  // namespace iterfeed
