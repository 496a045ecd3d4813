// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The stochdiff Authors.
#include <gtest/gtest.h>

#include <cmath>

#include "reference.hpp"
#include "stochdiff/stochdiff.hpp"

using namespace stochdiff;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(r, c);
  for (auto& v : t.data) v = u(rng);
  return t;
}

ref::Vec vec(const Tensor& t) { return t.data; }

// Weighted sum so that every output entry gets a distinct gradient.
Var weighted_sum(Tape& tape, Var x) {
  Tensor w(x.rows(), x.cols());
  for (std::size_t k = 0; k < w.size(); ++k) w[k] = 0.3 + 0.1 * static_cast<double>(k % 7);
  return ad::sum(ad::mul(x, tape.constant(w)));
}

void expect_passes(const GradCheckReport& r) {
  EXPECT_TRUE(r.passed) << "max rel " << r.max_rel_error << " at " << r.worst_param << "[" << r.worst_index
                        << "] analytic " << r.worst_analytic << " numeric " << r.worst_numeric;
  EXPECT_GT(r.checked, 0u);
}

}  // namespace

TEST(Tensor, MatmulAndShapes) {
  Tensor a(2, 3, {1, 2, 3, 4, 5, 6});
  Tensor b(3, 2, {7, 8, 9, 10, 11, 12});
  EXPECT_EQ(matmul(a, b), Tensor(2, 2, {58, 64, 139, 154}));
  EXPECT_THROW(matmul(a, a), ShapeError);
  EXPECT_THROW(Tensor(2, 2, std::vector<double>{1, 2, 3}), ShapeError);
  EXPECT_EQ(transpose(a)(2, 1), 6.0);
}

TEST(Autodiff, ElementwiseOpsGradcheck) {
  Rng rng(1);
  ParameterSet ps;
  ps.add("a", random_tensor(2, 3, rng));
  ps.add("b", random_tensor(2, 3, rng, 0.5, 1.5));
  ps.add("r", random_tensor(1, 3, rng));
  const auto f = [](Tape& t, const ParameterSet& p) {
    Var a = t.param(p, "a"), b = t.param(p, "b"), r = t.param(p, "r");
    Var x = ad::add(ad::mul(ad::tanh(a), ad::sigmoid(b)), ad::div(ad::softplus(a), b));
    x = ad::add(x, ad::sub(ad::exp(ad::scale(a, 0.5)), ad::log(b)));
    x = ad::add(x, ad::sqrt(ad::add_scalar(ad::square(a), 1.0)));
    x = ad::add_row(x, r);
    x = ad::add(x, ad::clamp_min(b, 0.2));
    return weighted_sum(t, x);
  };
  expect_passes(gradient_check(f, ps));
}

TEST(Autodiff, StructuralOpsGradcheck) {
  Rng rng(2);
  ParameterSet ps;
  ps.add("a", random_tensor(3, 4, rng));
  ps.add("b", random_tensor(4, 2, rng));
  ps.add("c", random_tensor(3, 1, rng));
  const auto f = [](Tape& t, const ParameterSet& p) {
    Var a = t.param(p, "a"), b = t.param(p, "b"), c = t.param(p, "c");
    Var m = ad::matmul(a, b);                                       // 3x2
    Var cat = ad::concat_cols(m, ad::broadcast_cols(c, 3));         // 3x5
    Var sl = ad::slice_cols(cat, 1, 3);                             // 3x3
    Var sm = ad::softmax_rows(ad::matmul(sl, ad::transpose(sl)));   // 3x3
    return weighted_sum(t, ad::add(ad::matmul(sm, a), ad::relu(ad::add_scalar(a, 0.1))));
  };
  expect_passes(gradient_check(f, ps));
}

TEST(Autodiff, SharedSubexpressionAccumulates) {
  ParameterSet ps;
  ps.add("x", Tensor(1, 1, 3.0));
  Tape tape;
  Var x = tape.param(ps, "x");
  Var y = ad::mul(x, x);  // x^2, x used twice
  Var z = ad::add(y, x);  // x^2 + x
  tape.backward(z);
  EXPECT_DOUBLE_EQ(tape.grad(x)(0, 0), 7.0);
}

TEST(Autodiff, NonRecordingTapeRefusesBackward) {
  Tape tape(false);
  Var x = tape.constant(Tensor(1, 1, 2.0));
  EXPECT_THROW(tape.backward(x), std::logic_error);
}

TEST(Lstm, MatchesReferenceAndGradcheck) {
  Rng rng(3);
  ParameterSet ps;
  const LstmSpec spec{"lstm", 3, 4};
  add_lstm_params(ps, spec, rng);
  const Tensor x = random_tensor(1, 3, rng), h = random_tensor(1, 4, rng), c = random_tensor(1, 4, rng);
  const LstmState out = lstm_step(x, {h, c}, ps, spec);
  const auto r = ref::lstm(vec(x), vec(h), vec(c), ps, "lstm");
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_NEAR(out.h[k], r.h[k], 1e-12);
    EXPECT_NEAR(out.c[k], r.c[k], 1e-12);
  }
  const auto f = [&](Tape& t, const ParameterSet& p) {
    LstmVars s{t.constant(h), t.constant(c)};
    for (int k = 0; k < 3; ++k) s = lstm_step(t, t.constant(x), s, p, spec);
    return ad::add(weighted_sum(t, s.h), weighted_sum(t, s.c));
  };
  expect_passes(gradient_check(f, ps));
}

TEST(Lstm, ZeroWeightsGiveHalfGates) {
  ParameterSet ps;
  ps.add("l.W", Tensor(2, 8));
  ps.add("l.U", Tensor(2, 8));
  ps.add("l.b", Tensor(1, 8));
  const auto out = lstm_step(Tensor(1, 2, 1.0), LstmState::zeros(2), ps, {"l", 2, 2});
  // i = f = o = 0.5, g = 0  ->  c = 0, h = 0.
  EXPECT_EQ(out.c[0], 0.0);
  EXPECT_EQ(out.h[1], 0.0);
}

TEST(Fcn, MatchesReferenceAndGradcheck) {
  Rng rng(4);
  ParameterSet ps;
  const FcnSpec spec{"f", {3, 5, 2}, Activation::tanh, Activation::identity};
  add_fcn_params(ps, spec, rng);
  const Tensor x = random_tensor(1, 3, rng);
  const Tensor y = fcn_apply(x, ps, spec);
  const auto r = ref::fcn(vec(x), ps, spec);
  for (std::size_t k = 0; k < 2; ++k) EXPECT_NEAR(y[k], r[k], 1e-12);
  const auto f = [&](Tape& t, const ParameterSet& p) { return weighted_sum(t, fcn_apply(t, t.constant(x), p, spec)); };
  expect_passes(gradient_check(f, ps));
  EXPECT_THROW(fcn_apply(Tensor(1, 4), ps, spec), ShapeError);
}

TEST(Attention, MatchesReferenceAndGradcheck) {
  for (std::size_t heads : {1u, 2u}) {
    Rng rng(5 + heads);
    ParameterSet ps;
    const AttentionSpec spec{"att", 4, 3, 4, 4, heads};
    add_attention_params(ps, spec, rng);
    const Tensor q = random_tensor(2, 4, rng), kv = random_tensor(5, 3, rng);
    const Tensor out = attention(q, kv, kv, ps, spec);
    ref::Mat Q{vec(rows_of(q, 0, 1)), vec(rows_of(q, 1, 1))}, K;
    for (std::size_t i = 0; i < 5; ++i) K.push_back(vec(rows_of(kv, i, 1)));
    const auto r = ref::attention(Q, K, K, ps, spec);
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(out(i, j), r[i][j], 1e-12);
    const auto f = [&](Tape& t, const ParameterSet& p) {
      return weighted_sum(t, attention(t, t.constant(q), t.constant(kv), t.constant(kv), p, spec).out);
    };
    expect_passes(gradient_check(f, ps));
  }
}

TEST(Attention, WeightsAreRowStochastic) {
  Rng rng(9);
  ParameterSet ps;
  const AttentionSpec spec{"att", 2, 2, 4, 2, 2};
  add_attention_params(ps, spec, rng);
  Tape tape(false);
  const Tensor q = random_tensor(3, 2, rng), k = random_tensor(4, 2, rng);
  auto r = attention(tape, tape.constant(q), tape.constant(k), tape.constant(k), ps, spec);
  ASSERT_EQ(r.weights.size(), 2u);
  for (const Var& w : r.weights) {
    for (std::size_t i = 0; i < 3; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < 4; ++j) s += w.value()(i, j);
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
  EXPECT_THROW(attention(q, k, Tensor(3, 2), ps, spec), ShapeError);
}

TEST(GradCheck, DetectsWrongGradient) {
  ParameterSet ps;
  ps.add("x", Tensor(1, 1, 0.7));
  // A backward rule that is off by a factor of two must be caught.
  const auto f = [](Tape& t, const ParameterSet& p) {
    Var x = t.param(p, "x");
    return t.push(Tensor(1, 1, x.value()(0, 0) * x.value()(0, 0)), {x}, [x](Tape& tp, std::size_t self) {
      tp.grad_ref(x.id())(0, 0) += 4.0 * tp.value(x.id())(0, 0) * tp.grad_ref(self)(0, 0);
    });
  };
  EXPECT_FALSE(gradient_check(f, ps).passed);
}

TEST(GradCheck, NonFiniteObjectiveThrows) {
  ParameterSet ps;
  ps.add("x", Tensor(1, 1, -1.0));
  const auto f = [](Tape& t, const ParameterSet& p) { return ad::sum(ad::log(t.param(p, "x"))); };
  EXPECT_THROW(gradient_check(f, ps), NonFiniteError);
}
