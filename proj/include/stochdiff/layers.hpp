// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The stochdiff Authors.
#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "stochdiff/autodiff.hpp"

namespace stochdiff {

enum class Activation { identity, tanh, relu, softplus };

inline Var activate(Var x, Activation a) {
  switch (a) {
    case Activation::identity: return x;
    case Activation::tanh: return ad::tanh(x);
    case Activation::relu: return ad::relu(x);
    case Activation::softplus: return ad::softplus(x);
  }
  return x;
}

// ---------------------------------------------------------------------------
// LSTM cell
// ---------------------------------------------------------------------------

/// Recurrent state (h, c), both 1 x hidden.
struct LstmState {
  Tensor h;
  Tensor c;

  static LstmState zeros(std::size_t hidden) { return {Tensor(1, hidden), Tensor(1, hidden)}; }
  friend bool operator==(const LstmState&, const LstmState&) = default;
};

struct LstmVars {
  Var h;
  Var c;
};

struct LstmSpec {
  std::string prefix;
  std::size_t input = 0;
  std::size_t hidden = 0;
};

/// Registers `prefix.W` (input x 4H), `prefix.U` (H x 4H) and `prefix.b` (1 x 4H).
/// Gate blocks are laid out as [input, forget, candidate, output].
inline void add_lstm_params(ParameterSet& ps, const LstmSpec& s, std::mt19937_64& rng) {
  ps.add(s.prefix + ".W", uniform_init(s.input, 4 * s.hidden, s.input + s.hidden, rng));
  ps.add(s.prefix + ".U", uniform_init(s.hidden, 4 * s.hidden, s.input + s.hidden, rng));
  ps.add(s.prefix + ".b", uniform_init(1, 4 * s.hidden, s.input + s.hidden, rng));
}

inline LstmVars lstm_step(Tape& tape, Var input, LstmVars state, const ParameterSet& ps, const LstmSpec& s) {
  if (input.rows() != 1 || input.cols() != s.input) {
    throw ShapeError("lstm_step: input " + input.value().shape_string() + ", expected 1x" + std::to_string(s.input));
  }
  if (state.h.cols() != s.hidden || state.c.cols() != s.hidden) throw ShapeError("lstm_step: state width mismatch");
  Var gates = ad::add_row(ad::matmul(input, tape.param(ps, s.prefix + ".W")) +
                              ad::matmul(state.h, tape.param(ps, s.prefix + ".U")),
                          tape.param(ps, s.prefix + ".b"));
  const std::size_t h = s.hidden;
  Var i = ad::sigmoid(ad::slice_cols(gates, 0, h));
  Var f = ad::sigmoid(ad::slice_cols(gates, h, h));
  Var g = ad::tanh(ad::slice_cols(gates, 2 * h, h));
  Var o = ad::sigmoid(ad::slice_cols(gates, 3 * h, h));
  Var c = ad::mul(f, state.c) + ad::mul(i, g);
  Var hn = ad::mul(o, ad::tanh(c));
  return {hn, c};
}

/// Value-level convenience wrapper.
inline LstmState lstm_step(const Tensor& input, const LstmState& state, const ParameterSet& ps, const LstmSpec& s) {
  Tape tape(false);
  LstmVars out = lstm_step(tape, tape.constant(input), {tape.constant(state.h), tape.constant(state.c)}, ps, s);
  return {out.h.value(), out.c.value()};
}

// ---------------------------------------------------------------------------
// Fully connected network
// ---------------------------------------------------------------------------

/// Affine chain `widths[0] -> widths[1] -> ...`; hidden layers use `hidden`,
/// the last layer uses `output`.
struct FcnSpec {
  std::string prefix;
  std::vector<std::size_t> widths;
  Activation hidden = Activation::tanh;
  Activation output = Activation::identity;

  std::size_t layers() const { return widths.empty() ? 0 : widths.size() - 1; }
  std::string weight(std::size_t l) const { return prefix + ".l" + std::to_string(l) + ".W"; }
  std::string bias(std::size_t l) const { return prefix + ".l" + std::to_string(l) + ".b"; }
};

inline void add_fcn_params(ParameterSet& ps, const FcnSpec& s, std::mt19937_64& rng) {
  for (std::size_t l = 0; l < s.layers(); ++l) {
    ps.add(s.weight(l), uniform_init(s.widths[l], s.widths[l + 1], s.widths[l], rng));
    ps.add(s.bias(l), uniform_init(1, s.widths[l + 1], s.widths[l], rng));
  }
}

inline Var fcn_apply(Tape& tape, Var input, const ParameterSet& ps, const FcnSpec& s) {
  if (s.layers() == 0) throw std::invalid_argument("fcn_apply: empty network " + s.prefix);
  if (input.cols() != s.widths.front()) {
    throw ShapeError("fcn_apply(" + s.prefix + "): input " + input.value().shape_string() + ", expected width " +
                     std::to_string(s.widths.front()));
  }
  Var x = input;
  for (std::size_t l = 0; l < s.layers(); ++l) {
    x = ad::add_row(ad::matmul(x, tape.param(ps, s.weight(l))), tape.param(ps, s.bias(l)));
    x = activate(x, l + 1 == s.layers() ? s.output : s.hidden);
  }
  return x;
}

inline Tensor fcn_apply(const Tensor& input, const ParameterSet& ps, const FcnSpec& s) {
  Tape tape(false);
  return fcn_apply(tape, tape.constant(input), ps, s).value();
}

// ---------------------------------------------------------------------------
// Scaled dot-product attention
// ---------------------------------------------------------------------------

/// Multi-head attention with learned projections `Wq`, `Wk`, `Wv`, `Wo`.
/// Queries come from rows of width `query_dim`, keys/values from rows of width `source_dim`.
struct AttentionSpec {
  std::string prefix;
  std::size_t query_dim = 0;
  std::size_t source_dim = 0;
  std::size_t model_dim = 0;
  std::size_t out_dim = 0;
  std::size_t heads = 1;
};

struct AttentionResult {
  Var out;
  std::vector<Var> weights;  // one (queries x keys) row-stochastic matrix per head
};

inline void add_attention_params(ParameterSet& ps, const AttentionSpec& s, std::mt19937_64& rng) {
  if (s.heads == 0 || s.model_dim % s.heads != 0) {
    throw std::invalid_argument("attention " + s.prefix + ": model_dim must be a multiple of heads");
  }
  ps.add(s.prefix + ".Wq", uniform_init(s.query_dim, s.model_dim, s.query_dim, rng));
  ps.add(s.prefix + ".Wk", uniform_init(s.source_dim, s.model_dim, s.source_dim, rng));
  ps.add(s.prefix + ".Wv", uniform_init(s.source_dim, s.model_dim, s.source_dim, rng));
  ps.add(s.prefix + ".Wo", uniform_init(s.model_dim, s.out_dim, s.model_dim, rng));
}

inline AttentionResult attention(Tape& tape, Var queries, Var keys, Var values, const ParameterSet& ps,
                                 const AttentionSpec& s) {
  if (keys.rows() != values.rows()) {
    throw ShapeError("attention: " + std::to_string(keys.rows()) + " keys vs " + std::to_string(values.rows()) +
                     " values");
  }
  if (queries.cols() != s.query_dim || keys.cols() != s.source_dim || values.cols() != s.source_dim) {
    throw ShapeError("attention(" + s.prefix + "): projection widths inconsistent with inputs");
  }
  Var q = ad::matmul(queries, tape.param(ps, s.prefix + ".Wq"));
  Var k = ad::matmul(keys, tape.param(ps, s.prefix + ".Wk"));
  Var v = ad::matmul(values, tape.param(ps, s.prefix + ".Wv"));
  const std::size_t dh = s.model_dim / s.heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  AttentionResult r;
  Var merged;
  for (std::size_t h = 0; h < s.heads; ++h) {
    Var qh = s.heads == 1 ? q : ad::slice_cols(q, h * dh, dh);
    Var kh = s.heads == 1 ? k : ad::slice_cols(k, h * dh, dh);
    Var vh = s.heads == 1 ? v : ad::slice_cols(v, h * dh, dh);
    Var w = ad::softmax_rows(ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_sqrt));
    r.weights.push_back(w);
    Var ctx = ad::matmul(w, vh);
    merged = h == 0 ? ctx : ad::concat_cols(merged, ctx);
  }
  r.out = ad::matmul(merged, tape.param(ps, s.prefix + ".Wo"));
  return r;
}

inline Tensor attention(const Tensor& queries, const Tensor& keys, const Tensor& values, const ParameterSet& ps,
                        const AttentionSpec& s) {
  Tape tape(false);
  return attention(tape, tape.constant(queries), tape.constant(keys), tape.constant(values), ps, s).out.value();
}

}  // namespace stochdiff
