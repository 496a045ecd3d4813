// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The stochdiff Authors.
#pragma once

// Data-prediction network x_theta(x^n, n, z).
//
// Each of the d input dimensions becomes a token (scalar lifted by a learned
// per-dimension affine map). A sinusoidal step embedding, passed through a
// small learned layer, is added to every token. Self-attention mixes the
// dimensions; cross-attention then fuses them with tokens lifted from the
// latent z (queries from the diffusion side, keys/values from z). A shared
// per-token head maps each token back to one scalar.

#include <cmath>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "stochdiff/latent.hpp"
#include "stochdiff/layers.hpp"

namespace stochdiff {

struct DenoiserConfig {
  std::size_t data_dim = 1;
  std::size_t latent = 8;
  std::size_t embed = 16;
  std::size_t heads = 1;
  std::size_t head_hidden = 16;

  void validate() const {
    if (data_dim == 0 || latent == 0 || embed == 0 || heads == 0 || head_hidden == 0) {
      throw std::invalid_argument("DenoiserConfig: all widths must be positive");
    }
    if (embed % heads != 0) throw std::invalid_argument("DenoiserConfig: embed must be a multiple of heads");
  }

  AttentionSpec self_attention() const { return {"den.self", embed, embed, embed, embed, heads}; }
  AttentionSpec cross_attention() const { return {"den.cross", embed, embed, embed, embed, heads}; }
  FcnSpec step_layer() const { return {"den.step", {embed, embed}, Activation::tanh, Activation::tanh}; }
  FcnSpec head() const { return {"den.head", {embed, head_hidden, 1}, Activation::tanh, Activation::identity}; }
};

/// Sinusoidal encoding: [sin(n w_0), cos(n w_0), sin(n w_1), ...] with w_i = 10000^(-2i/width).
inline std::vector<double> step_embedding(std::size_t n, std::size_t width) {
  std::vector<double> e(width);
  for (std::size_t i = 0; 2 * i < width; ++i) {
    const double freq = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(width));
    const double a = static_cast<double>(n) * freq;
    e[2 * i] = std::sin(a);
    if (2 * i + 1 < width) e[2 * i + 1] = std::cos(a);
  }
  return e;
}

inline void add_denoiser_params(ParameterSet& ps, const DenoiserConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  ps.add("den.lift_x.scale", uniform_init(cfg.data_dim, cfg.embed, 1, rng));
  ps.add("den.lift_x.shift", uniform_init(cfg.data_dim, cfg.embed, 1, rng));
  ps.add("den.lift_z.scale", uniform_init(cfg.latent, cfg.embed, 1, rng));
  ps.add("den.lift_z.shift", uniform_init(cfg.latent, cfg.embed, 1, rng));
  add_fcn_params(ps, cfg.step_layer(), rng);
  add_attention_params(ps, cfg.self_attention(), rng);
  add_attention_params(ps, cfg.cross_attention(), rng);
  add_fcn_params(ps, cfg.head(), rng);
}

namespace detail {

/// Row vector v (1 x m) -> m tokens: v_i * scale[i,:] + shift[i,:].
inline Var lift_tokens(Tape& tape, Var v, const ParameterSet& ps, const std::string& prefix, std::size_t width) {
  Var col = ad::transpose(v);
  return ad::add(ad::mul(ad::broadcast_cols(col, width), tape.param(ps, prefix + ".scale")),
                 tape.param(ps, prefix + ".shift"));
}

}  // namespace detail

/// Latent tokens (latent x embed); constant across the reverse chain of one time step.
inline Var condition_tokens(Tape& tape, Var z, const ParameterSet& ps, const DenoiserConfig& cfg) {
  if (z.rows() != 1 || z.cols() != cfg.latent) throw ShapeError("denoiser: latent width mismatch");
  return detail::lift_tokens(tape, z, ps, "den.lift_z", cfg.embed);
}

inline Var predict_x0_from_tokens(Tape& tape, Var xn, std::size_t n, Var z_tokens, const ParameterSet& ps,
                                  const DenoiserConfig& cfg) {
  if (xn.rows() != 1 || xn.cols() != cfg.data_dim) {
    throw ShapeError("denoiser: x^n is " + xn.value().shape_string() + ", expected 1x" + std::to_string(cfg.data_dim));
  }
  Var tokens = detail::lift_tokens(tape, xn, ps, "den.lift_x", cfg.embed);
  Var temb = fcn_apply(tape, tape.constant(Tensor::row(step_embedding(n, cfg.embed))), ps, cfg.step_layer());
  tokens = ad::add_row(tokens, temb);
  tokens = ad::add(tokens, attention(tape, tokens, tokens, tokens, ps, cfg.self_attention()).out);
  tokens = ad::add(tokens, attention(tape, tokens, z_tokens, z_tokens, ps, cfg.cross_attention()).out);
  return ad::transpose(fcn_apply(tape, tokens, ps, cfg.head()));
}

/// x_theta(x^n, n, z) as a 1 x d row.
inline Var predict_x0(Tape& tape, Var xn, std::size_t n, Var z, const ParameterSet& ps, const DenoiserConfig& cfg) {
  return predict_x0_from_tokens(tape, xn, n, condition_tokens(tape, z, ps, cfg), ps, cfg);
}

inline std::vector<double> predict_x0(std::span<const double> xn, std::size_t n, const LatentSample& z,
                                      const ParameterSet& ps, const DenoiserConfig& cfg) {
  Tape tape(false);
  return predict_x0(tape, tape.constant(Tensor::row(xn)), n, tape.constant(Tensor::row(z.z)), ps, cfg).value().data;
}

}  // namespace stochdiff
