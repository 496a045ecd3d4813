// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The stochdiff Authors.
#pragma once

// Step-wise latent variables: a prior computed from the previous hidden
// state, an approximate posterior that also sees the current observation,
// the reparameterized projection into z_t, and the recurrence update.

#include <cmath>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "stochdiff/diffusion.hpp"
#include "stochdiff/layers.hpp"

namespace stochdiff {

/// Variance heads never go below this value.
inline constexpr double kVarianceFloor = 1e-6;

struct GaussianVars {
  Var mean;
  Var var;
};

enum class LatentSource { prior, posterior };

struct LatentSample {
  std::vector<double> z;
  LatentSource source = LatentSource::prior;
};

/// Shape of one Gaussian head: shared tanh encoder, linear mean, softplus variance.
struct GaussianHeadSpec {
  std::string prefix;
  std::size_t input = 0;
  std::size_t hidden = 0;
  std::size_t output = 0;

  FcnSpec encoder() const { return {prefix + ".enc", {input, hidden}, Activation::tanh, Activation::tanh}; }
  FcnSpec mean() const { return {prefix + ".mean", {hidden, output}, Activation::identity, Activation::identity}; }
  FcnSpec var() const { return {prefix + ".var", {hidden, output}, Activation::identity, Activation::identity}; }
};

inline void add_gaussian_head_params(ParameterSet& ps, const GaussianHeadSpec& s, std::mt19937_64& rng) {
  add_fcn_params(ps, s.encoder(), rng);
  add_fcn_params(ps, s.mean(), rng);
  add_fcn_params(ps, s.var(), rng);
}

inline GaussianVars gaussian_head(Tape& tape, Var input, const ParameterSet& ps, const GaussianHeadSpec& s) {
  Var enc = fcn_apply(tape, input, ps, s.encoder());
  Var mean = fcn_apply(tape, enc, ps, s.mean());
  Var var = ad::clamp_min(ad::softplus(fcn_apply(tape, enc, ps, s.var())), kVarianceFloor);
  return {mean, var};
}

/// Widths of the latent machinery.
struct LatentSpec {
  std::size_t data_dim = 0;
  std::size_t hidden = 0;          // recurrent state width
  std::size_t latent = 0;          // z width
  std::size_t encoder_hidden = 0;  // FCN hidden width
  /// When true the projection also sees h_{t-1} (fixed-prior variants, whose
  /// prior carries no history).
  bool project_with_hidden = false;
  /// 2: tanh hidden layer then linear; 1: a single linear map.
  std::size_t projection_depth = 2;

  GaussianHeadSpec prior() const { return {"prior", hidden, encoder_hidden, latent}; }
  GaussianHeadSpec posterior() const { return {"post", hidden + data_dim, encoder_hidden, latent}; }
  FcnSpec projection() const {
    const std::size_t in = latent + (project_with_hidden ? hidden : 0);
    if (projection_depth == 1) return {"proj", {in, latent}, Activation::tanh, Activation::identity};
    return {"proj", {in, encoder_hidden, latent}, Activation::tanh, Activation::identity};
  }
  LstmSpec recurrence() const { return {"lstm", data_dim + latent, hidden}; }
};

/// p(z_t | h_{t-1}); never sees x_t.
inline GaussianVars prior_params(Tape& tape, Var h_prev, const ParameterSet& ps, const LatentSpec& s) {
  return gaussian_head(tape, h_prev, ps, s.prior());
}

/// Fixed N(0, I) prior used by the standard-prior ablations.
inline GaussianVars standard_prior(Tape& tape, std::size_t width) {
  return {tape.constant(Tensor(1, width, 0.0)), tape.constant(Tensor(1, width, 1.0))};
}

/// q(z_t | h_{t-1}, x_t).
inline GaussianVars posterior_params(Tape& tape, Var h_prev, Var x, const ParameterSet& ps, const LatentSpec& s) {
  if (x.cols() != s.data_dim) throw ShapeError("posterior_params: observation width mismatch");
  return gaussian_head(tape, ad::concat_cols(h_prev, x), ps, s.posterior());
}

/// z = FCN(mean + sqrt(var) * eps), optionally with h_{t-1} appended to the FCN input.
inline Var reparam_project(Tape& tape, const GaussianVars& g, Var eps, const ParameterSet& ps, const LatentSpec& s,
                           Var h_prev = {}) {
  if (eps.cols() != g.mean.cols()) throw ShapeError("reparam_project: eps width mismatch");
  Var sample = ad::add(g.mean, ad::mul(ad::sqrt(g.var), eps));
  if (s.project_with_hidden) {
    if (!h_prev.valid()) throw std::invalid_argument("reparam_project: projection needs h_{t-1}");
    sample = ad::concat_cols(sample, h_prev);
  }
  return fcn_apply(tape, sample, ps, s.projection());
}

/// KL(q || p) for diagonal Gaussians, as a 1x1.
inline Var kl_diag(const GaussianVars& q, const GaussianVars& p) {
  Var diff = ad::sub(q.mean, p.mean);
  Var ratio = ad::div(ad::add(q.var, ad::square(diff)), p.var);
  Var logs = ad::sub(ad::log(p.var), ad::log(q.var));
  return ad::scale(ad::sum(ad::add_scalar(ad::add(logs, ratio), -1.0)), 0.5);
}

inline double kl_diag(const GaussianDiag& q, const GaussianDiag& p) {
  q.validate();
  p.validate();
  if (q.dim() != p.dim()) throw ShapeError("kl_diag: width mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < q.dim(); ++i) {
    const double d = q.mean[i] - p.mean[i];
    kl += 0.5 * (std::log(p.var[i] / q.var[i]) + (q.var[i] + d * d) / p.var[i] - 1.0);
  }
  return kl;
}

/// h_t = LSTM([x_t, z_t], h_{t-1}).
inline LstmVars recurrence_update(Tape& tape, LstmVars state, Var x, Var z, const ParameterSet& ps,
                                  const LatentSpec& s) {
  return lstm_step(tape, ad::concat_cols(x, z), state, ps, s.recurrence());
}

// ---------------------------------------------------------------------------
// Value-level API
// ---------------------------------------------------------------------------

/// Rolling recurrent context; starts from h_0 = 0.
struct RecurrenceContext {
  LstmState state;
  std::size_t step_index = 0;

  static RecurrenceContext initial(std::size_t hidden) { return {LstmState::zeros(hidden), 0}; }
  friend bool operator==(const RecurrenceContext&, const RecurrenceContext&) = default;
};

inline GaussianDiag to_gaussian(const GaussianVars& g) { return {g.mean.value().data, g.var.value().data}; }

inline GaussianDiag prior_params(const RecurrenceContext& ctx, const ParameterSet& ps, const LatentSpec& s) {
  Tape tape(false);
  return to_gaussian(prior_params(tape, tape.constant(ctx.state.h), ps, s));
}

inline GaussianDiag posterior_params(const RecurrenceContext& ctx, std::span<const double> x, const ParameterSet& ps,
                                     const LatentSpec& s) {
  Tape tape(false);
  return to_gaussian(posterior_params(tape, tape.constant(ctx.state.h), tape.constant(Tensor::row(x)), ps, s));
}

inline LatentSample reparam_project(const GaussianDiag& g, std::span<const double> eps, const ParameterSet& ps,
                                    const LatentSpec& s, LatentSource source,
                                    const RecurrenceContext* ctx = nullptr) {
  Tape tape(false);
  GaussianVars gv{tape.constant(Tensor::row(g.mean)), tape.constant(Tensor::row(g.var))};
  Var h = ctx ? tape.constant(ctx->state.h) : Var{};
  return {reparam_project(tape, gv, tape.constant(Tensor::row(eps)), ps, s, h).value().data, source};
}

inline RecurrenceContext recurrence_update(const RecurrenceContext& ctx, std::span<const double> x,
                                           const LatentSample& z, const ParameterSet& ps, const LatentSpec& s) {
  if (z.z.size() != s.latent) throw ShapeError("recurrence_update: latent width mismatch");
  LstmState next = lstm_step(
      [&] {
        Tensor in(1, x.size() + z.z.size());
        std::copy(x.begin(), x.end(), in.data.begin());
        std::copy(z.z.begin(), z.z.end(), in.data.begin() + static_cast<std::ptrdiff_t>(x.size()));
        return in;
      }(),
      ctx.state, ps, s.recurrence());
  return {std::move(next), ctx.step_index + 1};
}

}  // namespace stochdiff
