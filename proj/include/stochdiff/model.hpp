// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The stochdiff Authors.
#pragma once

// Model assembly for the four variants of the ablation ladder and their
// per-window training losses. All variants share the LSTM recurrence and
// the latent/denoiser code paths; they differ only in which pieces are wired.
//
//   lstm                  deterministic regressor x_t ~ FCN(h_{t-1}), squared error
//   vlstm_standard_prior  N(0, I) prior, one-shot Gaussian decoder, KL + Gaussian NLL
//   vlstm_diffusion       N(0, I) prior, diffusion decoder, KL + x0 reconstruction
//   stochdiff             learned prior p(z_t | h_{t-1}), diffusion decoder

#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>

#include "stochdiff/denoiser.hpp"
#include "stochdiff/diffusion.hpp"
#include "stochdiff/latent.hpp"
#include "stochdiff/random.hpp"

namespace stochdiff {

enum class Variant { lstm, vlstm_standard_prior, vlstm_diffusion, stochdiff };

class UnknownVariantError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::lstm: return "lstm";
    case Variant::vlstm_standard_prior: return "vlstm_standard_prior";
    case Variant::vlstm_diffusion: return "vlstm_diffusion";
    case Variant::stochdiff: return "stochdiff";
  }
  return "?";
}

inline Variant parse_variant(std::string_view s) {
  for (Variant v : {Variant::lstm, Variant::vlstm_standard_prior, Variant::vlstm_diffusion, Variant::stochdiff}) {
    if (s == to_string(v)) return v;
  }
  throw UnknownVariantError("unknown variant: " + std::string(s));
}

struct ModelConfig {
  Variant variant = Variant::stochdiff;
  std::size_t data_dim = 1;
  std::size_t hidden = 128;
  std::size_t latent = 128;
  std::size_t encoder_hidden = 128;
  std::size_t embed = 16;
  std::size_t heads = 1;
  std::size_t head_hidden = 16;

  bool uses_latent() const { return variant != Variant::lstm; }
  bool uses_diffusion() const { return variant == Variant::vlstm_diffusion || variant == Variant::stochdiff; }
  bool learned_prior() const { return variant == Variant::stochdiff; }
  bool probabilistic() const { return variant != Variant::lstm; }

  LatentSpec latent_spec() const {
    LatentSpec s{data_dim, hidden, latent, encoder_hidden};
    s.project_with_hidden = !learned_prior();
    return s;
  }
  LstmSpec lstm_spec() const { return uses_latent() ? latent_spec().recurrence() : LstmSpec{"lstm", data_dim, hidden}; }
  DenoiserConfig denoiser() const { return {data_dim, latent, embed, heads, head_hidden}; }
  FcnSpec regressor() const {
    return {"out", {hidden, encoder_hidden, data_dim}, Activation::tanh, Activation::identity};
  }
  GaussianHeadSpec decoder() const { return {"dec", latent, encoder_hidden, data_dim}; }

  void validate() const {
    if (data_dim == 0 || hidden == 0 || latent == 0 || encoder_hidden == 0) {
      throw std::invalid_argument("ModelConfig: widths must be positive");
    }
    if (uses_diffusion()) denoiser().validate();
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct ScheduleConfig {
  std::size_t steps = 100;
  double beta_min = 1e-4;
  double beta_max = 0.1;

  DiffusionSchedule build() const { return build_schedule(steps, beta_min, beta_max); }
  friend bool operator==(const ScheduleConfig&, const ScheduleConfig&) = default;
};

struct Model {
  ModelConfig config;
  ScheduleConfig schedule_config;
  DiffusionSchedule schedule;
  ParameterSet params;
};

/// Registers the variant's parameters in a fixed order and initializes them from `seed`.
inline ParameterSet init_parameters(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  ParameterSet ps;
  add_lstm_params(ps, cfg.lstm_spec(), rng);
  if (!cfg.uses_latent()) {
    add_fcn_params(ps, cfg.regressor(), rng);
    return ps;
  }
  const LatentSpec ls = cfg.latent_spec();
  if (cfg.learned_prior()) add_gaussian_head_params(ps, ls.prior(), rng);
  add_gaussian_head_params(ps, ls.posterior(), rng);
  add_fcn_params(ps, ls.projection(), rng);
  if (cfg.uses_diffusion()) {
    add_denoiser_params(ps, cfg.denoiser(), rng);
  } else {
    add_gaussian_head_params(ps, cfg.decoder(), rng);
  }
  return ps;
}

inline Model build_model(const ModelConfig& cfg, const ScheduleConfig& sched, std::uint64_t seed) {
  return {cfg, sched, sched.build(), init_parameters(cfg, seed)};
}

struct LossTerms {
  Var total;
  Var kl;
  Var recon;
};

struct LossValues {
  double total = 0.0;
  double kl = 0.0;
  double recon = 0.0;
};

/// Prior for the current step: learned from h_{t-1} or fixed N(0, I).
inline GaussianVars step_prior(Tape& tape, const Model& m, Var h_prev) {
  if (m.config.learned_prior()) return prior_params(tape, h_prev, m.params, m.config.latent_spec());
  return standard_prior(tape, m.config.latent);
}

/// Gaussian negative log-likelihood of x under N(mean, var), summed over dimensions.
inline Var gaussian_nll(Var x, const GaussianVars& g) {
  Var sq = ad::div(ad::square(ad::sub(x, g.mean)), g.var);
  Var logs = ad::add_scalar(ad::log(g.var), std::log(2.0 * std::numbers::pi));
  return ad::scale(ad::sum(ad::add(logs, sq)), 0.5);
}

/// Step-wise training loss of one window (rows are time steps), starting from h_0 = 0.
///
/// Random draws per step, in order: diffusion step n, diffusion noise (d values)
/// [diffusion variants], then latent noise (latent values) [latent variants].
inline LossTerms window_loss(Tape& tape, const Model& m, const Tensor& window, Rng& rng) {
  const ModelConfig& cfg = m.config;
  if (window.rows > 0 && window.cols != cfg.data_dim) {
    throw ShapeError("window has " + std::to_string(window.cols) + " columns, model expects " +
                     std::to_string(cfg.data_dim));
  }
  const ParameterSet& ps = m.params;
  const LatentSpec ls = cfg.latent_spec();
  const LstmSpec lstm = cfg.lstm_spec();

  LstmVars state{tape.constant(Tensor(1, cfg.hidden)), tape.constant(Tensor(1, cfg.hidden))};
  Var kl = tape.constant(Tensor(1, 1));
  Var recon = tape.constant(Tensor(1, 1));

  for (std::size_t t = 0; t < window.rows; ++t) {
    const auto row = window.row_span(t);
    Var x = tape.constant(Tensor::row(row));

    if (!cfg.uses_latent()) {
      Var pred = fcn_apply(tape, state.h, ps, cfg.regressor());
      recon = ad::add(recon, ad::sum(ad::square(ad::sub(x, pred))));
      state = lstm_step(tape, x, state, ps, lstm);
      continue;
    }

    std::size_t n = 0;
    std::vector<double> eps;
    if (cfg.uses_diffusion()) {
      n = uniform_step(rng, m.schedule.steps());
      eps = standard_normal(rng, cfg.data_dim);
    }
    Var eps_z = tape.constant(Tensor::row(standard_normal(rng, cfg.latent)));

    GaussianVars q = posterior_params(tape, state.h, x, ps, ls);
    GaussianVars p = step_prior(tape, m, state.h);
    Var z = reparam_project(tape, q, eps_z, ps, ls, state.h);
    kl = ad::add(kl, kl_diag(q, p));

    if (cfg.uses_diffusion()) {
      Var xn = tape.constant(Tensor::row(forward_sample(row, n, eps, m.schedule)));
      Var x0_hat = predict_x0(tape, xn, n, z, ps, cfg.denoiser());
      recon = ad::add(recon, ad::sum(ad::square(ad::sub(x, x0_hat))));
    } else {
      recon = ad::add(recon, gaussian_nll(x, gaussian_head(tape, z, ps, cfg.decoder())));
    }
    state = recurrence_update(tape, state, x, z, ps, ls);
  }
  return {ad::add(kl, recon), kl, recon};
}

inline LossValues loss_values(const LossTerms& t) { return {t.total.scalar(), t.kl.scalar(), t.recon.scalar()}; }

/// Step-wise dual objective (KL + x0 reconstruction) of a window.
inline LossValues dual_loss(const Tensor& window, const Model& m, Rng& rng) {
  Tape tape(false);
  return loss_values(window_loss(tape, m, window, rng));
}

}  // namespace stochdiff
