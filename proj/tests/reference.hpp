// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The stochdiff Authors.
#pragma once

// Plain-loop re-implementations of the networks and losses, written directly
// from the equations with no tape, used as independent oracles in tests.

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "stochdiff/stochdiff.hpp"

namespace ref {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;  // row-major list of rows
using stochdiff::ParameterSet;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double softplus(double x) { return std::log(1.0 + std::exp(x)); }

inline Vec affine(const Vec& x, const stochdiff::Tensor& W, const stochdiff::Tensor* b) {
  Vec y(W.cols, 0.0);
  for (std::size_t j = 0; j < W.cols; ++j) {
    double s = b ? (*b)(0, j) : 0.0;
    for (std::size_t i = 0; i < W.rows; ++i) s += x[i] * W(i, j);
    y[j] = s;
  }
  return y;
}

inline double act(double v, stochdiff::Activation a) {
  switch (a) {
    case stochdiff::Activation::identity: return v;
    case stochdiff::Activation::tanh: return std::tanh(v);
    case stochdiff::Activation::relu: return v > 0 ? v : 0.0;
    case stochdiff::Activation::softplus: return softplus(v);
  }
  return v;
}

inline Vec fcn(const Vec& x, const ParameterSet& ps, const stochdiff::FcnSpec& s) {
  Vec cur = x;
  for (std::size_t l = 0; l < s.layers(); ++l) {
    cur = affine(cur, ps.value(s.weight(l)), &ps.value(s.bias(l)));
    for (double& v : cur) v = act(v, l + 1 == s.layers() ? s.output : s.hidden);
  }
  return cur;
}

struct LstmOut {
  Vec h, c;
};

inline LstmOut lstm(const Vec& x, const Vec& h, const Vec& c, const ParameterSet& ps, const std::string& prefix) {
  const auto& W = ps.value(prefix + ".W");
  const auto& U = ps.value(prefix + ".U");
  const auto& b = ps.value(prefix + ".b");
  const std::size_t H = h.size();
  Vec pre(4 * H);
  for (std::size_t j = 0; j < 4 * H; ++j) {
    double s = b(0, j);
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * W(i, j);
    for (std::size_t i = 0; i < H; ++i) s += h[i] * U(i, j);
    pre[j] = s;
  }
  LstmOut out{Vec(H), Vec(H)};
  for (std::size_t k = 0; k < H; ++k) {
    const double ig = sigmoid(pre[k]), fg = sigmoid(pre[H + k]), gg = std::tanh(pre[2 * H + k]),
                 og = sigmoid(pre[3 * H + k]);
    out.c[k] = fg * c[k] + ig * gg;
    out.h[k] = og * std::tanh(out.c[k]);
  }
  return out;
}

inline Mat project_rows(const Mat& X, const stochdiff::Tensor& W) {
  Mat out;
  for (const auto& r : X) out.push_back(affine(r, W, nullptr));
  return out;
}

inline Mat attention(const Mat& Q, const Mat& K, const Mat& V, const ParameterSet& ps,
                     const stochdiff::AttentionSpec& s) {
  const Mat q = project_rows(Q, ps.value(s.prefix + ".Wq"));
  const Mat k = project_rows(K, ps.value(s.prefix + ".Wk"));
  const Mat v = project_rows(V, ps.value(s.prefix + ".Wv"));
  const std::size_t dh = s.model_dim / s.heads;
  Mat merged(Q.size(), Vec(s.model_dim, 0.0));
  for (std::size_t h = 0; h < s.heads; ++h) {
    for (std::size_t a = 0; a < Q.size(); ++a) {
      Vec logits(K.size());
      double mx = -1e300;
      for (std::size_t b = 0; b < K.size(); ++b) {
        double dot = 0.0;
        for (std::size_t t = 0; t < dh; ++t) dot += q[a][h * dh + t] * k[b][h * dh + t];
        logits[b] = dot / std::sqrt(static_cast<double>(dh));
        mx = std::max(mx, logits[b]);
      }
      double z = 0.0;
      for (double& l : logits) z += (l = std::exp(l - mx));
      for (std::size_t b = 0; b < K.size(); ++b)
        for (std::size_t t = 0; t < dh; ++t) merged[a][h * dh + t] += logits[b] / z * v[b][h * dh + t];
    }
  }
  return project_rows(merged, ps.value(s.prefix + ".Wo"));
}

struct Gauss {
  Vec mean, var;
};

inline Gauss head(const Vec& x, const ParameterSet& ps, const stochdiff::GaussianHeadSpec& s) {
  const Vec enc = fcn(x, ps, s.encoder());
  Gauss g{fcn(enc, ps, s.mean()), fcn(enc, ps, s.var())};
  for (double& v : g.var) v = std::max(softplus(v), 1e-6);
  return g;
}

inline Vec concat(Vec a, const Vec& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

inline Mat lift(const Vec& v, const ParameterSet& ps, const std::string& prefix) {
  const auto& sc = ps.value(prefix + ".scale");
  const auto& sh = ps.value(prefix + ".shift");
  Mat out(v.size(), Vec(sc.cols));
  for (std::size_t i = 0; i < v.size(); ++i)
    for (std::size_t e = 0; e < sc.cols; ++e) out[i][e] = v[i] * sc(i, e) + sh(i, e);
  return out;
}

inline Vec denoiser(const Vec& xn, std::size_t n, const Vec& z, const ParameterSet& ps,
                    const stochdiff::DenoiserConfig& cfg) {
  Mat tok = lift(xn, ps, "den.lift_x");
  // Sinusoidal step encoding, written out independently.
  Vec emb(cfg.embed);
  for (std::size_t i = 0; i < cfg.embed; ++i) {
    const std::size_t pair = i / 2;
    const double w = std::pow(10000.0, -2.0 * static_cast<double>(pair) / static_cast<double>(cfg.embed));
    emb[i] = i % 2 == 0 ? std::sin(static_cast<double>(n) * w) : std::cos(static_cast<double>(n) * w);
  }
  const Vec temb = fcn(emb, ps, cfg.step_layer());
  for (auto& r : tok)
    for (std::size_t e = 0; e < cfg.embed; ++e) r[e] += temb[e];
  Mat sa = attention(tok, tok, tok, ps, cfg.self_attention());
  for (std::size_t i = 0; i < tok.size(); ++i)
    for (std::size_t e = 0; e < cfg.embed; ++e) tok[i][e] += sa[i][e];
  const Mat zt = lift(z, ps, "den.lift_z");
  Mat ca = attention(tok, zt, zt, ps, cfg.cross_attention());
  for (std::size_t i = 0; i < tok.size(); ++i)
    for (std::size_t e = 0; e < cfg.embed; ++e) tok[i][e] += ca[i][e];
  Vec out;
  for (const auto& r : tok) out.push_back(fcn(r, ps, cfg.head())[0]);
  return out;
}

inline double kl(const Gauss& q, const Gauss& p) {
  double s = 0.0;
  for (std::size_t i = 0; i < q.mean.size(); ++i) {
    const double d = q.mean[i] - p.mean[i];
    s += 0.5 * (std::log(p.var[i]) - std::log(q.var[i]) + (q.var[i] + d * d) / p.var[i] - 1.0);
  }
  return s;
}

struct Loss {
  double total = 0.0, kl = 0.0, recon = 0.0;
};

/// Step-wise window loss for every variant, consuming random numbers in the
/// same order as the library: n, diffusion noise, latent noise.
inline Loss window_loss(const stochdiff::Model& m, const stochdiff::Tensor& w, stochdiff::Rng& rng) {
  const auto& cfg = m.config;
  const auto& ps = m.params;
  const auto ls = cfg.latent_spec();
  Vec h(cfg.hidden, 0.0), c(cfg.hidden, 0.0);
  Loss L;
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t t = 0; t < w.rows; ++t) {
    Vec x(w.row_span(t).begin(), w.row_span(t).end());
    if (!cfg.uses_latent()) {
      const Vec pred = fcn(h, ps, cfg.regressor());
      for (std::size_t j = 0; j < x.size(); ++j) L.recon += (x[j] - pred[j]) * (x[j] - pred[j]);
      const auto o = lstm(x, h, c, ps, "lstm");
      h = o.h, c = o.c;
      continue;
    }
    std::size_t n = 0;
    Vec eps;
    if (cfg.uses_diffusion()) {
      n = std::uniform_int_distribution<std::size_t>(1, m.schedule.steps())(rng);
      for (std::size_t j = 0; j < x.size(); ++j) eps.push_back(normal(rng));
    }
    normal.reset();
    Vec ez;
    {
      std::normal_distribution<double> fresh(0.0, 1.0);
      for (std::size_t j = 0; j < cfg.latent; ++j) ez.push_back(fresh(rng));
    }
    const Gauss q = head(concat(h, x), ps, ls.posterior());
    Gauss p;
    if (cfg.learned_prior()) {
      p = head(h, ps, ls.prior());
    } else {
      p = {Vec(cfg.latent, 0.0), Vec(cfg.latent, 1.0)};
    }
    Vec sample(cfg.latent);
    for (std::size_t j = 0; j < cfg.latent; ++j) sample[j] = q.mean[j] + std::sqrt(q.var[j]) * ez[j];
    const Vec z = fcn(ls.project_with_hidden ? concat(sample, h) : sample, ps, ls.projection());
    L.kl += kl(q, p);
    if (cfg.uses_diffusion()) {
      // x^n from the closed form, with abar computed from the betas here.
      double abar = 1.0;
      for (std::size_t k = 1; k <= n; ++k) abar *= 1.0 - m.schedule.beta(k);
      Vec xn(x.size());
      for (std::size_t j = 0; j < x.size(); ++j) xn[j] = std::sqrt(abar) * x[j] + std::sqrt(1.0 - abar) * eps[j];
      const Vec x0 = denoiser(xn, n, z, ps, cfg.denoiser());
      for (std::size_t j = 0; j < x.size(); ++j) L.recon += (x[j] - x0[j]) * (x[j] - x0[j]);
    } else {
      const Gauss g = head(z, ps, cfg.decoder());
      for (std::size_t j = 0; j < x.size(); ++j) {
        const double d = x[j] - g.mean[j];
        L.recon += 0.5 * (std::log(2.0 * std::numbers::pi * g.var[j]) + d * d / g.var[j]);
      }
    }
    const auto o = lstm(concat(x, z), h, c, ps, "lstm");
    h = o.h, c = o.c;
  }
  L.total = L.kl + L.recon;
  return L;
}

}  // namespace ref
