// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The stochdiff Authors.
#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "stochdiff/model.hpp"

namespace stochdiff {

class TrainingDivergedError : public std::runtime_error {
 public:
  TrainingDivergedError(std::size_t epoch, std::size_t window)
      : std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) + ", window " +
                           std::to_string(window)),
        epoch(epoch),
        window(window) {}
  std::size_t epoch;
  std::size_t window;
};

struct OptimConfig {
  double lr = 1e-3;
  std::size_t epochs = 50;
  std::size_t batch_size = 8;
  std::size_t patience = 10;
  double lr_decay = 0.5;
  double clip_norm = 5.0;
  /// Relative improvement of the best epoch loss that counts as "still dropping".
  double min_improvement = 1e-6;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(lr > 0.0)) throw std::invalid_argument("lr must be > 0");
    if (patience < 1) throw std::invalid_argument("patience must be >= 1");
    if (!(lr_decay > 0.0 && lr_decay < 1.0)) throw std::invalid_argument("lr_decay must be in (0, 1)");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (!(clip_norm > 0.0)) throw std::invalid_argument("clip_norm must be > 0");
  }
  friend bool operator==(const OptimConfig&, const OptimConfig&) = default;
};

struct TrainConfig {
  ModelConfig model;
  ScheduleConfig schedule;
  OptimConfig optim;

  void validate() const {
    model.validate();
    optim.validate();
    (void)schedule.build();
  }
};

struct EpochRecord {
  std::size_t epoch = 0;
  double total = 0.0;
  double kl = 0.0;
  double recon = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  double wall_seconds = 0.0;
};

/// Halves (by `decay`) the rate once the best loss has not improved for `patience` epochs.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr, std::size_t patience, double decay, double min_improvement = 1e-6)
      : lr_(lr), patience_(patience), decay_(decay), min_improvement_(min_improvement) {}

  double lr() const { return lr_; }

  /// Feeds one epoch loss; returns true when the rate was decayed.
  bool observe(double loss) {
    if (!has_best_ || best_ - loss > min_improvement_ * std::abs(best_)) {
      best_ = loss;
      has_best_ = true;
      stale_ = 0;
      return false;
    }
    if (++stale_ >= patience_) {
      lr_ *= decay_;
      stale_ = 0;
      return true;
    }
    return false;
  }

 private:
  double lr_;
  std::size_t patience_;
  double decay_;
  double min_improvement_;
  double best_ = 0.0;
  bool has_best_ = false;
  std::size_t stale_ = 0;
};

/// Adaptive-moment update with global-norm clipping.
class Adam {
 public:
  explicit Adam(const ParameterSet& ps, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& e : ps) {
      m_.emplace_back(e.value.rows, e.value.cols);
      v_.emplace_back(e.value.rows, e.value.cols);
    }
  }

  /// Returns the gradient norm before clipping.
  double step(ParameterSet& ps, double lr, double clip_norm) {
    double sq = 0.0;
    for (const auto& e : ps)
      for (double g : e.grad.data) sq += g * g;
    const double norm = std::sqrt(sq);
    const double scale = norm > clip_norm ? clip_norm / norm : 1.0;
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t p = 0; p < ps.size(); ++p) {
      auto& e = ps[p];
      for (std::size_t k = 0; k < e.value.size(); ++k) {
        const double g = e.grad[k] * scale;
        m_[p][k] = beta1_ * m_[p][k] + (1.0 - beta1_) * g;
        v_[p][k] = beta2_ * v_[p][k] + (1.0 - beta2_) * g * g;
        e.value[k] -= lr * (m_[p][k] / c1) / (std::sqrt(v_[p][k] / c2) + eps_);
      }
    }
    return norm;
  }

 private:
  double beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

/// Fresh model for a training configuration (parameters seeded from optim.seed).
inline Model build_variant(const TrainConfig& cfg) {
  cfg.validate();
  return build_model(cfg.model, cfg.schedule, derive_seed(cfg.optim.seed, {0}));
}

/// Seed of the loss draws for one window in one epoch.
inline std::uint64_t window_seed(std::uint64_t seed, std::size_t epoch, std::size_t window) {
  return derive_seed(seed, {1, epoch, window});
}

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Optimizes `model` in place over `windows` (each T x d). Each batch sums its
/// window losses before a single update; windows are reshuffled every epoch.
inline TrainReport train(Model& model, const std::vector<Tensor>& windows, const OptimConfig& opt,
                         const EpochCallback& on_epoch = {}) {
  opt.validate();
  if (windows.empty()) throw std::invalid_argument("train: no training windows");
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();

  Adam adam(model.params);
  PlateauScheduler sched(opt.lr, opt.patience, opt.lr_decay, opt.min_improvement);
  std::vector<std::size_t> order(windows.size());
  TrainReport report;
  Tape tape;

  for (std::size_t epoch = 1; epoch <= opt.epochs; ++epoch) {
    const auto epoch_start = clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(derive_seed(opt.seed, {2, epoch}));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = sched.lr();
    for (std::size_t b = 0; b < order.size(); b += opt.batch_size) {
      model.params.zero_grad();
      const std::size_t end = std::min(order.size(), b + opt.batch_size);
      for (std::size_t i = b; i < end; ++i) {
        const std::size_t w = order[i];
        Rng rng(window_seed(opt.seed, epoch, w));
        tape.clear();
        LossTerms terms = window_loss(tape, model, windows[w], rng);
        const LossValues v = loss_values(terms);
        if (!std::isfinite(v.total)) throw TrainingDivergedError(epoch, w);
        tape.backward(terms.total);
        tape.accumulate_param_grads(model.params);
        rec.total += v.total;
        rec.kl += v.kl;
        rec.recon += v.recon;
      }
      adam.step(model.params, sched.lr(), opt.clip_norm);
    }
    const double nw = static_cast<double>(windows.size());
    rec.total /= nw;
    rec.kl /= nw;
    rec.recon /= nw;
    rec.seconds = std::chrono::duration<double>(clock::now() - epoch_start).count();
    sched.observe(rec.total);
    report.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  report.wall_seconds = std::chrono::duration<double>(clock::now() - start).count();
  return report;
}

inline std::pair<Model, TrainReport> train(const std::vector<Tensor>& windows, const TrainConfig& cfg,
                                           const EpochCallback& on_epoch = {}) {
  Model model = build_variant(cfg);
  TrainReport report = train(model, windows, cfg.optim, on_epoch);
  return {std::move(model), std::move(report)};
}

}  // namespace stochdiff
