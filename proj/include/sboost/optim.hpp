#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sboost/matrix.hpp"

namespace sboost {

struct OptimConfig {
  double lr = 1e-2;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int plateau_patience = 3;
  double plateau_min_rel_improve = 1e-3;
  double lr_decay_factor = 0.1;

  void validate() const {
    if (!(lr > 0.0)) throw std::invalid_argument("optim: lr must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("optim: momentum must be in [0,1)");
    if (!(weight_decay >= 0.0)) throw std::invalid_argument("optim: weight_decay must be >= 0");
    if (plateau_patience < 1) throw std::invalid_argument("optim: plateau_patience must be >= 1");
    if (!(plateau_min_rel_improve > 0.0)) throw std::invalid_argument("optim: plateau_min_rel_improve must be > 0");
    if (!(lr_decay_factor > 0.0 && lr_decay_factor < 1.0))
      throw std::invalid_argument("optim: lr_decay_factor must be in (0,1)");
  }
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Heavy-ball SGD with L2 decay folded into the gradient:
//   v ← m·v + (g + wd·w);  w ← w − lr·v
// Grads are zeroed afterwards.
inline void sgd_step(std::span<Parameter* const> params, const OptimConfig& cfg, double lr) {
  for (Parameter* p : params) {
    if (!p->grad.all_finite()) throw NumericError("sgd_step: non-finite gradient");
  }
  for (Parameter* p : params) {
    auto w = p->value.values();
    auto g = p->grad.values();
    auto v = p->velocity.values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = cfg.momentum * v[i] + (g[i] + cfg.weight_decay * w[i]);
      w[i] -= lr * v[i];
    }
    p->zero_grad();
  }
}

inline void sgd_step(std::span<Parameter* const> params, const OptimConfig& cfg) {
  sgd_step(params, cfg, cfg.lr);
}

struct LRScheduleState {
  double best_loss = std::numeric_limits<double>::infinity();
  int stale_checks = 0;
  double current_lr = 0.0;
  int decays = 0;

  static LRScheduleState initial(const OptimConfig& cfg) {
    LRScheduleState s;
    s.current_lr = cfg.lr;
    return s;
  }
};

// Reduce-on-plateau: a checkpoint counts as progress only if it beats the
// best loss by a strict relative margin.
inline LRScheduleState plateau_update(LRScheduleState state, double val_loss, const OptimConfig& cfg) {
  const bool first = std::isinf(state.best_loss);
  if (first || val_loss < state.best_loss * (1.0 - cfg.plateau_min_rel_improve)) {
    state.best_loss = val_loss;
    state.stale_checks = 0;
    return state;
  }
  ++state.stale_checks;
  if (state.stale_checks >= cfg.plateau_patience) {
    ++state.decays;
    state.current_lr = cfg.lr * std::pow(cfg.lr_decay_factor, state.decays);
    state.stale_checks = 0;
  }
  return state;
}

// Forget the best loss after the model changes shape; lr is kept.
inline LRScheduleState plateau_rebase(LRScheduleState state) {
  state.best_loss = std::numeric_limits<double>::infinity();
  state.stale_checks = 0;
  return state;
}

}  // namespace sboost
