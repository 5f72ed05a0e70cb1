#pragma once

// Sustained-boosting objective for one modality's classifier stack
// p_1..p_t (t = stack size):
//
//   residual label   ŷ_t  = max(0, y − λ Σ_{j<t} y ⊙ p_j)
//   ε                     = CE(p_t, ŷ_t)
//   ε_all                 = CE(ens(p_1..p_t), y)
//   ε_pre                 = CE(ens(p_1..p_{t−1}), y),  0 when t = 1
//   L                     = ε + ε_all + ε_pre
//
// CE is averaged over the batch, so L is already the dataset-level mean when
// the batch is the dataset. Residual labels stay on the tape, so gradients
// also reach the earlier classifiers through ŷ.

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sboost/matrix.hpp"
#include "sboost/model.hpp"
#include "sboost/tape.hpp"

namespace sboost {

struct LossTerms {
  bool eps = true;
  bool eps_all = true;
  bool eps_pre = true;

  bool any() const { return eps || eps_all || eps_pre; }
};

struct LossConfig {
  double lambda = 0.5;
  EnsembleMode ensemble = EnsembleMode::kMean;
  LossTerms terms;
};

inline void check_lambda(double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw std::invalid_argument("residual labels: lambda " + std::to_string(lambda) + " outside [0,1]");
  }
}

inline Var residual_labels(Tape& t, const Matrix& y, std::span<const Var> priors, double lambda) {
  check_lambda(lambda);
  if (priors.empty() || lambda == 0.0) return t.constant(y);
  Var masked = ad::mul_const(t, priors[0], y);
  for (std::size_t j = 1; j < priors.size(); ++j) masked = ad::add(t, masked, ad::mul_const(t, priors[j], y));
  Var raw = ad::add(t, t.constant(y), ad::scale(t, masked, -lambda));
  return ad::relu(t, raw);
}

struct ResidualLabel {
  Matrix values;
  double lambda = 0.0;
};

inline ResidualLabel residual_labels(const Matrix& y, std::span<const Matrix> priors, double lambda) {
  Tape t;
  std::vector<Var> vars;
  for (const Matrix& p : priors) {
    y.require_same_shape(p, "residual_labels");
    vars.push_back(t.constant(p));
  }
  return ResidualLabel{t.value(residual_labels(t, y, vars, lambda)), lambda};
}

inline void check_stack_size(std::span<const Var> stack, std::size_t t, const char* what) {
  if (t < 1 || t > stack.size()) {
    throw std::out_of_range(std::string(what) + ": t=" + std::to_string(t) + " outside [1, " +
                            std::to_string(stack.size()) + "]");
  }
}

// ε at stack depth t (1-based).
inline Var eps_residual(Tape& tp, std::span<const Var> stack, const Matrix& y, std::size_t t, double lambda) {
  check_stack_size(stack, t, "eps_residual");
  Var target = residual_labels(tp, y, stack.first(t - 1), lambda);
  return ad::ce_soft(tp, stack[t - 1], target);
}

inline Var eps_all(Tape& tp, std::span<const Var> stack, const Matrix& y, std::size_t t, EnsembleMode mode) {
  check_stack_size(stack, t, "eps_all");
  return ad::ce_soft(tp, ensemble_prediction(tp, stack.first(t), mode), tp.constant(y));
}

inline Var eps_pre(Tape& tp, std::span<const Var> stack, const Matrix& y, std::size_t t, EnsembleMode mode) {
  check_stack_size(stack, t, "eps_pre");
  if (t == 1) return tp.constant(Matrix(1, 1, 0.0));
  return ad::ce_soft(tp, ensemble_prediction(tp, stack.first(t - 1), mode), tp.constant(y));
}

struct TermValues {
  double eps = 0.0;
  double eps_all = 0.0;
  double eps_pre = 0.0;
  double total = 0.0;

  friend bool operator==(const TermValues&, const TermValues&) = default;
};

struct ModalityLossVars {
  Var total;
  TermValues values;
};

// L for one modality at t = stack size, restricted to the enabled terms.
// Disabled terms are reported as 0.
inline ModalityLossVars modality_loss(Tape& tp, std::span<const Var> stack, const Matrix& y, const LossConfig& cfg) {
  if (!cfg.terms.any()) throw std::invalid_argument("loss: all terms disabled");
  const std::size_t t = stack.size();
  ModalityLossVars out;
  std::vector<Var> parts;
  if (cfg.terms.eps) {
    Var v = eps_residual(tp, stack, y, t, cfg.lambda);
    out.values.eps = tp.value(v)(0, 0);
    parts.push_back(v);
  }
  if (cfg.terms.eps_all) {
    Var v = eps_all(tp, stack, y, t, cfg.ensemble);
    out.values.eps_all = tp.value(v)(0, 0);
    parts.push_back(v);
  }
  if (cfg.terms.eps_pre) {
    Var v = eps_pre(tp, stack, y, t, cfg.ensemble);
    out.values.eps_pre = tp.value(v)(0, 0);
    parts.push_back(v);
  }
  Var total = parts[0];
  for (std::size_t i = 1; i < parts.size(); ++i) total = ad::add(tp, total, parts[i]);
  out.total = total;
  out.values.total = tp.value(total)(0, 0);
  return out;
}

struct LossBreakdown {
  std::vector<TermValues> per_modality;
  double joint = 0.0;  // Σ_o L^o
};

struct ForwardResult {
  Var joint;
  LossBreakdown breakdown;
  std::vector<std::vector<Var>> stacks;  // per modality, in stack order
};

// Records the full joint forward pass (encoders, classifier stacks, and the
// unweighted sum of per-modality losses) on the tape.
inline ForwardResult forward_loss(Tape& tp, MultimodalModel& model, std::span<const Matrix> inputs, const Matrix& y,
                                  const LossConfig& cfg) {
  if (inputs.size() != model.num_modalities()) {
    throw std::invalid_argument("forward_loss: got " + std::to_string(inputs.size()) + " inputs for " +
                                std::to_string(model.num_modalities()) + " modalities");
  }
  if (y.rows() == 0) throw std::invalid_argument("forward_loss: empty batch");
  if (y.cols() != model.num_classes()) throw std::invalid_argument("forward_loss: label width != class count");
  ForwardResult out;
  std::vector<Var> totals;
  for (std::size_t o = 0; o < model.num_modalities(); ++o) {
    ModalityModel& m = model.modality(o);
    Var u = m.encode(tp, tp.constant(inputs[o]));
    out.stacks.push_back(m.predict_stack(tp, model.head(), u));
    ModalityLossVars l = modality_loss(tp, out.stacks.back(), y, cfg);
    out.breakdown.per_modality.push_back(l.values);
    totals.push_back(l.total);
  }
  Var joint = totals[0];
  for (std::size_t o = 1; o < totals.size(); ++o) joint = ad::add(tp, joint, totals[o]);
  out.joint = joint;
  out.breakdown.joint = tp.value(joint)(0, 0);
  return out;
}

inline LossBreakdown loss_total(MultimodalModel& model, std::span<const Matrix> inputs, const Matrix& y,
                                const LossConfig& cfg) {
  Tape tp;
  return forward_loss(tp, model, inputs, y, cfg).breakdown;
}

}  // namespace sboost
