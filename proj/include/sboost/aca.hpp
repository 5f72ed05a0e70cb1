#pragma once

// Adaptive classifier assignment: confidence monitoring and the rule that
// grows the weaker modality's classifier stack.
//
// Confidence of modality o over a monitoring set of N samples:
//   s^o = (1/N) Σ_i y_iᵀ Σ_j p^o_ij        (raw sum over the stack)

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sboost/matrix.hpp"
#include "sboost/model.hpp"

namespace sboost {

enum class ACARule {
  kText,        // boost the weaker side: s^a − σ s^v > τ adds to v
  kAlgorithm1,  // literal listing: s^a − σ s^v > τ adds to a, < τ adds to v
};

struct ACAConfig {
  bool enabled = true;
  double sigma = 1.0;
  double tau = 0.01;
  std::size_t period = 1;  // check interval, in iterations
  std::optional<std::size_t> max_classifiers;
  ACARule rule = ACARule::kText;

  void validate() const {
    if (!(sigma >= 1.0)) throw std::invalid_argument("aca: sigma must be >= 1");
    if (!(tau >= 0.0)) throw std::invalid_argument("aca: tau must be >= 0");
    if (period < 1) throw std::invalid_argument("aca: period must be >= 1");
    if (max_classifiers && *max_classifiers < 1) throw std::invalid_argument("aca: max_classifiers must be >= 1");
  }
};

struct ConfidenceRecord {
  std::size_t iteration = 0;
  std::vector<double> scores;  // one per modality
};

struct ACADecision {
  enum class Action { kNone, kAdd };
  Action action = Action::kNone;
  std::size_t modality = 0;  // meaningful when action == kAdd
  bool capped = false;       // rule fired but the cap blocked the addition
  std::vector<double> scores;

  bool adds() const { return action == Action::kAdd; }
  static ACADecision none(std::vector<double> s = {}) { return ACADecision{Action::kNone, 0, false, std::move(s)}; }
  static ACADecision add(std::size_t o, std::vector<double> s) { return ACADecision{Action::kAdd, o, false, std::move(s)}; }
};

// Per-sample score hook. Receives the raw-summed stack prediction row and
// the ground-truth class index.
using SampleScore = std::function<double(std::span<const double> summed_row, std::size_t label)>;

inline double ground_truth_mass(std::span<const double> summed_row, std::size_t label) { return summed_row[label]; }

// Running sums of per-sample scores since the last check.
class ConfidenceAccumulator {
 public:
  explicit ConfidenceAccumulator(std::size_t num_modalities, SampleScore score = ground_truth_mass)
      : sums_(num_modalities, 0.0), score_(std::move(score)) {}

  // stacks[o] holds modality o's per-classifier probability matrices.
  void add_batch(std::span<const std::vector<Matrix>> stacks, std::span<const std::size_t> labels) {
    if (stacks.size() != sums_.size()) throw std::invalid_argument("confidence: modality count mismatch");
    for (std::size_t o = 0; o < stacks.size(); ++o) {
      const Matrix summed = ensemble_prediction(stacks[o], EnsembleMode::kSum);
      if (summed.rows() != labels.size()) throw std::invalid_argument("confidence: batch size mismatch");
      for (std::size_t i = 0; i < summed.rows(); ++i) sums_[o] += score_(summed.row(i), labels[i]);
    }
    count_ += labels.size();
  }

  std::size_t count() const { return count_; }

  std::vector<double> scores() const {
    if (count_ == 0) throw std::logic_error("confidence: empty monitoring set");
    std::vector<double> s(sums_);
    for (double& v : s) v /= static_cast<double>(count_);
    return s;
  }

  void reset() {
    std::fill(sums_.begin(), sums_.end(), 0.0);
    count_ = 0;
  }

 private:
  std::vector<double> sums_;
  std::size_t count_ = 0;
  SampleScore score_;
};

// One-shot confidence of every modality over a single monitoring set.
inline ConfidenceRecord confidence_score(std::span<const std::vector<Matrix>> stacks,
                                         std::span<const std::size_t> labels, std::size_t iteration = 0) {
  ConfidenceAccumulator acc(stacks.size());
  acc.add_batch(stacks, labels);
  return ConfidenceRecord{iteration, acc.scores()};
}

inline ACADecision aca_decide(const ConfidenceRecord& rec, const ACAConfig& cfg) {
  const auto& s = rec.scores;
  if (s.size() < 2) return ACADecision::none(s);
  if (cfg.rule == ACARule::kAlgorithm1) {
    if (s.size() != 2) throw std::invalid_argument("aca: algorithm1 rule is defined for two modalities only");
    const double g = s[0] - cfg.sigma * s[1];
    if (g > cfg.tau) return ACADecision::add(0, s);
    if (g < cfg.tau) return ACADecision::add(1, s);
    return ACADecision::none(s);
  }
  // Strongest vs weakest; first index wins ties.
  std::size_t hi = 0, lo = 0;
  for (std::size_t o = 1; o < s.size(); ++o) {
    if (s[o] > s[hi]) hi = o;
    if (s[o] < s[lo]) lo = o;
  }
  if (hi != lo && s[hi] - cfg.sigma * s[lo] > cfg.tau) return ACADecision::add(lo, s);
  return ACADecision::none(s);
}

// Called once per iteration after the optimizer step. Off-period iterations
// return none; on-period iterations decide, apply (subject to the cap), and
// reset the accumulator.
inline ACADecision maybe_check(std::size_t iteration, const ACAConfig& cfg, MultimodalModel& model,
                               ConfidenceAccumulator& acc, Rng& rng) {
  if (!cfg.enabled || iteration % cfg.period != 0) return ACADecision::none();
  ConfidenceRecord rec{iteration, acc.scores()};
  acc.reset();
  ACADecision d = aca_decide(rec, cfg);
  if (d.adds()) {
    const ModalityModel& m = model.modality(d.modality);
    if (cfg.max_classifiers && m.count() >= *cfg.max_classifiers) {
      d.capped = true;
      d.action = ACADecision::Action::kNone;
    } else {
      model.add_classifier(d.modality, rng);
    }
  }
  return d;
}

// (1/n) Σ_{t=2..n} |s_t − s_{t−1}|, n = series length.
inline double confidence_fluctuation(std::span<const double> series) {
  if (series.size() < 2) throw std::invalid_argument("confidence_fluctuation: need at least 2 points");
  double acc = 0.0;
  for (std::size_t t = 1; t < series.size(); ++t) acc += std::abs(series[t] - series[t - 1]);
  return acc / static_cast<double>(series.size());
}

}  // namespace sboost
