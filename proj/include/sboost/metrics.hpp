#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sboost/matrix.hpp"

namespace sboost {

struct MetricsReport {
  double accuracy = 0.0;
  double map = 0.0;
  double macro_f1 = 0.0;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

// Row-wise argmax; first index wins ties.
inline std::vector<std::size_t> argmax_rows(const Matrix& scores) {
  std::vector<std::size_t> out(scores.rows());
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    auto r = scores.row(i);
    out[i] = static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
  }
  return out;
}

inline double accuracy(std::span<const std::size_t> pred, std::span<const std::size_t> truth) {
  if (pred.size() != truth.size()) throw std::invalid_argument("accuracy: length mismatch");
  if (pred.empty()) throw std::invalid_argument("accuracy: empty input");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == truth[i];
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

// Unweighted mean of per-class F1 = 2TP / (2TP + FP + FN). A class absent
// from both predictions and truth scores 1.
inline double macro_f1(std::span<const std::size_t> pred, std::span<const std::size_t> truth, std::size_t k) {
  if (pred.size() != truth.size()) throw std::invalid_argument("macro_f1: length mismatch");
  if (pred.empty()) throw std::invalid_argument("macro_f1: empty input");
  if (k == 0) throw std::invalid_argument("macro_f1: zero classes");
  std::vector<std::size_t> tp(k, 0), fp(k, 0), fn(k, 0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] >= k || truth[i] >= k) throw std::invalid_argument("macro_f1: label out of range");
    if (pred[i] == truth[i]) {
      ++tp[pred[i]];
    } else {
      ++fp[pred[i]];
      ++fn[truth[i]];
    }
  }
  double acc = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    const std::size_t denom = 2 * tp[c] + fp[c] + fn[c];
    acc += denom == 0 ? 1.0 : 2.0 * static_cast<double>(tp[c]) / static_cast<double>(denom);
  }
  return acc / static_cast<double>(k);
}

// Average precision of class c's column, samples ranked by descending score
// with ties broken by ascending sample index.
inline double average_precision(const Matrix& scores, std::span<const std::size_t> truth, std::size_t c) {
  std::vector<std::size_t> order(scores.rows());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores(a, c) > scores(b, c); });
  std::size_t hits = 0;
  double acc = 0.0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (truth[order[r]] == c) {
      ++hits;
      acc += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
  }
  return hits == 0 ? 0.0 : acc / static_cast<double>(hits);
}

// Class-wise MAP over classes with at least one positive.
inline double mean_average_precision(const Matrix& scores, std::span<const std::size_t> truth) {
  if (scores.rows() != truth.size()) throw std::invalid_argument("mean_average_precision: length mismatch");
  if (scores.rows() == 0) throw std::invalid_argument("mean_average_precision: empty input");
  std::vector<bool> has_pos(scores.cols(), false);
  for (std::size_t t : truth) {
    if (t >= scores.cols()) throw std::invalid_argument("mean_average_precision: label out of range");
    has_pos[t] = true;
  }
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t c = 0; c < scores.cols(); ++c) {
    if (!has_pos[c]) continue;
    acc += average_precision(scores, truth, c);
    ++n;
  }
  if (n == 0) throw std::invalid_argument("mean_average_precision: no positive class");
  return acc / static_cast<double>(n);
}

inline MetricsReport report_from_scores(const Matrix& scores, std::span<const std::size_t> truth) {
  const auto pred = argmax_rows(scores);
  return MetricsReport{accuracy(pred, truth), mean_average_precision(scores, truth),
                       macro_f1(pred, truth, scores.cols())};
}

// Cross-modal loss gap G = L^a − L^v.
inline double gap(double loss_a, double loss_v) { return loss_a - loss_v; }

struct GapPoint {
  std::size_t iteration = 0;
  double loss_a = 0.0;
  double loss_v = 0.0;
  double g = 0.0;

  friend bool operator==(const GapPoint&, const GapPoint&) = default;
};

using GapTrace = std::vector<GapPoint>;

}  // namespace sboost
