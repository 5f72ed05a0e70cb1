#pragma once

// Reverse-mode differentiation over a small fixed op set: linear layers,
// ReLU, row softmax, soft-target cross-entropy, and the elementwise glue
// (add, scale, constant mask) the boosting losses are built from.

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sboost/matrix.hpp"

namespace sboost {

// Floor applied to probabilities before taking the log.
inline constexpr double kLogFloor = 1e-12;

struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

class Tape {
 public:
  using Backprop = std::function<void(Tape&, const Matrix& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  Var constant(Matrix m) { return push(std::move(m), false, nullptr); }

  // Leaf bound to a Parameter. Registering the same parameter twice returns
  // the same node, so gradients from every use accumulate in one place.
  Var param(Parameter& p) {
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var{it->second};
    Var v = push(p.value, true, nullptr);
    nodes_[v.id].param = &p;
    param_nodes_.emplace(&p, v.id);
    return v;
  }

  Var push(Matrix value, bool requires_grad, Backprop backprop) {
    nodes_.push_back(Node{std::move(value), Matrix{}, requires_grad, std::move(backprop), nullptr});
    return Var{nodes_.size() - 1};
  }

  const Matrix& value(Var v) const { return at(v).value; }
  bool requires_grad(Var v) const { return at(v).requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Gradient of the last backward pass w.r.t. node v (empty if none reached it).
  const Matrix& grad(Var v) const { return at(v).grad; }

  // Accumulator used by backprop closures.
  Matrix& grad_acc(Var v) {
    Node& n = at(v);
    if (n.grad.empty() && !n.value.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
    return n.grad;
  }

  void backward(Var loss) {
    if (nodes_.empty() || loss.id >= nodes_.size()) {
      throw std::logic_error("backward: no forward pass recorded for this loss node");
    }
    const Node& l = nodes_[loss.id];
    if (l.value.rows() != 1 || l.value.cols() != 1) {
      throw std::invalid_argument("backward: loss must be a 1x1 scalar, got " + l.value.shape_str());
    }
    for (Node& n : nodes_) {
      n.grad = Matrix{};
      if (n.param != nullptr) n.param->zero_grad();
    }
    grad_acc(loss)(0, 0) = 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.empty() || !n.backprop) continue;
      // The closure may grow other nodes' grads but never touches this one.
      const Matrix g = std::move(n.grad);
      n.backprop(*this, g);
      nodes_[i].grad = g;
    }
    for (Node& n : nodes_) {
      if (n.param != nullptr && !n.grad.empty()) n.param->grad += n.grad;
    }
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Backprop backprop;
    Parameter* param = nullptr;
  };

  Node& at(Var v) {
    if (v.id >= nodes_.size()) throw std::out_of_range("Tape: unknown node " + std::to_string(v.id));
    return nodes_[v.id];
  }
  const Node& at(Var v) const {
    if (v.id >= nodes_.size()) throw std::out_of_range("Tape: unknown node " + std::to_string(v.id));
    return nodes_[v.id];
  }

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
};

namespace ad {

// x[B×D] · w[D×H] + b[1×H]
inline Var linear(Tape& t, Var x, Var w, Var b) {
  const Matrix& xv = t.value(x);
  const Matrix& wv = t.value(w);
  const Matrix& bv = t.value(b);
  if (xv.cols() != wv.rows() || bv.rows() != 1 || bv.cols() != wv.cols()) {
    throw std::invalid_argument("linear: shape mismatch x=" + xv.shape_str() + " w=" + wv.shape_str() +
                                " b=" + bv.shape_str());
  }
  Matrix out = matmul(xv, wv);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < out.cols(); ++j) r[j] += bv(0, j);
  }
  const bool rg = t.requires_grad(x) || t.requires_grad(w) || t.requires_grad(b);
  return t.push(std::move(out), rg, [x, w, b](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(x)) matmul_nt_acc(g, tp.value(w), tp.grad_acc(x));
    if (tp.requires_grad(w)) matmul_tn_acc(tp.value(x), g, tp.grad_acc(w));
    if (tp.requires_grad(b)) {
      Matrix& gb = tp.grad_acc(b);
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) gb(0, j) += g(i, j);
    }
  });
}

inline Var linear(Tape& t, Var x, Parameter& w, Parameter& b) {
  return linear(t, x, t.param(w), t.param(b));
}

inline Var relu(Tape& t, Var x) {
  Matrix out = t.value(x);
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return t.push(std::move(out), t.requires_grad(x), [x](Tape& tp, const Matrix& g) {
    const Matrix& xv = tp.value(x);
    Matrix& gx = tp.grad_acc(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += xv[i] > 0.0 ? g[i] : 0.0;
  });
}

inline Matrix softmax_rows(const Matrix& z) {
  Matrix out(z.rows(), z.cols());
  for (std::size_t i = 0; i < z.rows(); ++i) {
    auto zr = z.row(i);
    auto orow = out.row(i);
    double m = zr[0];
    for (double v : zr) m = std::max(m, v);
    double s = 0.0;
    for (std::size_t j = 0; j < zr.size(); ++j) {
      orow[j] = std::exp(zr[j] - m);
      s += orow[j];
    }
    for (double& v : orow) v /= s;
  }
  return out;
}

inline Var softmax(Tape& t, Var z) {
  if (t.value(z).cols() == 0) throw std::invalid_argument("softmax: zero columns");
  Matrix out = softmax_rows(t.value(z));
  Var self{t.size()};
  return t.push(std::move(out), t.requires_grad(z), [z, self](Tape& tp, const Matrix& g) {
    const Matrix& y = tp.value(self);
    Matrix& gz = tp.grad_acc(z);
    for (std::size_t i = 0; i < y.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < y.cols(); ++j) gz(i, j) += y(i, j) * (g(i, j) - dot);
    }
  });
}

// (1/B) Σ_i −target_i · log(max(p_i, floor)). Gradients flow into both p
// and target when they require them.
inline Var ce_soft(Tape& t, Var p, Var target) {
  const Matrix& pv = t.value(p);
  const Matrix& tv = t.value(target);
  pv.require_same_shape(tv, "ce_soft");
  if (pv.rows() == 0) throw std::invalid_argument("ce_soft: empty batch");
  double acc = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    if (tv[i] < 0.0) {
      throw std::invalid_argument("ce_soft: negative target entry " + std::to_string(tv[i]) +
                                  " at index " + std::to_string(i));
    }
    if (tv[i] != 0.0) acc -= tv[i] * std::log(std::max(pv[i], kLogFloor));
  }
  const double inv_b = 1.0 / static_cast<double>(pv.rows());
  Matrix out(1, 1, acc * inv_b);
  const bool rg = t.requires_grad(p) || t.requires_grad(target);
  return t.push(std::move(out), rg, [p, target, inv_b](Tape& tp, const Matrix& g) {
    const double s = g(0, 0) * inv_b;
    const Matrix& pv = tp.value(p);
    const Matrix& tv = tp.value(target);
    if (tp.requires_grad(p)) {
      Matrix& gp = tp.grad_acc(p);
      for (std::size_t i = 0; i < pv.size(); ++i)
        if (pv[i] > kLogFloor) gp[i] -= s * tv[i] / pv[i];
    }
    if (tp.requires_grad(target)) {
      Matrix& gt = tp.grad_acc(target);
      for (std::size_t i = 0; i < pv.size(); ++i) gt[i] -= s * std::log(std::max(pv[i], kLogFloor));
    }
  });
}

inline Var add(Tape& t, Var a, Var b) {
  Matrix out = t.value(a);
  out += t.value(b);
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  return t.push(std::move(out), rg, [a, b](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(a)) tp.grad_acc(a) += g;
    if (tp.requires_grad(b)) tp.grad_acc(b) += g;
  });
}

inline Var scale(Tape& t, Var a, double s) {
  Matrix out = t.value(a);
  out *= s;
  return t.push(std::move(out), t.requires_grad(a), [a, s](Tape& tp, const Matrix& g) {
    Matrix& ga = tp.grad_acc(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  });
}

// Elementwise product with a constant mask.
inline Var mul_const(Tape& t, Var a, const Matrix& mask) {
  Matrix out = t.value(a);
  out.require_same_shape(mask, "mul_const");
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return t.push(std::move(out), t.requires_grad(a), [a, mask](Tape& tp, const Matrix& g) {
    Matrix& ga = tp.grad_acc(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += mask[i] * g[i];
  });
}

// Sum of all entries as a 1×1 node.
inline Var sum(Tape& t, Var a) {
  double s = 0.0;
  for (double v : t.value(a).values()) s += v;
  return t.push(Matrix(1, 1, s), t.requires_grad(a), [a](Tape& tp, const Matrix& g) {
    Matrix& ga = tp.grad_acc(a);
    for (double& v : ga.values()) v += g(0, 0);
  });
}

}  // namespace ad
}  // namespace sboost
