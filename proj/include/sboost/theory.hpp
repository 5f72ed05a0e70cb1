#pragma once

// Gap-convergence simulator on strongly convex quadratics.
//
//   L^o(Φ) = ½ (Φ − Φ*)ᵀ A_o (Φ − Φ*) + f*,   μ_o I ⪯ A_o ⪯ L_o I
//
// The weak-modality update is Φ^a ← Φ^a + η h(Φ^a) with a direction h that
// satisfies ⟨∇L^a, h⟩ ≤ −ν‖∇L^a‖² and ‖h‖ ≤ β‖∇L^a‖; Φ^v stays fixed. With
// η = ν/(L_a β²) the gap G = L^a − L^v must satisfy, while G > 0,
//
//   G(t+1) ≤ G(t) − ν²/(2 L_a β²) · ‖∇L^a(t)‖²
//   ‖∇L^a(t)‖ ≥ κ |G(t)|,  κ = √(2μ/c),  c = ((L_a + L_v)/2) ‖Φ(0) − Φ*‖²
//   G(T) ≤ G(0) / (1 + d T G(0)),  d = ν²κ²/(2 L_a β²)

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "sboost/model.hpp"

namespace sboost::theory {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct Quadratic {
  Mat a;
  double mu = 0.0;
  double smooth = 0.0;

  double value(const Vec& phi, const Vec& opt, double f_star) const {
    const Vec e = phi - opt;
    return 0.5 * e.dot(a * e) + f_star;
  }
  Vec gradient(const Vec& phi, const Vec& opt) const { return a * (phi - opt); }
};

struct QuadraticProblem {
  Quadratic strong_side;  // "a", the modality being boosted
  Quadratic other_side;   // "v", held fixed
  Vec optimum;
  double f_star = 0.0;  // shared optimal value

  std::size_t dim() const { return static_cast<std::size_t>(optimum.size()); }
  double loss_a(const Vec& p) const { return strong_side.value(p, optimum, f_star); }
  double loss_v(const Vec& p) const { return other_side.value(p, optimum, f_star); }
  Vec grad_a(const Vec& p) const { return strong_side.gradient(p, optimum); }
  Vec grad_v(const Vec& p) const { return other_side.gradient(p, optimum); }
};

inline Mat random_orthogonal(std::size_t d, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Mat m(d, d);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  Eigen::HouseholderQR<Mat> qr(m);
  Mat q = qr.householderQ();
  // Fix column signs so Q is a deterministic function of the draw.
  const Mat r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index c = 0; c < q.cols(); ++c)
    if (r(c, c) < 0) q.col(c) *= -1.0;
  return q;
}

inline Quadratic make_quadratic(std::size_t d, double mu, double smooth, Rng& rng) {
  if (!(mu > 0.0) || !(smooth >= mu)) throw std::invalid_argument("make_problem: need 0 < mu <= L");
  if (d == 0) throw std::invalid_argument("make_problem: dim must be >= 1");
  if (d == 1 && mu != smooth) throw std::invalid_argument("make_problem: dim 1 requires mu == L");
  std::uniform_real_distribution<double> u(mu, smooth);
  Vec spectrum(d);
  for (std::size_t i = 0; i < d; ++i) spectrum[i] = u(rng);
  spectrum[0] = mu;
  spectrum[d - 1] = smooth;
  const Mat q = random_orthogonal(d, rng);
  Mat a = q.transpose() * spectrum.asDiagonal() * q;
  a = 0.5 * (a + a.transpose());
  return Quadratic{a, mu, smooth};
}

inline QuadraticProblem make_problem(std::size_t dim, double mu_a, double l_a, double mu_v, double l_v,
                                     std::uint64_t seed) {
  Rng rng(seed);
  QuadraticProblem p;
  p.strong_side = make_quadratic(dim, mu_a, l_a, rng);
  p.other_side = make_quadratic(dim, mu_v, l_v, rng);
  std::normal_distribution<double> g(0.0, 1.0);
  p.optimum = Vec(dim);
  for (std::size_t i = 0; i < dim; ++i) p.optimum[i] = g(rng);
  p.f_star = std::abs(g(rng));
  return p;
}

struct BoostConstants {
  double nu = 1.0;
  double beta = 1.0;
  double mu = 0.0;  // min(μ_a, μ_v)
  double c = 0.0;
  double kappa = 0.0;
  double d = 0.0;
  double eta = 0.0;
  double smooth_a = 0.0;

  // Descent coefficient ν²/(2 L_a β²).
  double descent_coeff() const { return nu * nu / (2.0 * smooth_a * beta * beta); }
};

inline void check_nu_beta(double nu, double beta) {
  if (!(nu > 0.0 && nu <= 1.0)) throw std::invalid_argument("boost constants: nu must be in (0,1]");
  if (!(beta >= nu)) throw std::invalid_argument("boost constants: infeasible (beta < nu)");
}

inline BoostConstants make_constants(const QuadraticProblem& p, const Vec& phi_a0, const Vec& phi_v0, double nu,
                                     double beta) {
  check_nu_beta(nu, beta);
  BoostConstants k;
  k.nu = nu;
  k.beta = beta;
  k.smooth_a = p.strong_side.smooth;
  k.mu = std::min(p.strong_side.mu, p.other_side.mu);
  const double dist2 = (phi_a0 - p.optimum).squaredNorm() + (phi_v0 - p.optimum).squaredNorm();
  k.c = 0.5 * (p.strong_side.smooth + p.other_side.smooth) * dist2;
  if (!(k.c > 0.0)) throw std::invalid_argument("boost constants: initial point equals the optimum");
  k.kappa = std::sqrt(2.0 * k.mu / k.c);
  k.d = nu * nu * k.kappa * k.kappa / (2.0 * k.smooth_a * beta * beta);
  k.eta = nu / (k.smooth_a * beta * beta);
  return k;
}

enum class DirectionMode {
  kCompliant,  // satisfies both weak-learner inequalities
  kAscent,     // negative control: h = +∇L^a
};

// Imperfect weak learner: h = −α g + γ‖g‖ w, w ⊥ g unit, α ∈ [ν, β],
// γ ∈ [0, √(β² − α²)]. Then ⟨g, h⟩ = −α‖g‖² and ‖h‖ = √(α² + γ²)‖g‖.
inline Vec boost_direction(const Vec& grad, double nu, double beta, Rng& rng,
                           DirectionMode mode = DirectionMode::kCompliant) {
  check_nu_beta(nu, beta);
  const double gn = grad.norm();
  if (gn == 0.0) return Vec::Zero(grad.size());
  if (mode == DirectionMode::kAscent) return grad;
  if (nu == beta) return -grad;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double alpha = nu + (beta - nu) * u01(rng);
  const double gamma_max = std::sqrt(std::max(0.0, beta * beta - alpha * alpha));
  const double gamma = gamma_max * u01(rng);
  Vec h = -alpha * grad;
  if (grad.size() > 1 && gamma > 0.0) {
    std::normal_distribution<double> g(0.0, 1.0);
    Vec w(grad.size());
    double wn = 0.0;
    for (int tries = 0; tries < 16 && wn < 1e-8; ++tries) {
      for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = g(rng);
      w -= (w.dot(grad) / (gn * gn)) * grad;
      wn = w.norm();
    }
    if (wn >= 1e-8) h += gamma * gn * (w / wn);
  }
  // Rounding can push either inequality over by an ulp; pull α back in.
  const double inner = grad.dot(h);
  const double lim_inner = -nu * gn * gn;
  if (inner > lim_inner) h -= ((inner - lim_inner) / (gn * gn)) * grad;
  const double hn = h.norm();
  if (hn > beta * gn) h *= beta * gn / hn;
  if (grad.dot(h) > lim_inner * (1.0 - 1e-12) || h.norm() > beta * gn * (1.0 + 1e-12)) {
    throw std::logic_error("boost_direction: constructed direction violates weak-learner bounds");
  }
  return h;
}

struct GapStep {
  std::size_t t = 0;
  double loss_a = 0.0;
  double loss_v = 0.0;
  double g = 0.0;
  double bound = 0.0;
  double grad_norm_a = 0.0;
};

struct GapTraceRecord {
  std::vector<GapStep> steps;
  BoostConstants constants;
  bool diverged = false;
  // Largest violation of G(t+1) ≤ G(t) − coeff·‖∇L^a(t)‖² over every step
  // (≤ 0 when the inequality holds).
  double worst_descent_excess = -std::numeric_limits<double>::infinity();
  // Largest κ|G| − ‖∇L^a‖ over steps with G > 0.
  double worst_lemma_excess = -std::numeric_limits<double>::infinity();
};

inline double gap_bound(double g0, double d, std::size_t t) {
  return g0 / (1.0 + d * static_cast<double>(t) * g0);
}

// Builds a trace record from a bare G sequence (bounds from G(0) and d).
inline GapTraceRecord trace_from_gaps(const std::vector<double>& gs, double d) {
  GapTraceRecord r;
  r.constants.d = d;
  for (std::size_t t = 0; t < gs.size(); ++t) {
    GapStep s;
    s.t = t;
    s.g = gs[t];
    s.bound = gap_bound(gs.front(), d, t);
    r.steps.push_back(s);
  }
  return r;
}

inline GapTraceRecord run_gap_sim(const QuadraticProblem& p, const BoostConstants& k, Vec phi_a, const Vec& phi_v,
                                  std::size_t steps, std::uint64_t seed,
                                  DirectionMode mode = DirectionMode::kCompliant) {
  Rng rng(seed);
  GapTraceRecord rec;
  rec.constants = k;
  const double lv = p.loss_v(phi_v);
  const double g0 = p.loss_a(phi_a) - lv;
  if (!std::isfinite(g0)) throw std::invalid_argument("run_gap_sim: initial gap not finite");
  std::size_t growth = 0;
  bool positive_prefix = true;
  for (std::size_t t = 0;; ++t) {
    const double la = p.loss_a(phi_a);
    const Vec grad = p.grad_a(phi_a);
    GapStep s{t, la, lv, la - lv, gap_bound(g0, k.d, t), grad.norm()};
    positive_prefix = positive_prefix && s.g > 0.0;
    if (positive_prefix) rec.worst_lemma_excess = std::max(rec.worst_lemma_excess, k.kappa * s.g - s.grad_norm_a);
    if (!rec.steps.empty()) {
      const GapStep& prev = rec.steps.back();
      if (s.g > prev.g) {
        if (++growth >= 10) rec.diverged = true;
      } else {
        growth = 0;
      }
    }
    rec.steps.push_back(s);
    if (t == steps) break;
    const Vec h = boost_direction(grad, k.nu, k.beta, rng, mode);
    const Vec next = phi_a + k.eta * h;
    const double g_next = p.loss_a(next) - lv;
    const double rhs = s.g - k.descent_coeff() * grad.squaredNorm();
    rec.worst_descent_excess = std::max(rec.worst_descent_excess, g_next - rhs);
    phi_a = next;
  }
  return rec;
}

struct BoundReport {
  bool satisfied = true;
  double worst_margin = std::numeric_limits<double>::infinity();  // min bound − G over checked steps
  std::optional<std::size_t> first_violation;
  std::size_t checked = 0;
};

// Checks G(t) ≤ bound(t) + slack over the prefix where G stays positive.
inline BoundReport check_bound(const GapTraceRecord& trace, double slack = 1e-9) {
  BoundReport r;
  for (const GapStep& s : trace.steps) {
    if (!(s.g > 0.0)) break;
    ++r.checked;
    const double margin = s.bound - s.g;
    r.worst_margin = std::min(r.worst_margin, margin);
    if (margin < -slack && !r.first_violation) {
      r.first_violation = s.t;
      r.satisfied = false;
    }
  }
  return r;
}

inline void write_trace_csv(const GapTraceRecord& trace, std::ostream& os) {
  os << "t,G,bound,grad_norm_a\n";
  os.precision(17);
  for (const GapStep& s : trace.steps) os << s.t << ',' << s.g << ',' << s.bound << ',' << s.grad_norm_a << '\n';
}

// One grid cell of the verification sweep.
struct GridPoint {
  double nu = 1.0;
  double condition = 1.0;
  std::uint64_t seed = 0;
};

struct GridResult {
  GridPoint point;
  GapTraceRecord trace;
  BoundReport bound;
  bool descent_ok = false;
  bool lemma_ok = false;

  bool ok() const { return bound.satisfied && descent_ok && lemma_ok && !trace.diverged; }
};

struct GridConfig {
  std::vector<double> nus{0.5, 0.9, 1.0};
  std::vector<double> conditions{1.0, 10.0, 100.0};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::size_t dim = 8;
  std::size_t steps = 200;
  double beta = 1.2;
  double slack = 1e-9;
  double radius_a = 3.0;  // ‖Φ^a(0) − Φ*‖
  double radius_v = 0.5;  // ‖Φ^v(0) − Φ*‖, smaller so G(0) > 0
  DirectionMode mode = DirectionMode::kCompliant;
};

// Weak-side spectrum spans [1/cond, 1]; the fixed side is isotropic with
// curvature 1.
inline GridResult run_grid_point(const GridConfig& cfg, const GridPoint& gp) {
  const double mu_a = 1.0 / gp.condition;
  const std::size_t dim = gp.condition == 1.0 ? cfg.dim : std::max<std::size_t>(cfg.dim, 2);
  QuadraticProblem p = make_problem(dim, mu_a, 1.0, 1.0, 1.0, gp.seed);
  Rng rng(mix_seed(gp.seed, 0x696e6974ULL));
  std::normal_distribution<double> g(0.0, 1.0);
  auto random_dir = [&] {
    Vec v(dim);
    for (std::size_t i = 0; i < dim; ++i) v[i] = g(rng);
    return Vec(v / v.norm());
  };
  const Vec phi_a0 = p.optimum + cfg.radius_a * random_dir();
  const Vec phi_v0 = p.optimum + cfg.radius_v * random_dir();
  const double beta = std::max(cfg.beta, gp.nu);
  const BoostConstants k = make_constants(p, phi_a0, phi_v0, gp.nu, beta);
  GridResult r;
  r.point = gp;
  r.trace = run_gap_sim(p, k, phi_a0, phi_v0, cfg.steps, mix_seed(gp.seed, 0x68646972ULL), cfg.mode);
  r.bound = check_bound(r.trace, cfg.slack);
  r.descent_ok = cfg.steps == 0 || r.trace.worst_descent_excess <= cfg.slack;
  r.lemma_ok = r.trace.worst_lemma_excess <= cfg.slack;
  return r;
}

inline std::vector<GridResult> run_grid(const GridConfig& cfg) {
  std::vector<GridResult> out;
  for (double nu : cfg.nus)
    for (double cond : cfg.conditions)
      for (std::uint64_t s : cfg.seeds) out.push_back(run_grid_point(cfg, GridPoint{nu, cond, s}));
  return out;
}

}  // namespace sboost::theory
