#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fd_check.hpp"
#include "sboost/boost_loss.hpp"

using namespace sboost;

namespace {

Matrix random_probs(std::size_t b, std::size_t k, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.5);
  Matrix z(b, k);
  for (double& v : z.values()) v = n(rng);
  return ad::softmax_rows(z);
}

Matrix one_hot(std::span<const std::size_t> labels, std::size_t k) {
  Matrix y(labels.size(), k);
  for (std::size_t i = 0; i < labels.size(); ++i) y(i, labels[i]) = 1.0;
  return y;
}

Matrix random_one_hot(std::size_t b, std::size_t k, Rng& rng) {
  std::uniform_int_distribution<std::size_t> c(0, k - 1);
  std::vector<std::size_t> l(b);
  for (auto& v : l) v = c(rng);
  return one_hot(l, k);
}

// Straight-line reimplementation of ε, ε_all, ε_pre on plain arrays.
struct ScalarTerms {
  double eps, all, pre;
};
ScalarTerms scalar_terms(const std::vector<Matrix>& stack, const Matrix& y, double lambda) {
  const std::size_t t = stack.size(), b = y.rows(), k = y.cols();
  ScalarTerms r{0, 0, 0};
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t c = 0; c < k; ++c) {
      double prior = 0.0;
      for (std::size_t j = 0; j + 1 < t; ++j) prior += y(i, c) * stack[j](i, c);
      const double yhat = std::max(0.0, y(i, c) - lambda * prior);
      r.eps -= yhat * std::log(std::max(stack[t - 1](i, c), kLogFloor));
      double all = 0.0, pre = 0.0;
      for (std::size_t j = 0; j < t; ++j) all += stack[j](i, c);
      for (std::size_t j = 0; j + 1 < t; ++j) pre += stack[j](i, c);
      all /= static_cast<double>(t);
      r.all -= y(i, c) * std::log(std::max(all, kLogFloor));
      if (t > 1) r.pre -= y(i, c) * std::log(std::max(pre / static_cast<double>(t - 1), kLogFloor));
    }
  }
  r.eps /= static_cast<double>(b);
  r.all /= static_cast<double>(b);
  r.pre /= static_cast<double>(b);
  return r;
}

double scalar(Tape& t, Var v) { return t.value(v)(0, 0); }

std::vector<Var> constants(Tape& t, const std::vector<Matrix>& ms) {
  std::vector<Var> out;
  for (const auto& m : ms) out.push_back(t.constant(m));
  return out;
}

}  // namespace

TEST(ResidualLabels, EmptyPriorsGiveY) {
  const Matrix y{{0, 1, 0}};
  EXPECT_EQ(residual_labels(y, {}, 0.5).values, y);
}

TEST(ResidualLabels, ZeroLambdaGivesY) {
  const Matrix y{{0, 1, 0}};
  const std::vector<Matrix> p{Matrix{{0.2, 0.6, 0.2}}, Matrix{{0.1, 0.8, 0.1}}};
  EXPECT_EQ(residual_labels(y, p, 0.0).values, y);
}

TEST(ResidualLabels, HandExample) {
  const Matrix y{{0, 1, 0}};
  const std::vector<Matrix> p{Matrix{{0.2, 0.6, 0.2}}};
  const Matrix r = residual_labels(y, p, 0.5).values;
  EXPECT_EQ(r(0, 0), 0.0);
  EXPECT_NEAR(r(0, 1), 0.7, 1e-15);
  EXPECT_EQ(r(0, 2), 0.0);
}

TEST(ResidualLabels, RejectsLambdaOutsideUnitInterval) {
  const Matrix y{{1, 0}};
  EXPECT_THROW(residual_labels(y, {}, -0.1), std::invalid_argument);
  EXPECT_THROW(residual_labels(y, {}, 1.1), std::invalid_argument);
}

TEST(ResidualLabels, InvariantsOnRandomInstances) {
  Rng rng(17);
  std::uniform_int_distribution<std::size_t> kd(2, 8), bd(1, 4), td(0, 6);
  std::uniform_real_distribution<double> ld(0.0, 1.0);
  for (int rep = 0; rep < 2000; ++rep) {
    const std::size_t k = kd(rng), b = bd(rng), t = td(rng);
    const double lambda = ld(rng);
    const Matrix y = random_one_hot(b, k, rng);
    std::vector<Matrix> priors;
    for (std::size_t j = 0; j < t; ++j) priors.push_back(random_probs(b, k, rng));
    const Matrix r = residual_labels(y, priors, lambda).values;
    for (std::size_t i = 0; i < r.size(); ++i) {
      EXPECT_GE(r[i], 0.0);
      EXPECT_LE(r[i], y[i]);
      if (y[i] == 0.0) {
        EXPECT_EQ(r[i], 0.0);
      }
    }
  }
}

TEST(ResidualLabels, GroundTruthEntryNonIncreasingInDepth) {
  Rng rng(19);
  for (int rep = 0; rep < 500; ++rep) {
    const Matrix y = random_one_hot(3, 5, rng);
    std::vector<Matrix> stack;
    for (int j = 0; j < 6; ++j) stack.push_back(random_probs(3, 5, rng));
    Matrix prev = y;
    for (std::size_t t = 1; t <= stack.size(); ++t) {
      const Matrix r = residual_labels(y, std::span<const Matrix>(stack).first(t - 1), 0.4).values;
      for (std::size_t i = 0; i < r.size(); ++i) EXPECT_LE(r[i], prev[i] + 1e-15);
      prev = r;
    }
  }
}

TEST(Terms, FirstClassifierResidualIsPlainCe) {
  Rng rng(21);
  const Matrix p = random_probs(4, 3, rng), y = random_one_hot(4, 3, rng);
  Tape t;
  const auto s = constants(t, {p});
  const double plain = scalar(t, ad::ce_soft(t, s[0], t.constant(y)));
  EXPECT_EQ(scalar(t, eps_residual(t, s, y, 1, 0.7)), plain);
  EXPECT_EQ(scalar(t, eps_all(t, s, y, 1, EnsembleMode::kMean)), plain);
  EXPECT_EQ(scalar(t, eps_pre(t, s, y, 1, EnsembleMode::kMean)), 0.0);
}

TEST(Terms, ZeroLambdaMakesResidualPlainCe) {
  Rng rng(22);
  const std::vector<Matrix> st{random_probs(3, 4, rng), random_probs(3, 4, rng), random_probs(3, 4, rng)};
  const Matrix y = random_one_hot(3, 4, rng);
  Tape t;
  const auto s = constants(t, st);
  for (std::size_t k = 1; k <= 3; ++k)
    EXPECT_NEAR(scalar(t, eps_residual(t, s, y, k, 0.0)), scalar(t, ad::ce_soft(t, s[k - 1], t.constant(y))), 1e-15);
}

TEST(Terms, IdenticalClassifiersMeanEnsembleEqualsSingle) {
  Rng rng(23);
  const Matrix p = random_probs(3, 4, rng), y = random_one_hot(3, 4, rng);
  Tape t;
  const auto s = constants(t, {p, p, p});
  EXPECT_NEAR(scalar(t, eps_all(t, s, y, 3, EnsembleMode::kMean)), scalar(t, eps_all(t, s, y, 1, EnsembleMode::kMean)),
              1e-15);
}

TEST(Terms, PreAtTwoIsFirstClassifierCe) {
  Rng rng(24);
  const std::vector<Matrix> st{random_probs(3, 4, rng), random_probs(3, 4, rng)};
  const Matrix y = random_one_hot(3, 4, rng);
  Tape t;
  const auto s = constants(t, st);
  EXPECT_EQ(scalar(t, eps_pre(t, s, y, 2, EnsembleMode::kMean)), scalar(t, ad::ce_soft(t, s[0], t.constant(y))));
}

TEST(Terms, MatchScalarReimplementation) {
  Rng rng(25);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t depth = 1 + rep % 4;
    std::vector<Matrix> st;
    for (std::size_t j = 0; j < depth; ++j) st.push_back(random_probs(4, 5, rng));
    const Matrix y = random_one_hot(4, 5, rng);
    const double lambda = 0.5;
    const ScalarTerms o = scalar_terms(st, y, lambda);
    Tape t;
    const auto s = constants(t, st);
    LossConfig cfg;
    cfg.lambda = lambda;
    const ModalityLossVars l = modality_loss(t, s, y, cfg);
    EXPECT_NEAR(l.values.eps, o.eps, 1e-12);
    EXPECT_NEAR(l.values.eps_all, o.all, 1e-12);
    EXPECT_NEAR(l.values.eps_pre, o.pre, 1e-12);
    EXPECT_NEAR(l.values.total, l.values.eps + l.values.eps_all + l.values.eps_pre, 1e-12);
  }
}

TEST(Terms, DisabledTermsReportZeroAndDropOut) {
  Rng rng(26);
  const std::vector<Matrix> st{random_probs(2, 3, rng), random_probs(2, 3, rng)};
  const Matrix y = random_one_hot(2, 3, rng);
  Tape t;
  const auto s = constants(t, st);
  LossConfig cfg;
  cfg.terms = {false, true, false};
  const auto l = modality_loss(t, s, y, cfg);
  EXPECT_EQ(l.values.eps, 0.0);
  EXPECT_EQ(l.values.eps_pre, 0.0);
  EXPECT_EQ(l.values.total, l.values.eps_all);
  cfg.terms = {false, false, false};
  EXPECT_THROW(modality_loss(t, s, y, cfg), std::invalid_argument);
}

TEST(Terms, StackIndexChecked) {
  Tape t;
  const auto s = constants(t, {Matrix{{0.5, 0.5}}});
  EXPECT_THROW(eps_residual(t, s, Matrix{{1, 0}}, 2, 0.5), std::out_of_range);
  EXPECT_THROW(eps_all(t, s, Matrix{{1, 0}}, 0, EnsembleMode::kMean), std::out_of_range);
}

namespace {

ModelSpec tiny_spec(Rng& rng) {
  std::uniform_int_distribution<std::size_t> d(1, 8), k(2, 8);
  ModelSpec s;
  s.num_classes = k(rng);
  s.hidden = d(rng);
  s.modalities = {{"a", EncoderSpec{d(rng), {d(rng)}, d(rng)}}, {"v", EncoderSpec{d(rng), {}, d(rng)}}};
  return s;
}

}  // namespace

TEST(LossTotal, SingleClassifierIsTwiceCe) {
  Rng rng(30);
  ModelSpec spec = tiny_spec(rng);
  MultimodalModel m(spec, rng);
  std::normal_distribution<double> n;
  std::vector<Matrix> x;
  for (const auto& ms : spec.modalities) {
    Matrix xi(3, ms.encoder.input_dim);
    for (double& v : xi.values()) v = n(rng);
    x.push_back(xi);
  }
  const Matrix y = random_one_hot(3, spec.num_classes, rng);
  LossConfig cfg;
  const LossBreakdown b = loss_total(m, x, y, cfg);
  double joint = 0.0;
  for (std::size_t o = 0; o < 2; ++o) {
    const auto p = predict_stack_values(m, o, x[o]);
    Tape t;
    const double ce = scalar(t, ad::ce_soft(t, t.constant(p[0]), t.constant(y)));
    EXPECT_NEAR(b.per_modality[o].total, 2.0 * ce, 1e-12);
    EXPECT_EQ(b.per_modality[o].eps_pre, 0.0);
    joint += b.per_modality[o].total;
  }
  EXPECT_NEAR(b.joint, joint, 1e-12);
}

TEST(LossTotal, PerfectPredictionsGiveNearZero) {
  const Matrix y{{1, 0}, {0, 1}};
  Tape t;
  const auto s = constants(t, {y, y});
  const auto l = modality_loss(t, s, y, LossConfig{});
  EXPECT_LT(l.values.total, 1e-9);
}

TEST(LossTotal, GradientMatchesFiniteDifferences) {
  Rng rng(31);
  std::normal_distribution<double> n;
  std::uniform_int_distribution<int> extra(0, 2);
  for (int net = 0; net < 15; ++net) {
    ModelSpec spec = tiny_spec(rng);
    MultimodalModel m(spec, rng);
    for (std::size_t o = 0; o < 2; ++o)
      for (int e = extra(rng); e > 0; --e) m.add_classifier(o, rng);
    std::vector<Matrix> x;
    for (const auto& ms : spec.modalities) {
      Matrix xi(3, ms.encoder.input_dim);
      for (double& v : xi.values()) v = n(rng);
      x.push_back(xi);
    }
    const Matrix y = random_one_hot(3, spec.num_classes, rng);
    LossConfig cfg;
    Tape t;
    t.backward(forward_loss(t, m, x, y, cfg).joint);
    const auto params = m.parameters();
    std::vector<Matrix> grads;
    for (auto* p : params) grads.push_back(p->grad);
    const auto r = sboost::testing::fd_check(params, grads, [&] { return loss_total(m, x, y, cfg).joint; });
    EXPECT_LT(r.max_rel_err, 1e-5) << "net " << net;
  }
}
