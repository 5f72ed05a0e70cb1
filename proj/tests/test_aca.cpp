#include <gtest/gtest.h>

#include <random>

#include "sboost/aca.hpp"

using namespace sboost;

namespace {

ACAConfig cfg_default() {
  ACAConfig c;
  c.period = 1;
  return c;
}

ConfidenceRecord rec(double sa, double sv) { return ConfidenceRecord{0, {sa, sv}}; }

MultimodalModel two_modality_model(Rng& rng) {
  ModelSpec s;
  s.num_classes = 3;
  s.hidden = 4;
  s.modalities = {{"a", EncoderSpec::identity(2)}, {"v", EncoderSpec::identity(2)}};
  return MultimodalModel(s, rng);
}

}  // namespace

TEST(Confidence, PerfectOneHotGivesOne) {
  const std::vector<std::vector<Matrix>> stacks{{Matrix{{1, 0, 0}, {0, 1, 0}}}};
  const std::vector<std::size_t> labels{0, 1};
  EXPECT_DOUBLE_EQ(confidence_score(stacks, labels).scores[0], 1.0);
}

TEST(Confidence, UniformGivesOneOverK) {
  const std::vector<std::vector<Matrix>> stacks{{Matrix(3, 5, 0.2)}};
  const std::vector<std::size_t> labels{0, 3, 4};
  EXPECT_NEAR(confidence_score(stacks, labels).scores[0], 0.2, 1e-15);
}

TEST(Confidence, TwoUniformClassifiersRawSum) {
  const std::vector<std::vector<Matrix>> stacks{{Matrix(2, 4, 0.25), Matrix(2, 4, 0.25)}};
  const std::vector<std::size_t> labels{1, 2};
  EXPECT_DOUBLE_EQ(confidence_score(stacks, labels).scores[0], 0.5);
}

TEST(Confidence, BoundedByStackSize) {
  Rng rng(3);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<Matrix> st;
    for (int j = 0; j < 1 + rep % 5; ++j) {
      Matrix p(4, 3);
      for (std::size_t i = 0; i < 4; ++i) {
        double s = 0.0;
        for (double& v : p.row(i)) s += (v = u(rng));
        for (double& v : p.row(i)) v /= s;
      }
      st.push_back(p);
    }
    const std::vector<std::vector<Matrix>> stacks{st};
    const std::vector<std::size_t> labels{0, 1, 2, 0};
    const double s = confidence_score(stacks, labels).scores[0];
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, static_cast<double>(st.size()) + 1e-12);
  }
}

TEST(Confidence, AccumulatorAveragesOverBatchesAndRejectsEmpty) {
  ConfidenceAccumulator acc(1);
  EXPECT_THROW(acc.scores(), std::logic_error);
  const std::vector<std::vector<Matrix>> b1{{Matrix{{1, 0}}}};
  const std::vector<std::vector<Matrix>> b2{{Matrix{{0, 1}, {0, 1}, {1, 0}}}};
  const std::vector<std::size_t> l1{0}, l2{0, 0, 0};
  acc.add_batch(b1, l1);
  acc.add_batch(b2, l2);
  EXPECT_EQ(acc.count(), 4u);
  EXPECT_DOUBLE_EQ(acc.scores()[0], 0.5);
  acc.reset();
  EXPECT_EQ(acc.count(), 0u);
}

TEST(Decide, GapAddsToWeakVideo) {
  const auto d = aca_decide(rec(0.8, 0.5), cfg_default());
  ASSERT_TRUE(d.adds());
  EXPECT_EQ(d.modality, 1u);
}

TEST(Decide, MirroredGapAddsToAudio) {
  const auto d = aca_decide(rec(0.5, 0.8), cfg_default());
  ASSERT_TRUE(d.adds());
  EXPECT_EQ(d.modality, 0u);
}

TEST(Decide, InsideDeadZoneIsNone) { EXPECT_FALSE(aca_decide(rec(0.505, 0.5), cfg_default()).adds()); }

TEST(Decide, EqualScoresNeverAdd) {
  for (double sigma : {1.0, 1.25, 2.0})
    for (double tau : {0.0, 0.01, 0.5})
      for (double s : {0.0, 0.3, 1.7}) {
        ACAConfig c = cfg_default();
        c.sigma = sigma;
        c.tau = tau;
        EXPECT_FALSE(aca_decide(rec(s, s), c).adds());
      }
}

TEST(Decide, DeadZoneNeutralityProperty) {
  Rng rng(5);
  std::uniform_real_distribution<double> u(0.0, 3.0), d(-0.01, 0.01);
  const ACAConfig c = cfg_default();
  for (int rep = 0; rep < 10000; ++rep) {
    const double sv = u(rng);
    EXPECT_FALSE(aca_decide(rec(sv + d(rng), sv), c).adds());
  }
}

TEST(Decide, MonotoneResponseProperty) {
  Rng rng(6);
  std::uniform_real_distribution<double> u(0.0, 2.0), inc(0.0, 0.5);
  const ACAConfig c = cfg_default();
  for (int rep = 0; rep < 10000; ++rep) {
    const double sa = u(rng), sv = u(rng);
    const auto d = aca_decide(rec(sa, sv), c);
    if (!d.adds() || d.modality != 1) continue;
    const auto d2 = aca_decide(rec(sa + inc(rng), std::max(0.0, sv - inc(rng))), c);
    ASSERT_TRUE(d2.adds());
    EXPECT_EQ(d2.modality, 1u);
  }
}

TEST(Decide, LiteralAlgorithmListing) {
  ACAConfig c = cfg_default();
  c.rule = ACARule::kAlgorithm1;
  auto d = aca_decide(rec(0.8, 0.5), c);
  ASSERT_TRUE(d.adds());
  EXPECT_EQ(d.modality, 0u);
  d = aca_decide(rec(0.5, 0.5), c);
  ASSERT_TRUE(d.adds());
  EXPECT_EQ(d.modality, 1u);
}

TEST(Decide, ThreeModalitiesTargetsArgmin) {
  const auto d = aca_decide(ConfidenceRecord{0, {0.6, 0.9, 0.2}}, cfg_default());
  ASSERT_TRUE(d.adds());
  EXPECT_EQ(d.modality, 2u);
}

TEST(MaybeCheck, OffPeriodOnlyAccumulates) {
  Rng rng(7);
  MultimodalModel m = two_modality_model(rng);
  ACAConfig c = cfg_default();
  c.period = 3;
  ConfidenceAccumulator acc(2);
  const std::vector<std::vector<Matrix>> st{{Matrix{{1, 0, 0}}}, {Matrix{{0, 1, 0}}}};
  const std::vector<std::size_t> l{0};
  acc.add_batch(st, l);
  for (std::size_t it : {1u, 2u, 4u, 5u}) {
    EXPECT_FALSE(maybe_check(it, c, m, acc, rng).adds());
    EXPECT_EQ(acc.count(), 1u);
  }
  const auto d = maybe_check(3, c, m, acc, rng);
  ASSERT_TRUE(d.adds());
  EXPECT_EQ(d.modality, 1u);
  EXPECT_EQ(m.modality(1).count(), 2u);
  EXPECT_EQ(acc.count(), 0u);
}

TEST(MaybeCheck, EqualScoresNoChange) {
  Rng rng(8);
  MultimodalModel m = two_modality_model(rng);
  ConfidenceAccumulator acc(2);
  const std::vector<std::vector<Matrix>> st{{Matrix{{0.5, 0.5, 0}}}, {Matrix{{0.5, 0, 0.5}}}};
  const std::vector<std::size_t> l{0};
  acc.add_batch(st, l);
  EXPECT_FALSE(maybe_check(1, cfg_default(), m, acc, rng).adds());
  EXPECT_EQ(m.modality(0).count() + m.modality(1).count(), 2u);
}

TEST(MaybeCheck, CapBlocksAddition) {
  Rng rng(9);
  MultimodalModel m = two_modality_model(rng);
  ACAConfig c = cfg_default();
  c.max_classifiers = 1;
  ConfidenceAccumulator acc(2);
  const std::vector<std::vector<Matrix>> st{{Matrix{{1, 0, 0}}}, {Matrix{{0, 1, 0}}}};
  const std::vector<std::size_t> l{0};
  acc.add_batch(st, l);
  const auto d = maybe_check(1, c, m, acc, rng);
  EXPECT_FALSE(d.adds());
  EXPECT_TRUE(d.capped);
  EXPECT_EQ(m.modality(1).count(), 1u);
}

TEST(MaybeCheck, CounterConsistency) {
  Rng rng(10);
  MultimodalModel m = two_modality_model(rng);
  ConfidenceAccumulator acc(2);
  std::size_t adds_v = 0, adds_a = 0;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t it = 1; it <= 40; ++it) {
    const double pa = u(rng), pv = u(rng);
    const std::vector<std::vector<Matrix>> st{{Matrix{{pa, 1 - pa, 0}}}, {Matrix{{pv, 0, 1 - pv}}}};
    const std::vector<std::size_t> l{0};
    acc.add_batch(st, l);
    const auto d = maybe_check(it, cfg_default(), m, acc, rng);
    if (d.adds()) ++(d.modality == 0 ? adds_a : adds_v);
  }
  EXPECT_EQ(m.modality(0).count(), 1 + adds_a);
  EXPECT_EQ(m.modality(1).count(), 1 + adds_v);
}

TEST(Fluctuation, Examples) {
  const std::vector<double> flat{0.4, 0.4, 0.4};
  EXPECT_EQ(confidence_fluctuation(flat), 0.0);
  const std::vector<double> zig{0, 1, 0, 1};
  EXPECT_DOUBLE_EQ(confidence_fluctuation(zig), 0.75);
  const std::vector<double> one{1.0};
  EXPECT_THROW(confidence_fluctuation(one), std::invalid_argument);
}

TEST(Fluctuation, ReverseInvariant) {
  Rng rng(11);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<double> s(2 + rep % 7);
    for (double& v : s) v = u(rng);
    std::vector<double> r(s.rbegin(), s.rend());
    EXPECT_NEAR(confidence_fluctuation(s), confidence_fluctuation(r), 1e-15);
  }
}

TEST(ACAConfig, Validation) {
  ACAConfig c;
  EXPECT_NO_THROW(c.validate());
  c.sigma = 0.9;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = ACAConfig{};
  c.tau = -1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}
