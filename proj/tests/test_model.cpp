#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "sboost/model.hpp"

using namespace sboost;

namespace {

ModelSpec small_spec() {
  ModelSpec s;
  s.num_classes = 3;
  s.hidden = 5;
  s.modalities = {{"a", EncoderSpec{4, {6}, 3}}, {"v", EncoderSpec::identity(2)}};
  return s;
}

Matrix ones(std::size_t r, std::size_t c) { return Matrix(r, c, 1.0); }

}  // namespace

TEST(Model, InitialStackHasOneClassifierPerModality) {
  Rng rng(1);
  MultimodalModel m(small_spec(), rng);
  EXPECT_EQ(m.num_modalities(), 2u);
  EXPECT_EQ(m.modality(0).count(), 1u);
  EXPECT_EQ(m.modality(1).count(), 1u);
  EXPECT_EQ(m.modality(0).feature_dim(), 3u);
  EXPECT_EQ(m.modality(1).feature_dim(), 2u);
  EXPECT_EQ(m.head().layer2.in_dim(), 5u);
  EXPECT_EQ(m.head().layer2.out_dim(), 3u);
}

TEST(Model, PredictionsAreProbabilityRows) {
  Rng rng(2);
  MultimodalModel m(small_spec(), rng);
  m.add_classifier(0, rng);
  const auto stack = predict_stack_values(m, 0, ones(4, 4));
  ASSERT_EQ(stack.size(), 2u);
  for (const Matrix& p : stack) {
    EXPECT_EQ(p.rows(), 4u);
    EXPECT_EQ(p.cols(), 3u);
    for (std::size_t i = 0; i < p.rows(); ++i) {
      double s = 0.0;
      for (double v : p.row(i)) {
        EXPECT_GE(v, 0.0);
        s += v;
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Model, EncoderRejectsWrongWidth) {
  Rng rng(3);
  MultimodalModel m(small_spec(), rng);
  EXPECT_THROW(predict_stack_values(m, 0, ones(2, 5)), std::invalid_argument);
}

TEST(Model, ClassifyOneOutOfRange) {
  Rng rng(3);
  MultimodalModel m(small_spec(), rng);
  Tape t;
  Var u = m.modality(1).encode(t, t.constant(ones(1, 2)));
  EXPECT_THROW(m.modality(1).classify_one(t, m.head(), u, 1), std::out_of_range);
}

TEST(Model, AddClassifierRespectsCap) {
  Rng rng(4);
  MultimodalModel m(small_spec(), rng);
  EXPECT_TRUE(m.add_classifier(1, rng, 2));
  EXPECT_EQ(m.modality(1).count(), 2u);
  EXPECT_FALSE(m.add_classifier(1, rng, 2));
  EXPECT_EQ(m.modality(1).count(), 2u);
  EXPECT_EQ(m.modality(0).count(), 1u);
}

TEST(Model, NewClassifierLeavesExistingOutputsUnchanged) {
  Rng rng(5);
  MultimodalModel m(small_spec(), rng);
  const auto before = predict_stack_values(m, 0, ones(2, 4));
  m.add_classifier(0, rng);
  const auto after = predict_stack_values(m, 0, ones(2, 4));
  EXPECT_EQ(before[0], after[0]);
}

TEST(Model, SharedHeadIsOneParameterForAllClassifiers) {
  Rng rng(6);
  MultimodalModel m(small_spec(), rng);
  m.add_classifier(0, rng);
  m.add_classifier(1, rng);
  const auto params = m.parameters();
  // a: enc 2 layers (4 params) + 2 classifiers (4); v: identity + 2 classifiers (4); head (2)
  EXPECT_EQ(params.size(), 4u + 4u + 4u + 2u);
  const Parameter* head_w = &m.head().layer2.w;
  EXPECT_EQ(std::count(params.begin(), params.end(), head_w), 1);

  // Every classifier's output depends on the head.
  Tape t;
  std::vector<Var> all;
  for (std::size_t o = 0; o < 2; ++o) {
    const std::size_t d = o == 0 ? 4 : 2;
    Var u = m.modality(o).encode(t, t.constant(ones(1, d)));
    for (Var p : m.modality(o).predict_stack(t, m.head(), u)) all.push_back(p);
  }
  Var s = ad::sum(t, ad::mul_const(t, all.back(), Matrix{{1, 0, 0}}));
  t.backward(s);
  double mag = 0.0;
  for (double g : m.head().layer2.w.grad.values()) mag += std::abs(g);
  EXPECT_GT(mag, 0.0);
}

TEST(Ensemble, SumAndMean) {
  const Matrix u{{0.25, 0.25, 0.25, 0.25}};
  const std::vector<Matrix> two{u, u};
  EXPECT_EQ(ensemble_prediction(two, EnsembleMode::kMean), u);
  EXPECT_EQ(ensemble_prediction(two, EnsembleMode::kSum), (Matrix{{0.5, 0.5, 0.5, 0.5}}));
  EXPECT_THROW(ensemble_prediction(std::span<const Matrix>{}, EnsembleMode::kSum), std::invalid_argument);
}

TEST(Ensemble, TapeVersionMatchesMatrixVersion) {
  Rng rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Matrix> ps;
  for (int j = 0; j < 3; ++j) {
    Matrix p(2, 4);
    for (double& v : p.values()) v = u(rng);
    ps.push_back(p);
  }
  for (auto mode : {EnsembleMode::kSum, EnsembleMode::kMean}) {
    Tape t;
    std::vector<Var> vs;
    for (const auto& p : ps) vs.push_back(t.constant(p));
    EXPECT_LT(max_abs_diff(t.value(ensemble_prediction(t, vs, mode)), ensemble_prediction(ps, mode)), 1e-15);
  }
}

TEST(Checkpoint, RoundTripIsBitExact) {
  Rng rng(9);
  MultimodalModel m(small_spec(), rng);
  m.add_classifier(1, rng);
  m.add_classifier(1, rng);
  const auto path = (std::filesystem::temp_directory_path() / "sboost_ckpt_test.bin").string();
  save_checkpoint(m, path);
  MultimodalModel back = load_checkpoint(path);
  const auto a = m.named_values();
  const auto b = back.named_values();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].first, b[i].first);
    EXPECT_EQ(*a[i].second, *b[i].second);
  }
  EXPECT_EQ(back.modality(1).count(), 3u);
  EXPECT_EQ(back.modality(0).encoder.input_dim, 4u);
  EXPECT_EQ(back.modality(1).encoder.input_dim, 2u);
  EXPECT_EQ(predict_stack_values(back, 0, ones(2, 4)), predict_stack_values(m, 0, ones(2, 4)));
  std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsGarbage) {
  const auto path = (std::filesystem::temp_directory_path() / "sboost_ckpt_bad.bin").string();
  {
    std::ofstream os(path, std::ios::binary);
    os << "NOPE";
  }
  EXPECT_THROW(load_checkpoint(path), std::runtime_error);
  {
    std::ofstream os(path, std::ios::binary);
    os.write("SBCK", 4);
  }
  EXPECT_THROW(load_checkpoint(path), std::runtime_error);
  std::filesystem::remove(path);
}

TEST(Model, DeterministicInit) {
  Rng r1(42), r2(42);
  MultimodalModel a(small_spec(), r1), b(small_spec(), r2);
  const auto va = a.named_values(), vb = b.named_values();
  for (std::size_t i = 0; i < va.size(); ++i) EXPECT_EQ(*va[i].second, *vb[i].second);
}
