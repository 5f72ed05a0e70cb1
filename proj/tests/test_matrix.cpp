#include <gtest/gtest.h>

#include <random>

#include "sboost/matrix.hpp"

using sboost::Matrix;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(r, c);
  for (double& v : m.values()) v = n(rng);
  return m;
}

Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  return out;
}

}  // namespace

TEST(Matrix, ShapeAndFill) {
  Matrix m(2, 3, 1.5);
  EXPECT_EQ(m.rows(), 2u);
  EXPECT_EQ(m.cols(), 3u);
  EXPECT_EQ(m.size(), 6u);
  for (double v : m.values()) EXPECT_EQ(v, 1.5);
  EXPECT_THROW(Matrix(2, 2, std::vector<double>{1, 2, 3}), std::invalid_argument);
  EXPECT_THROW((Matrix{{1, 2}, {3}}), std::invalid_argument);
}

TEST(Matrix, RowMajorLayout) {
  Matrix m{{1, 2, 3}, {4, 5, 6}};
  EXPECT_EQ(m[3], 4.0);
  EXPECT_EQ(m(1, 2), 6.0);
  auto r = m.row(1);
  EXPECT_EQ(r[0], 4.0);
}

TEST(Matrix, Arithmetic) {
  Matrix a{{1, 2}, {3, 4}};
  Matrix b{{1, 1}, {1, 1}};
  EXPECT_EQ(a + b, (Matrix{{2, 3}, {4, 5}}));
  EXPECT_EQ(a - b, (Matrix{{0, 1}, {2, 3}}));
  EXPECT_EQ(2.0 * a, (Matrix{{2, 4}, {6, 8}}));
  EXPECT_THROW(a += Matrix(1, 2), std::invalid_argument);
}

TEST(Matrix, MatmulIdentity) {
  const Matrix i2 = Matrix::identity(2);
  EXPECT_EQ(sboost::matmul(i2, i2), i2);
}

TEST(Matrix, MatmulMatchesTripleLoop) {
  std::mt19937_64 rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    const Matrix a = random_matrix(3, 4, rng);
    const Matrix b = random_matrix(4, 5, rng);
    EXPECT_LT(sboost::max_abs_diff(sboost::matmul(a, b), naive_matmul(a, b)), 1e-12);
  }
}

TEST(Matrix, MatmulRejectsShapeWithDims) {
  try {
    sboost::matmul(Matrix(2, 3), Matrix(4, 2));
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("2x3"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("4x2"), std::string::npos);
  }
}

TEST(Matrix, TransposedAccumulators) {
  std::mt19937_64 rng(3);
  const Matrix a = random_matrix(5, 3, rng);
  const Matrix b = random_matrix(5, 4, rng);
  Matrix out(3, 4, 1.0);
  sboost::matmul_tn_acc(a, b, out);
  Matrix expect = naive_matmul(sboost::transpose(a), b);
  expect += Matrix(3, 4, 1.0);
  EXPECT_LT(sboost::max_abs_diff(out, expect), 1e-12);

  const Matrix c = random_matrix(4, 3, rng);
  Matrix out2(5, 4);
  sboost::matmul_nt_acc(a, c, out2);
  EXPECT_LT(sboost::max_abs_diff(out2, naive_matmul(a, sboost::transpose(c))), 1e-12);
}

TEST(Matrix, AllFinite) {
  Matrix m(1, 2);
  EXPECT_TRUE(m.all_finite());
  m(0, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_FALSE(m.all_finite());
}

TEST(Parameter, BuffersMatchValueShape) {
  sboost::Parameter p(Matrix(3, 2, 1.0));
  EXPECT_TRUE(p.grad.same_shape(p.value));
  EXPECT_TRUE(p.velocity.same_shape(p.value));
  p.grad.fill(2.0);
  p.zero_grad();
  for (double v : p.grad.values()) EXPECT_EQ(v, 0.0);
}
