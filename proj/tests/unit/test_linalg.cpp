#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "lpaf/error.hpp"
#include "lpaf/linalg.hpp"
#include "lpaf/matrix.hpp"
#include "lpaf/rng.hpp"
#include "support/oracles.hpp"

using namespace lpaf;

namespace {

Matrix diag3() { return Matrix::from_rows({{3, 0, 0}, {0, 2, 0}, {0, 0, 1}}); }

Matrix reconstruct(const SvdResult& s) {
  Matrix us = s.u;
  for (std::size_t r = 0; r < us.rows(); ++r) {
    for (std::size_t c = 0; c < us.cols(); ++c) us(r, c) *= s.sigma[c];
  }
  return oracle::product(us, transpose(s.v));
}

}  // namespace

TEST(Matrix, ProductsAgreeWithNaiveLoops) {
  Rng rng(3);
  const Matrix a = Matrix::random_normal(5, 7, rng);
  const Matrix b = Matrix::random_normal(7, 4, rng);
  const Matrix c = Matrix::random_normal(4, 7, rng);
  EXPECT_LT(max_abs_diff(matmul(a, b), oracle::product(a, b)), 1e-12);
  EXPECT_LT(max_abs_diff(matmul_nt(a, c), oracle::product(a, transpose(c))), 1e-12);
  EXPECT_LT(max_abs_diff(matmul_tn(b, b), oracle::product(transpose(b), b)), 1e-12);
}

TEST(Matrix, ShapeMismatchIsRejected) {
  EXPECT_THROW(matmul(Matrix(2, 3), Matrix(2, 3)), Error);
  EXPECT_THROW(Matrix(2, 2) + Matrix(2, 3), Error);
  EXPECT_THROW(hadamard(Matrix(1, 2), Matrix(2, 1)), Error);
}

TEST(Matrix, RequireFiniteNamesTheEntry) {
  Matrix m(2, 3);
  m(1, 2) = std::numeric_limits<double>::quiet_NaN();
  try {
    require_finite(m, "w");
    FAIL() << "expected a throw";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNonFinite);
    EXPECT_NE(e.message().find("(1, 2)"), std::string::npos) << e.message();
  }
}

TEST(Svd, DiagonalMatrix) {
  const SvdResult s = svd(diag3());
  ASSERT_EQ(s.sigma.size(), 3u);
  EXPECT_NEAR(s.sigma[0], 3.0, 1e-14);
  EXPECT_NEAR(s.sigma[1], 2.0, 1e-14);
  EXPECT_NEAR(s.sigma[2], 1.0, 1e-14);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      EXPECT_NEAR(std::abs(s.u(i, j)), i == j ? 1.0 : 0.0, 1e-14);
      EXPECT_NEAR(std::abs(s.v(i, j)), i == j ? 1.0 : 0.0, 1e-14);
    }
  }
}

TEST(Svd, ZeroMatrixHasZeroSigmaAndOrthonormalFactors) {
  const SvdResult s = svd(Matrix(4, 3));
  ASSERT_EQ(s.sigma.size(), 3u);
  for (double x : s.sigma) EXPECT_EQ(x, 0.0);
  EXPECT_LT(oracle::max_orthogonality_defect(s.u), 1e-12);
  EXPECT_LT(oracle::max_orthogonality_defect(s.v), 1e-12);
}

TEST(Svd, MatchesEigenOracleOnRandom8x5) {
  Rng rng(11);
  const Matrix w = Matrix::random_normal(8, 5, rng);
  const SvdResult s = svd(w);
  const std::vector<double> ref = oracle::singular_values(w);
  ASSERT_EQ(s.sigma.size(), ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(s.sigma[i], ref[i], 1e-8) << i;
}

TEST(Svd, WideAndTallShapesReconstruct) {
  Rng rng(5);
  for (auto [n, m] : {std::pair<std::size_t, std::size_t>{3, 9}, {9, 3}, {1, 6}, {6, 1}, {7, 7}}) {
    const Matrix w = Matrix::random_normal(n, m, rng);
    const SvdResult s = svd(w);
    EXPECT_EQ(s.u.rows(), n);
    EXPECT_EQ(s.v.rows(), m);
    EXPECT_LE(frobenius_norm(reconstruct(s) - w) / frobenius_norm(w), 1e-12);
    EXPECT_LT(oracle::max_orthogonality_defect(s.u), 1e-12);
    EXPECT_LT(oracle::max_orthogonality_defect(s.v), 1e-12);
  }
}

TEST(Svd, SortedNonNegativeAndSignConvention) {
  Rng rng(8);
  const Matrix w = Matrix::random_normal(12, 9, rng);
  const SvdResult s = svd(w);
  for (std::size_t i = 0; i + 1 < s.sigma.size(); ++i) EXPECT_GE(s.sigma[i], s.sigma[i + 1]);
  for (double x : s.sigma) EXPECT_GE(x, 0.0);
  for (std::size_t c = 0; c < s.u.cols(); ++c) {
    for (std::size_t r = 0; r < s.u.rows(); ++r) {
      if (s.u(r, c) != 0.0) {
        EXPECT_GT(s.u(r, c), 0.0) << "column " << c;
        break;
      }
    }
  }
}

TEST(Svd, RankDeficientInputKeepsOrthonormalBasis) {
  // Three nonzero rows out of ten, plus a duplicated column.
  Rng rng(21);
  Matrix w(10, 6);
  for (std::size_t r : {1u, 4u, 7u}) {
    for (std::size_t c = 0; c < 5; ++c) w(r, c) = rng.normal();
    w(r, 5) = w(r, 0);
  }
  const SvdResult s = svd(w);
  EXPECT_LT(oracle::max_orthogonality_defect(s.u), 1e-10);
  EXPECT_LT(oracle::max_orthogonality_defect(s.v), 1e-10);
  EXPECT_LE(frobenius_norm(reconstruct(s) - w) / frobenius_norm(w), 1e-12);
  EXPECT_LE(numerical_rank(w), 3u);
}

TEST(Svd, DeterministicForFixedInput) {
  Rng rng(2);
  const Matrix w = Matrix::random_normal(9, 6, rng);
  const SvdResult a = svd(w), b = svd(w);
  EXPECT_EQ(a.u, b.u);
  EXPECT_EQ(a.v, b.v);
  EXPECT_EQ(a.sigma, b.sigma);
}

TEST(Svd, NonFiniteInputIsRejectedWithIndex) {
  Matrix w(3, 3, 1.0);
  w(2, 0) = std::numeric_limits<double>::infinity();
  try {
    svd(w);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNonFinite);
    EXPECT_NE(e.message().find("(2, 0)"), std::string::npos) << e.message();
  }
}

TEST(Svd, EmptyInputIsRejected) {
  EXPECT_THROW(svd(Matrix()), Error);
}

TEST(Truncate, DiagonalRankTwo) {
  const FactorPair f = truncate(svd(diag3()), 2);
  EXPECT_EQ(f.rank(), 2u);
  const Matrix ab = f.product();
  const Matrix want = Matrix::from_rows({{3, 0, 0}, {0, 2, 0}, {0, 0, 0}});
  EXPECT_LT(max_abs_diff(ab, want), 1e-14);
  EXPECT_EQ(f.parameter_count(), 2u * (3 + 3));
}

TEST(Truncate, RankOneOuterProductIsExact) {
  const Matrix x = Matrix::from_rows({{1}, {-2}, {0.5}, {3}});
  const Matrix y = Matrix::from_rows({{2, 0.25, -1}});
  const Matrix w = matmul(x, y);
  EXPECT_LE(frobenius_error(w, truncate(svd(w), 1)), 1e-10);
}

TEST(Truncate, ResidualEqualsSigmaTail6x5) {
  Rng rng(6);
  const Matrix w = Matrix::random_normal(6, 5, rng);
  const SvdResult s = svd(w);
  const double tail = std::sqrt(s.sigma[3] * s.sigma[3] + s.sigma[4] * s.sigma[4]);
  const FactorPair f = truncate(s, 3);
  EXPECT_NEAR(oracle::plain_frobenius(w - oracle::product(f.a, f.b)), tail, 1e-8);
}

TEST(Truncate, OutOfRangeRankIsRejected) {
  const SvdResult s = svd(diag3());
  EXPECT_THROW(truncate(s, 0), Error);
  EXPECT_THROW(truncate(s, 4), Error);
}

TEST(Truncate, FullRankReproducesInput) {
  Rng rng(13);
  const Matrix w = Matrix::random_normal(7, 5, rng);
  const SvdResult s = svd(w);
  EXPECT_LE(frobenius_error(w, truncate(s, s.rank())) / frobenius_norm(w), 1e-8);
}

TEST(NumericalRank, Examples) {
  EXPECT_EQ(numerical_rank(Matrix::identity(4)), 4u);
  EXPECT_EQ(numerical_rank(Matrix(5, 3)), 0u);
  Rng rng(4);
  Matrix w(10, 8);
  for (std::size_t r : {0u, 5u, 9u}) {
    for (std::size_t c = 0; c < 8; ++c) w(r, c) = rng.normal();
  }
  EXPECT_LE(numerical_rank(w), 3u);
}

TEST(NumericalRank, InvariantUnderTranspose) {
  Rng rng(17);
  for (int t = 0; t < 20; ++t) {
    const std::size_t k = 1 + rng.below(5);
    const Matrix w = matmul(Matrix::random_normal(9, k, rng), Matrix::random_normal(k, 7, rng));
    EXPECT_EQ(numerical_rank(w), numerical_rank(transpose(w)));
    EXPECT_EQ(numerical_rank(w), k);
  }
}

TEST(FrobeniusError, Examples) {
  EXPECT_NEAR(frobenius_error(diag3(), truncate(svd(diag3()), 2)), 1.0, 1e-14);
  Rng rng(9);
  const Matrix w = Matrix::random_normal(8, 8, rng);
  const SvdResult s = svd(w);
  double tail = 0.0;
  for (std::size_t i = 4; i < 8; ++i) tail += s.sigma[i] * s.sigma[i];
  EXPECT_NEAR(frobenius_error(w, truncate(s, 4)), std::sqrt(tail), 1e-8);
  EXPECT_THROW(frobenius_error(Matrix(3, 3), truncate(svd(Matrix::identity(4)), 2)), Error);
}

TEST(CumulativeFraction, Examples) {
  EXPECT_DOUBLE_EQ(cumulative_singular_fraction(Matrix::identity(4), 2), 0.5);
  const Matrix r1 = matmul(Matrix::from_rows({{1}, {2}}), Matrix::from_rows({{3, 4, 5}}));
  EXPECT_NEAR(cumulative_singular_fraction(r1, 1), 1.0, 1e-12);
  EXPECT_NEAR(cumulative_singular_fraction(diag3(), 2), 5.0 / 6.0, 1e-14);
  EXPECT_EQ(cumulative_singular_fraction(Matrix(3, 3), 1), 1.0);
  EXPECT_THROW(cumulative_singular_fraction(diag3(), 0), Error);
  EXPECT_THROW(cumulative_singular_fraction(diag3(), 4), Error);
}

TEST(CumulativeFraction, NonDecreasingAndReachesOne) {
  Rng rng(31);
  const Matrix w = Matrix::random_normal(10, 6, rng);
  double prev = 0.0;
  for (std::size_t k = 1; k <= 6; ++k) {
    const double f = cumulative_singular_fraction(w, k);
    EXPECT_GE(f, prev);
    prev = f;
  }
  EXPECT_NEAR(prev, 1.0, 1e-14);
}
