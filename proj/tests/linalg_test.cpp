#include <gtest/gtest.h>

#include <Eigen/Dense>

#include "support.hpp"

using namespace halo;
using halo::testing::random_matrix;
using halo::testing::rel_err;

namespace {

SparseMatrix random_sparse(CounterRng& rng, std::size_t r, std::size_t c, double density) {
  std::vector<Triplet> t;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j)
      if (rng.uniform() < density) t.push_back({i, j, rng.normal()});
  return SparseMatrix::from_triplets(r, c, std::move(t));
}

// Naive triple loop, independent of the library kernels.
Matrix naive_product(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

std::vector<double> row_stack(const Matrix& m) { return {m.values().begin(), m.values().end()}; }

}  // namespace

TEST(Spmm, IdentityTimesDenseIsDense) {
  CounterRng rng(1);
  const Matrix b = random_matrix(rng, 6, 3);
  EXPECT_EQ(spmm(SparseMatrix::identity(6), b), b);
}

TEST(Spmm, ZeroTimesDenseIsZero) {
  CounterRng rng(2);
  const Matrix b = random_matrix(rng, 5, 4);
  EXPECT_EQ(spmm(SparseMatrix(3, 5), b), Matrix(3, 4));
}

TEST(Spmm, MatchesDensifiedProduct) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CounterRng rng(seed, 3);
    const SparseMatrix a = random_sparse(rng, 20, 15, 0.1);
    const Matrix b = random_matrix(rng, 15, 4);
    const Matrix expected = naive_product(a.to_dense(), b);
    if (frobenius_norm(expected) == 0.0) continue;
    EXPECT_LT(rel_err(spmm(a, b), expected), 1e-12);
  }
}

TEST(Spmm, RejectsInnerDimensionMismatch) {
  EXPECT_THROW(spmm(SparseMatrix(3, 4), Matrix(5, 2)), ShapeError);
}

TEST(SparseMatrix, DuplicatesAreSummedAndIndicesSorted) {
  const auto a = SparseMatrix::from_triplets(2, 3, {{1, 2, 1.0}, {0, 1, 2.0}, {1, 0, 3.0}, {1, 2, 4.0}});
  EXPECT_EQ(a.nnz(), 3u);
  const Matrix d = a.to_dense();
  EXPECT_EQ(d, (Matrix{{0, 2, 0}, {3, 0, 5}}));
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = a.offsets()[i] + 1; k < a.offsets()[i + 1]; ++k) EXPECT_LT(a.indices()[k - 1], a.indices()[k]);
}

TEST(SparseMatrix, RejectsOutOfRangeAndNonFinite) {
  EXPECT_THROW(SparseMatrix::from_triplets(2, 2, {{2, 0, 1.0}}), ShapeError);
  EXPECT_THROW(SparseMatrix::from_triplets(2, 2, {{0, 0, std::nan("")}}), NumericError);
}

TEST(SparseMatrix, TransposeMatchesDense) {
  CounterRng rng(4);
  const auto a = random_sparse(rng, 7, 5, 0.3);
  EXPECT_EQ(a.transposed().to_dense(), transpose(a.to_dense()));
}

TEST(Kron, IdentityTwoGivesBlockDiagonal) {
  const Matrix b{{1, 2}, {3, 4}};
  const Matrix expected{{1, 2, 0, 0}, {3, 4, 0, 0}, {0, 0, 1, 2}, {0, 0, 3, 4}};
  EXPECT_EQ(kron(Matrix::identity(2), b), expected);
}

TEST(Kron, EntryFormula) {
  CounterRng rng(5);
  const Matrix a = random_matrix(rng, 2, 3), b = random_matrix(rng, 4, 2);
  const Matrix k = kron(a, b);
  ASSERT_EQ(k.rows(), 8u);
  ASSERT_EQ(k.cols(), 6u);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t p = 0; p < 4; ++p)
        for (std::size_t q = 0; q < 2; ++q) EXPECT_EQ(k(i * 4 + p, j * 2 + q), a(i, j) * b(p, q));
}

TEST(Kron, RothColumnIdentity) {
  CounterRng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix x = random_matrix(rng, 3, 2), y = random_matrix(rng, 2, 2), z = random_matrix(rng, 2, 3);
    const auto lhs = vectorize(naive_product(naive_product(x, y), z));
    const auto rhs = matvec(kron(transpose(z), x), vectorize(y));
    EXPECT_LT(rel_err(lhs, rhs), 1e-12);
  }
}

TEST(Kron, RowStackingBreaksRothIdentity) {
  // The identity is specific to column stacking: with row stacking it fails on
  // a generic non-symmetric instance.
  CounterRng rng(7);
  const Matrix x = random_matrix(rng, 3, 2), y = random_matrix(rng, 2, 2), z = random_matrix(rng, 2, 3);
  const auto lhs = row_stack(naive_product(naive_product(x, y), z));
  const auto rhs = matvec(kron(transpose(z), x), row_stack(y));
  EXPECT_GT(rel_err(lhs, rhs), 1e-3);
}

TEST(Kron, MixedProduct) {
  CounterRng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = random_matrix(rng, 2, 2), b = random_matrix(rng, 2, 2), c = random_matrix(rng, 2, 2),
                 d = random_matrix(rng, 2, 2);
    EXPECT_LT(rel_err(naive_product(kron(a, b), kron(c, d)), kron(naive_product(a, c), naive_product(b, d))), 1e-12);
  }
}

TEST(Kron, SizeCapEnforced) {
  EXPECT_THROW(kron(Matrix(1001, 1), Matrix(1000, 1)), ConfigError);
}

TEST(Kron, AccumulateMatchesDenseKron) {
  CounterRng rng(9);
  const Matrix x = random_matrix(rng, 2, 3);
  const auto a = random_sparse(rng, 4, 5, 0.4);
  Matrix target(10, 17, 1.0);
  kron_accumulate(x, a, target, 1, 2);
  const Matrix k = kron(x, a.to_dense());
  for (std::size_t i = 0; i < target.rows(); ++i)
    for (std::size_t j = 0; j < target.cols(); ++j) {
      const bool inside = i >= 1 && i < 9 && j >= 2 && j < 17;
      EXPECT_EQ(target(i, j), 1.0 + (inside ? k(i - 1, j - 2) : 0.0));
    }
}

TEST(Vectorize, ColumnStacking) {
  const auto v = vectorize(Matrix{{1, 2}, {3, 4}});
  EXPECT_EQ(v, (std::vector<double>{1, 3, 2, 4}));
}

TEST(Vectorize, RoundTrip) {
  CounterRng rng(10);
  const Matrix m = random_matrix(rng, 4, 3);
  EXPECT_EQ(unvectorize(vectorize(m), 4, 3), m);
}

TEST(PowerIteration, DiagonalSpectrum) {
  const std::vector<double> diag{3.0, 1.0, -1.0};
  auto op = [&](std::span<const double> x, std::span<double> y) {
    for (std::size_t i = 0; i < 3; ++i) y[i] = diag[i] * x[i];
  };
  const auto r = power_iteration_sym(op, 3, 1e-10, 10'000);
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.value, 3.0, 1e-8);
}

TEST(PowerIteration, ZeroOperator) {
  auto op = [](std::span<const double>, std::span<double> y) { std::fill(y.begin(), y.end(), 0.0); };
  const auto r = power_iteration_sym(op, 5, 1e-6, 100);
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.value, 0.0);
}

TEST(PowerIteration, MatchesDenseEigensolver) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    CounterRng rng(seed, 11);
    const std::size_t n = 40;
    Matrix b = random_matrix(rng, n, n);
    Matrix a = b + transpose(b);
    // Positive shift so the largest-magnitude eigenvalue is the largest one.
    for (std::size_t i = 0; i < n; ++i) a(i, i) += 30.0;
    Eigen::MatrixXd e(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) e(i, j) = a(i, j);
    const double expected = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(e).eigenvalues().maxCoeff();
    auto op = [&](std::span<const double> x, std::span<double> y) {
      const auto r = matvec(a, x);
      std::copy(r.begin(), r.end(), y.begin());
    };
    const auto r = power_iteration_sym(op, n, 1e-12, 200'000);
    EXPECT_TRUE(r.converged);
    EXPECT_NEAR(r.value, expected, 1e-6 * std::abs(expected));
  }
}

TEST(PowerIteration, RejectsNonPositiveTolerance) {
  auto op = [](std::span<const double>, std::span<double>) {};
  EXPECT_THROW(power_iteration_sym(op, 2, 0.0, 10), ConfigError);
}

TEST(DenseSolve, IdentityReturnsRhs) {
  CounterRng rng(12);
  const Matrix b = random_matrix(rng, 4, 2);
  EXPECT_LT(rel_err(dense_solve(Matrix::identity(4), b), b), 1e-15);
}

TEST(DenseSolve, ScaledIdentity) {
  Matrix a = Matrix::identity(3);
  a *= 2.0;
  Matrix expected = Matrix::identity(3);
  expected *= 0.5;
  EXPECT_LT(rel_err(dense_solve(a, Matrix::identity(3)), expected), 1e-15);
}

TEST(DenseSolve, ResidualOnRandomSystem) {
  CounterRng rng(13);
  Matrix a = random_matrix(rng, 50, 50);
  for (std::size_t i = 0; i < 50; ++i) a(i, i) += 20.0;
  const Matrix b = random_matrix(rng, 50, 3);
  const Matrix x = dense_solve(a, b);
  EXPECT_LT(frobenius_norm(naive_product(a, x) - b) / frobenius_norm(b), 1e-10);
}

TEST(DenseSolve, SingularSystemReported) {
  const Matrix a{{1, 2}, {2, 4}};
  EXPECT_THROW(dense_solve(a, Matrix(2, 1, 1.0)), NumericError);
}

TEST(Matrix, NonFiniteGuard) {
  Matrix m(2, 2);
  m(1, 1) = std::numeric_limits<double>::infinity();
  EXPECT_FALSE(all_finite(m));
  EXPECT_THROW(require_finite(m, "m"), NumericError);
}

TEST(Matrix, DenseProductsAgree) {
  CounterRng rng(14);
  const Matrix a = random_matrix(rng, 5, 3), b = random_matrix(rng, 3, 4), c = random_matrix(rng, 5, 4);
  EXPECT_LT(rel_err(matmul(a, b), naive_product(a, b)), 1e-14);
  EXPECT_LT(rel_err(matmul_tn(a, c), naive_product(transpose(a), c)), 1e-14);
  EXPECT_LT(rel_err(matmul_nt(a, transpose(b)), naive_product(a, b)), 1e-14);
  EXPECT_THROW(matmul(a, c), ShapeError);
}
