#pragma once
/*
 * Dense and sparse kernels used by the unfolding layers.
 *
 *  - Matrix        row-major dense matrix of doubles with value semantics
 *  - SparseMatrix  compressed sparse row storage, duplicates summed on build
 *  - spmm          sparse x dense product, cost O(nnz * cols)
 *  - kron / vectorize / unvectorize   oracle-scale helpers; vectorize stacks
 *                  columns so that vec(XYZ) = (Z^T kron X) vec(Y)
 *  - power_iteration_sym   matrix-free Rayleigh quotient iteration
 *  - dense_solve   pivoted LU for the closed-form oracle
 */

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "halo/errors.hpp"
#include "halo/rng.hpp"

namespace halo {

class Matrix {
public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  Matrix(std::initializer_list<std::initializer_list<double>> init) {
    rows_ = init.size();
    cols_ = rows_ ? init.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& row : init) {
      if (row.size() != cols_) throw ShapeError("Matrix: ragged initializer");
      data_.insert(data_.end(), row.begin(), row.end());
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  Matrix& operator+=(const Matrix& o) {
    require_same(o, "+=");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
    return *this;
  }
  Matrix& operator-=(const Matrix& o) {
    require_same(o, "-=");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= o.data_[k];
    return *this;
  }
  Matrix& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }

  /// this += s * o
  void axpy(double s, const Matrix& o) {
    require_same(o, "axpy");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += s * o.data_[k];
  }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

  std::string shape_string() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
  }

private:
  void require_same(const Matrix& o, const char* op) const {
    if (!same_shape(o))
      throw ShapeError(std::string("Matrix ") + op + ": " + shape_string() + " vs " + o.shape_string());
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
inline Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
inline Matrix operator*(double s, Matrix a) { return a *= s; }

inline Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

/// A * B
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: " + a.shape_string() + " * " + b.shape_string());
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out = c.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out[j] += aik * brow[j];
    }
  }
  return c;
}

/// A^T * B
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows())
    throw ShapeError("matmul_tn: " + a.shape_string() + "^T * " + b.shape_string());
  Matrix c(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    auto arow = a.row(k);
    auto brow = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = arow[i];
      if (aki == 0.0) continue;
      auto out = c.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) out[j] += aki * brow[j];
    }
  }
  return c;
}

/// A * B^T
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols())
    throw ShapeError("matmul_nt: " + a.shape_string() + " * " + b.shape_string() + "^T");
  Matrix c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto arow = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      auto brow = b.row(j);
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += arow[k] * brow[k];
      c(i, j) = acc;
    }
  }
  return c;
}

/// diag(d) * M
inline Matrix scale_rows(std::span<const double> d, const Matrix& m) {
  if (d.size() != m.rows())
    throw ShapeError("scale_rows: diagonal of length " + std::to_string(d.size()) + " vs " + m.shape_string());
  Matrix out = m;
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (double& v : out.row(i)) v *= d[i];
  return out;
}

inline Matrix hadamard(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw ShapeError("hadamard: " + a.shape_string() + " vs " + b.shape_string());
  Matrix c = a;
  for (std::size_t k = 0; k < c.size(); ++k) c.data()[k] *= b.data()[k];
  return c;
}

/// Frobenius inner product.
inline double dot(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw ShapeError("dot: " + a.shape_string() + " vs " + b.shape_string());
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) acc += a.data()[k] * b.data()[k];
  return acc;
}

inline double frobenius_norm(const Matrix& a) { return std::sqrt(dot(a, a)); }

inline double max_abs(const Matrix& a) {
  double m = 0.0;
  for (double v : a.values()) m = std::max(m, std::abs(v));
  return m;
}

inline bool all_finite(const Matrix& a) {
  return std::all_of(a.values().begin(), a.values().end(), [](double v) { return std::isfinite(v); });
}

inline void require_finite(const Matrix& a, const std::string& what) {
  if (!all_finite(a)) throw NumericError(what + ": non-finite entry");
}

// ---------------------------------------------------------------------------

struct Triplet {
  std::size_t row;
  std::size_t col;
  double value;
};

/// Compressed sparse row matrix. Column indices are strictly increasing
/// within a row; duplicate coordinates are summed at construction.
class SparseMatrix {
public:
  SparseMatrix() = default;
  SparseMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), offsets_(rows + 1, 0) {}

  static SparseMatrix from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> triplets) {
    for (const auto& t : triplets) {
      if (t.row >= rows || t.col >= cols)
        throw ShapeError("SparseMatrix: entry (" + std::to_string(t.row) + "," + std::to_string(t.col) +
                         ") outside " + std::to_string(rows) + "x" + std::to_string(cols));
      if (!std::isfinite(t.value)) throw NumericError("SparseMatrix: non-finite value");
    }
    std::stable_sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
      return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    SparseMatrix m(rows, cols);
    for (std::size_t k = 0; k < triplets.size();) {
      const auto& t = triplets[k];
      double v = 0.0;
      std::size_t e = k;
      for (; e < triplets.size() && triplets[e].row == t.row && triplets[e].col == t.col; ++e)
        v += triplets[e].value;
      m.indices_.push_back(t.col);
      m.values_.push_back(v);
      ++m.offsets_[t.row + 1];
      k = e;
    }
    std::partial_sum(m.offsets_.begin(), m.offsets_.end(), m.offsets_.begin());
    return m;
  }

  static SparseMatrix identity(std::size_t n) {
    std::vector<Triplet> t;
    for (std::size_t i = 0; i < n; ++i) t.push_back({i, i, 1.0});
    return from_triplets(n, n, std::move(t));
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t nnz() const { return values_.size(); }

  std::span<const std::size_t> offsets() const { return offsets_; }
  std::span<const std::size_t> indices() const { return indices_; }
  std::span<const double> values() const { return values_; }

  double row_sum(std::size_t i) const {
    double s = 0.0;
    for (std::size_t k = offsets_[i]; k < offsets_[i + 1]; ++k) s += values_[k];
    return s;
  }

  SparseMatrix transposed() const {
    std::vector<Triplet> t;
    t.reserve(nnz());
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t k = offsets_[i]; k < offsets_[i + 1]; ++k) t.push_back({indices_[k], i, values_[k]});
    return from_triplets(cols_, rows_, std::move(t));
  }

  Matrix to_dense() const {
    Matrix d(rows_, cols_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t k = offsets_[i]; k < offsets_[i + 1]; ++k) d(i, indices_[k]) = values_[k];
    return d;
  }

  friend bool operator==(const SparseMatrix& a, const SparseMatrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.offsets_ == b.offsets_ && a.indices_ == b.indices_ &&
           a.values_ == b.values_;
  }

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> indices_;
  std::vector<double> values_;
};

/// A * B for sparse A. Rows are accumulated in storage order, so the result
/// does not depend on how callers partition the work.
inline Matrix spmm(const SparseMatrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw ShapeError("spmm: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " * " +
                     b.shape_string());
  Matrix c(a.rows(), b.cols());
  const auto off = a.offsets();
  const auto idx = a.indices();
  const auto val = a.values();
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* out = c.data() + i * n;
    for (std::size_t k = off[i]; k < off[i + 1]; ++k) {
      const double v = val[k];
      const double* brow = b.data() + idx[k] * n;
      for (std::size_t j = 0; j < n; ++j) out[j] += v * brow[j];
    }
  }
  return c;
}

// ---------------------------------------------------------------------------

inline constexpr std::size_t kKronEntryCap = 1'000'000;

/// Kronecker product (A kron B)[(i*p+k),(j*q+l)] = A[i,j] * B[k,l].
inline Matrix kron(const Matrix& a, const Matrix& b) {
  const std::size_t r = a.rows() * b.rows();
  const std::size_t c = a.cols() * b.cols();
  if (r * c > kKronEntryCap)
    throw ConfigError("kron: result " + std::to_string(r) + "x" + std::to_string(c) + " exceeds cap of " +
                      std::to_string(kKronEntryCap) + " entries");
  Matrix out(r, c);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) {
      const double aij = a(i, j);
      for (std::size_t k = 0; k < b.rows(); ++k)
        for (std::size_t l = 0; l < b.cols(); ++l) out(i * b.rows() + k, j * b.cols() + l) = aij * b(k, l);
    }
  return out;
}

/// target[row0.., col0..] += X kron A for sparse A, without materializing
/// the product.
inline void kron_accumulate(const Matrix& x, const SparseMatrix& a, Matrix& target, std::size_t row0,
                            std::size_t col0) {
  if (row0 + x.rows() * a.rows() > target.rows() || col0 + x.cols() * a.cols() > target.cols())
    throw ShapeError("kron_accumulate: block does not fit in target " + target.shape_string());
  const auto off = a.offsets();
  const auto idx = a.indices();
  const auto val = a.values();
  for (std::size_t p = 0; p < x.rows(); ++p)
    for (std::size_t q = 0; q < x.cols(); ++q) {
      const double xpq = x(p, q);
      if (xpq == 0.0) continue;
      for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = off[i]; k < off[i + 1]; ++k)
          target(row0 + p * a.rows() + i, col0 + q * a.cols() + idx[k]) += xpq * val[k];
    }
}

/// Column-stacking vectorization.
inline std::vector<double> vectorize(const Matrix& m) {
  std::vector<double> v(m.size());
  for (std::size_t j = 0; j < m.cols(); ++j)
    for (std::size_t i = 0; i < m.rows(); ++i) v[j * m.rows() + i] = m(i, j);
  return v;
}

inline Matrix unvectorize(std::span<const double> v, std::size_t rows, std::size_t cols) {
  if (v.size() != rows * cols)
    throw ShapeError("unvectorize: length " + std::to_string(v.size()) + " vs " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  Matrix m(rows, cols);
  for (std::size_t j = 0; j < cols; ++j)
    for (std::size_t i = 0; i < rows; ++i) m(i, j) = v[j * rows + i];
  return m;
}

/// Dense matrix-vector product.
inline std::vector<double> matvec(const Matrix& a, std::span<const double> x) {
  if (a.cols() != x.size()) throw ShapeError("matvec: " + a.shape_string() + " * vector " + std::to_string(x.size()));
  std::vector<double> y(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto r = a.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) acc += r[j] * x[j];
    y[i] = acc;
  }
  return y;
}

// ---------------------------------------------------------------------------

/// y = Op(x) for a symmetric operator; x and y have the same length.
using SymmetricOperator = std::function<void(std::span<const double> x, std::span<double> y)>;

struct PowerIterationResult {
  double value = 0.0;  ///< Rayleigh quotient of the dominant eigenvector.
  int iterations = 0;
  bool converged = false;
};

/// Estimates the largest-magnitude eigenvalue of a symmetric operator.
/// Converged once successive Rayleigh quotients differ by less than
/// tol * max(1, |estimate|). Starts from a fixed pseudo-random vector, or
/// from *warm when it is given with length n; the final iterate is written
/// back to *warm.
inline PowerIterationResult power_iteration_sym(const SymmetricOperator& apply, std::size_t n, double tol,
                                                int max_iters, std::vector<double>* warm = nullptr) {
  if (!(tol > 0.0)) throw ConfigError("power_iteration_sym: tol must be positive");
  PowerIterationResult res;
  if (n == 0) {
    res.converged = true;
    return res;
  }
  CounterRng rng(0x5eed5eedULL);
  std::vector<double> v(n), w(n);
  if (warm && warm->size() == n && std::any_of(warm->begin(), warm->end(), [](double e) { return e != 0.0; }))
    v = *warm;
  else
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
  auto normalize = [](std::vector<double>& x) {
    double s = 0.0;
    for (double e : x) s += e * e;
    s = std::sqrt(s);
    if (s > 0.0)
      for (double& e : x) e /= s;
    return s;
  };
  normalize(v);
  struct Keep {
    std::vector<double>* dst;
    const std::vector<double>& src;
    ~Keep() {
      if (dst) *dst = src;
    }
  } keep{warm, v};
  double prev = 0.0;
  for (int it = 1; it <= max_iters; ++it) {
    std::fill(w.begin(), w.end(), 0.0);
    apply(v, w);
    double rq = 0.0;
    for (std::size_t i = 0; i < n; ++i) rq += v[i] * w[i];
    if (!std::isfinite(rq)) throw NumericError("power_iteration_sym: non-finite Rayleigh quotient");
    res.value = rq;
    res.iterations = it;
    if (normalize(w) == 0.0) {
      // v lies in the null space; the operator is zero on the Krylov space.
      res.value = 0.0;
      res.converged = true;
      return res;
    }
    if (it > 1 && std::abs(rq - prev) < tol * std::max(1.0, std::abs(rq))) {
      res.converged = true;
      return res;
    }
    prev = rq;
    v.swap(w);
  }
  return res;
}

/// Largest algebraic eigenvalue of a dense symmetric matrix (oracle-scale fallback).
inline double dense_max_eigenvalue(const Matrix& a) {
  if (a.rows() != a.cols()) throw ShapeError("dense_max_eigenvalue: matrix not square");
  if (a.rows() == 0) return 0.0;
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(a.data(), a.rows(),
                                                                                             a.cols());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericError("dense_max_eigenvalue: eigensolver failed");
  return es.eigenvalues().maxCoeff();
}

/// Solves A X = B with partial-pivot LU. Throws NumericError when the
/// smallest pivot falls below 1e-12 times the largest entry of A.
inline Matrix dense_solve(const Matrix& a, const Matrix& b) {
  if (a.rows() != a.cols()) throw ShapeError("dense_solve: A is " + a.shape_string());
  if (a.rows() != b.rows()) throw ShapeError("dense_solve: A " + a.shape_string() + " vs B " + b.shape_string());
  require_finite(a, "dense_solve A");
  require_finite(b, "dense_solve B");
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMat> am(a.data(), a.rows(), a.cols());
  Eigen::Map<const RowMat> bm(b.data(), b.rows(), b.cols());
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(am);
  const double scale = std::max(max_abs(a), 1e-300);
  const double min_pivot = a.rows() ? lu.matrixLU().diagonal().cwiseAbs().minCoeff() : 1.0;
  if (min_pivot < 1e-12 * scale) {
    std::ostringstream os;
    os << "dense_solve: numerically singular system (smallest pivot " << min_pivot << ", scale " << scale << ")";
    throw NumericError(os.str());
  }
  RowMat x = lu.solve(Eigen::MatrixXd(bm));
  Matrix out(b.rows(), b.cols());
  Eigen::Map<RowMat>(out.data(), out.rows(), out.cols()) = x;
  return out;
}

}  // namespace halo
