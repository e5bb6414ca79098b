#ifndef ETREE_MATRIX_HPP_
#define ETREE_MATRIX_HPP_

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "etree/common.hpp"

namespace etree {

using index_t = std::size_t;

// Dense row-major matrix of doubles. Solver state keeps entries finite; the
// check is explicit (check_finite) rather than on every write.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(index_t rows, index_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), v_(rows * cols, fill) {}

  index_t rows() const { return rows_; }
  index_t cols() const { return cols_; }

  double& operator()(index_t i, index_t j) { return v_[i * cols_ + j]; }
  double operator()(index_t i, index_t j) const { return v_[i * cols_ + j]; }

  double* row_ptr(index_t i) { return v_.data() + i * cols_; }
  const double* row_ptr(index_t i) const { return v_.data() + i * cols_; }

  std::vector<double>& data() { return v_; }
  const std::vector<double>& data() const { return v_; }

  double frobenius_sq() const {
    double s = 0.0;
    for (double x : v_) s += x * x;
    return s;
  }

  void check_finite(const std::string& name) const {
    for (double x : v_)
      if (!std::isfinite(x)) throw NumericError("non-finite entry in " + name);
  }

  bool operator==(const DenseMatrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && v_ == o.v_;
  }

 private:
  index_t rows_ = 0, cols_ = 0;
  std::vector<double> v_;
};

// Diagonal matrix stored as its diagonal only.
class DiagonalMatrix {
 public:
  DiagonalMatrix() = default;
  explicit DiagonalMatrix(index_t order, double fill = 1.0) : d_(order, fill) {}
  explicit DiagonalMatrix(std::vector<double> diag) : d_(std::move(diag)) {}

  index_t order() const { return d_.size(); }
  double& operator[](index_t i) { return d_[i]; }
  double operator[](index_t i) const { return d_[i]; }
  std::vector<double>& diag() { return d_; }
  const std::vector<double>& diag() const { return d_; }

 private:
  std::vector<double> d_;
};

// Lower-triangular Cholesky factor; diagonal strictly positive by
// construction (cholesky_factor throws otherwise).
class LowerTriangular {
 public:
  LowerTriangular() = default;
  explicit LowerTriangular(index_t order) : n_(order), v_(order * order, 0.0) {}

  index_t order() const { return n_; }
  double& operator()(index_t i, index_t j) { return v_[i * n_ + j]; }
  double operator()(index_t i, index_t j) const { return v_[i * n_ + j]; }

 private:
  index_t n_ = 0;
  std::vector<double> v_;
};

// L L^T = G for symmetric positive definite G. Throws NumericError naming the
// offending pivot if a diagonal pivot is not strictly positive.
inline LowerTriangular cholesky_factor(const DenseMatrix& G) {
  require(G.rows() == G.cols(), "cholesky_factor: matrix must be square");
  const index_t n = G.rows();
  LowerTriangular L(n);
  for (index_t j = 0; j < n; ++j) {
    double diag = G(j, j);
    for (index_t k = 0; k < j; ++k) diag -= L(j, k) * L(j, k);
    if (!(diag > 0.0))
      throw NumericError("cholesky_factor: non-positive pivot at index " +
                         std::to_string(j));
    const double ljj = std::sqrt(diag);
    L(j, j) = ljj;
    for (index_t i = j + 1; i < n; ++i) {
      double s = G(i, j);
      for (index_t k = 0; k < j; ++k) s -= L(i, k) * L(j, k);
      L(i, j) = s / ljj;
    }
  }
  return L;
}

// Solves (L L^T) y = rhs by forward then backward substitution, in place.
inline void cholesky_solve_inplace(const LowerTriangular& L, double* y) {
  const index_t n = L.order();
  for (index_t i = 0; i < n; ++i) {
    double s = y[i];
    for (index_t k = 0; k < i; ++k) s -= L(i, k) * y[k];
    y[i] = s / L(i, i);
  }
  for (index_t ii = n; ii-- > 0;) {
    double s = y[ii];
    for (index_t k = ii + 1; k < n; ++k) s -= L(k, ii) * y[k];
    y[ii] = s / L(ii, ii);
  }
}

inline std::vector<double> cholesky_solve(const LowerTriangular& L,
                                          std::vector<double> rhs) {
  require(L.order() == rhs.size(), "cholesky_solve: order mismatch");
  cholesky_solve_inplace(L, rhs.data());
  return rhs;
}

// Each nonzero row scaled to unit l2 norm; an all-zero row maps to e_1 so the
// result is always a valid unit vector. Idempotent.
inline DenseMatrix normalize_rows(const DenseMatrix& B) {
  DenseMatrix out = B;
  for (index_t i = 0; i < B.rows(); ++i) {
    double nrm = 0.0;
    for (index_t j = 0; j < B.cols(); ++j) nrm += B(i, j) * B(i, j);
    nrm = std::sqrt(nrm);
    if (nrm > 0.0) {
      for (index_t j = 0; j < B.cols(); ++j) out(i, j) = B(i, j) / nrm;
    } else {
      for (index_t j = 0; j < B.cols(); ++j) out(i, j) = (j == 0) ? 1.0 : 0.0;
    }
  }
  return out;
}

// Elementwise projection onto the nonnegative orthant.
inline DenseMatrix project_nonneg(const DenseMatrix& M) {
  DenseMatrix out = M;
  for (double& x : out.data())
    if (x < 0.0) x = 0.0;
  return out;
}

inline DenseMatrix matmul(const DenseMatrix& A, const DenseMatrix& B) {
  require(A.cols() == B.rows(), "matmul: inner dimension mismatch");
  DenseMatrix C(A.rows(), B.cols(), 0.0);
  for (index_t i = 0; i < A.rows(); ++i)
    for (index_t k = 0; k < A.cols(); ++k) {
      const double a = A(i, k);
      if (a == 0.0) continue;
      for (index_t j = 0; j < B.cols(); ++j) C(i, j) += a * B(k, j);
    }
  return C;
}

// C = A^T * B without forming A^T.
inline DenseMatrix matmul_transposed_left(const DenseMatrix& A, const DenseMatrix& B) {
  require(A.rows() == B.rows(), "matmul_transposed_left: row mismatch");
  DenseMatrix C(A.cols(), B.cols(), 0.0);
  for (index_t k = 0; k < A.rows(); ++k)
    for (index_t i = 0; i < A.cols(); ++i) {
      const double a = A(k, i);
      if (a == 0.0) continue;
      for (index_t j = 0; j < B.cols(); ++j) C(i, j) += a * B(k, j);
    }
  return C;
}

}  // namespace etree

#endif  // ETREE_MATRIX_HPP_
