#ifndef ETREE_SOLVER_HPP_
#define ETREE_SOLVER_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "etree/admm.hpp"
#include "etree/common.hpp"
#include "etree/data.hpp"
#include "etree/matrix.hpp"
#include "etree/parallel.hpp"
#include "etree/rng.hpp"

namespace etree {

struct Hyperparams {
  index_t rank = 10;          // R
  double lambda = 0.0;        // Frobenius regularizer on A
  double mu = 0.0;            // tree regularizer
  double eta = 1000.0;        // slack coupling
  std::size_t admm_iters = 5;     // K
  std::size_t tree_iters = 5;     // T
  double epsilon = 1e-4;          // ADMM residual threshold
  std::size_t max_epochs = 1000;
  std::uint64_t seed = 0;

  void validate() const {
    require(rank >= 1, "Hyperparams: rank must be >= 1");
    require(lambda >= 0.0 && mu >= 0.0 && eta >= 0.0,
            "Hyperparams: weights must be nonnegative");
    require(admm_iters >= 1 && tree_iters >= 1,
            "Hyperparams: iteration caps must be >= 1");
  }
};

struct TreeSpec {
  std::vector<index_t> layer_sizes;  // M_1 > M_2 > ... > M_Q >= 1

  std::size_t layers() const { return layer_sizes.size(); }

  void validate() const {
    require(layer_sizes.size() >= 2, "TreeSpec: need Q >= 2 layers");
    for (std::size_t q = 1; q < layer_sizes.size(); ++q)
      require(layer_sizes[q] < layer_sizes[q - 1],
              "TreeSpec: layer sizes must be strictly decreasing");
    require(layer_sizes.back() >= 1, "TreeSpec: M_Q must be >= 1");
  }
};

// Full solver state: individual factor A, item rescaling D, per-layer
// embeddings B_q, one-hot assignments S_q, unit-norm slacks Z_q, and the two
// ADMM dual blocks.
struct FactorModel {
  DenseMatrix A;                // N x R, nonnegative
  DiagonalMatrix D;             // M1
  std::vector<DenseMatrix> B;   // B[q] is M_{q+1} x R, q = 0..Q-1
  std::vector<DenseMatrix> S;   // S[q] is M_{q+1} x M_{q+2}, q = 0..Q-2
  std::vector<DenseMatrix> Z;   // Z[q] is M_{q+1} x R, q = 0..Q-2
  DenseMatrix dual_A;           // N x R
  DenseMatrix dual_B1;          // M1 x R

  std::size_t layers() const { return B.size(); }

  void check_invariants() const {
    A.check_finite("A");
    for (double x : A.data())
      if (x < 0.0) throw NumericError("FactorModel: negative entry in A");
    for (double d : D.diag())
      if (!std::isfinite(d)) throw NumericError("FactorModel: non-finite D");
    for (std::size_t q = 0; q < B.size(); ++q)
      B[q].check_finite("B" + std::to_string(q + 1));
    for (double x : B[0].data())
      if (x < 0.0) throw NumericError("FactorModel: negative entry in B1");
    for (std::size_t q = 0; q < S.size(); ++q) {
      for (index_t i = 0; i < S[q].rows(); ++i) {
        index_t ones = 0;
        for (index_t j = 0; j < S[q].cols(); ++j) {
          const double v = S[q](i, j);
          if (v != 0.0 && v != 1.0)
            throw NumericError("FactorModel: S entries must be binary");
          if (v == 1.0) ++ones;
        }
        if (ones != 1)
          throw NumericError("FactorModel: S" + std::to_string(q + 1) +
                             " row " + std::to_string(i) + " not one-hot");
      }
    }
    for (std::size_t q = 0; q < Z.size(); ++q) {
      for (index_t i = 0; i < Z[q].rows(); ++i) {
        double nrm = 0.0;
        for (index_t j = 0; j < Z[q].cols(); ++j) nrm += Z[q](i, j) * Z[q](i, j);
        if (std::abs(std::sqrt(nrm) - 1.0) > 1e-9)
          throw NumericError("FactorModel: Z" + std::to_string(q + 1) +
                             " row " + std::to_string(i) + " not unit norm");
      }
    }
  }
};

// A(i,:) . B1(j,:) * d_j
inline double predict(const FactorModel& m, index_t i, index_t j) {
  require(i < m.A.rows(), "predict: row index out of range");
  require(j < m.B[0].rows(), "predict: column index out of range");
  double dot = 0.0;
  const double* a = m.A.row_ptr(i);
  const double* b = m.B[0].row_ptr(j);
  for (index_t r = 0; r < m.A.cols(); ++r) dot += a[r] * b[r];
  return dot * m.D[j];
}

// Eq-style surrogate: masked fit + tree coupling + slack coupling + A norm.
inline double surrogate_objective(const FactorModel& m, const ObservedMatrix& X,
                                  const Hyperparams& hp) {
  double obj = masked_objective(X, m.A, m.B[0], m.D);
  for (std::size_t q = 0; q + 1 < m.B.size(); ++q) {
    const DenseMatrix SB = matmul(m.S[q], m.B[q + 1]);
    double tree = 0.0, slack = 0.0;
    for (index_t i = 0; i < m.B[q].rows(); ++i)
      for (index_t r = 0; r < m.B[q].cols(); ++r) {
        const double t = m.B[q](i, r) - SB(i, r);
        tree += t * t;
        const double s = m.B[q](i, r) - m.Z[q](i, r);
        slack += s * s;
      }
    obj += 0.5 * hp.mu * tree + 0.5 * hp.eta * slack;
  }
  obj += 0.5 * hp.lambda * m.A.frobenius_sq();
  return obj;
}

namespace detail {

inline double scaled_rho(double design_frob_sq, index_t n, index_t R) {
  return std::max(design_frob_sq / (static_cast<double>(n) * static_cast<double>(R)),
                  1e-8);
}

}  // namespace detail

// ADMM block update for A. The effective item design is B~ = D * B1 (row j
// scaled by d_j). Per row i of A: Gram over the observed items of row i plus
// (lambda + rho) I, factored once; then K capped iterations with warm-started
// primal and dual.
inline AdmmStatus update_A_admm(const ObservedMatrix& X, const DenseMatrix& B1,
                                const DiagonalMatrix& D, double lambda,
                                const Hyperparams& hp, DenseMatrix& A,
                                DenseMatrix& dual_A) {
  const index_t N = X.n_rows();
  const index_t R = B1.cols();
  require(A.rows() == N && A.cols() == R, "update_A_admm: A shape mismatch");
  require(dual_A.rows() == N && dual_A.cols() == R,
          "update_A_admm: dual shape mismatch");

  DenseMatrix Btilde = B1;
  for (index_t j = 0; j < B1.rows(); ++j)
    for (index_t r = 0; r < R; ++r) Btilde(j, r) *= D[j];

  AdmmWorkspace ws;
  ws.rho = detail::scaled_rho(Btilde.frobenius_sq(), N, R);
  const double c = lambda + ws.rho;
  ws.chol.resize(N);
  ws.rhs = DenseMatrix(N, R, 0.0);
  parallel_for(N, [&](std::size_t i) {
    DenseMatrix G(R, R, 0.0);
    double* f = ws.rhs.row_ptr(i);
    for (const auto& [j, x] : X.row(i)) {
      const double* b = Btilde.row_ptr(j);
      for (index_t r = 0; r < R; ++r) {
        for (index_t s = 0; s <= r; ++s) G(r, s) += b[r] * b[s];
        f[r] += b[r] * x;
      }
    }
    for (index_t r = 0; r < R; ++r) {
      G(r, r) += c;
      for (index_t s = r + 1; s < R; ++s) G(r, s) = G(s, r);
    }
    ws.chol[i] = cholesky_factor(G);
  });
  return admm_nnls_rows(ws, A, dual_A, hp.admm_iters, hp.epsilon);
}

// ADMM block update for B1. Per row j the quadratic couples the masked fit
// (design d_j * A over the observed individuals of column j), the tree term
// mu * ||B1(j,:) - (S1 B2)(j,:)||^2 and the slack term eta * ||B1(j,:) -
// Z1(j,:)||^2, so the Gram shift is mu + eta + rho and the linear term gains
// mu (S1 B2)(j,:) + eta Z1(j,:).
inline AdmmStatus update_B1_admm(const ObservedMatrix& X, const DenseMatrix& A,
                                 const DiagonalMatrix& D, double mu, double eta,
                                 const DenseMatrix& S1B2, const DenseMatrix& Z1,
                                 const Hyperparams& hp, DenseMatrix& B1,
                                 DenseMatrix& dual_B1) {
  const index_t M1 = X.n_cols();
  const index_t R = A.cols();
  require(B1.rows() == M1 && B1.cols() == R, "update_B1_admm: B1 shape mismatch");
  require(S1B2.rows() == M1 && Z1.rows() == M1, "update_B1_admm: tree term shape");

  AdmmWorkspace ws;
  ws.rho = detail::scaled_rho(A.frobenius_sq(), M1, R);
  const double c = mu + eta + ws.rho;
  ws.chol.resize(M1);
  ws.rhs = DenseMatrix(M1, R, 0.0);
  parallel_for(M1, [&](std::size_t j) {
    DenseMatrix G(R, R, 0.0);
    double* f = ws.rhs.row_ptr(j);
    const double dj = D[j];
    for (const auto& [i, x] : X.col(j)) {
      const double* a = A.row_ptr(i);
      for (index_t r = 0; r < R; ++r) {
        for (index_t s = 0; s <= r; ++s) G(r, s) += dj * a[r] * dj * a[s];
        f[r] += dj * a[r] * x;
      }
    }
    for (index_t r = 0; r < R; ++r) {
      f[r] += mu * S1B2(j, r) + eta * Z1(j, r);
      G(r, r) += c;
      for (index_t s = r + 1; s < R; ++s) G(r, s) = G(s, r);
    }
    ws.chol[j] = cholesky_factor(G);
  });
  return admm_nnls_rows(ws, B1, dual_B1, hp.admm_iters, hp.epsilon);
}

// Closed-form per-column rescaling: d_j = h_j^T X(I_j, j) / h_j^T h_j with
// h_j = A(I_j,:) B1(j,:)^T. Columns with no observations or a vanishing h_j
// keep their previous d_j.
inline void update_D(const ObservedMatrix& X, const DenseMatrix& A,
                     const DenseMatrix& B1, DiagonalMatrix& D) {
  const index_t R = A.cols();
  parallel_for(X.n_cols(), [&](std::size_t j) {
    double hh = 0.0, hx = 0.0;
    const double* b = B1.row_ptr(j);
    for (const auto& [i, x] : X.col(j)) {
      double h = 0.0;
      const double* a = A.row_ptr(i);
      for (index_t r = 0; r < R; ++r) h += a[r] * b[r];
      hh += h * h;
      hx += h * x;
    }
    if (hh >= 1e-12) D[j] = hx / hh;
  });
}

// Z update is plain row normalization.
inline DenseMatrix update_Z(const DenseMatrix& Bq) { return normalize_rows(Bq); }

// Nearest-parent-row assignment: one-hot rows, ties to the lowest parent
// index.
inline DenseMatrix update_S(const DenseMatrix& B_child, const DenseMatrix& B_parent) {
  require(B_parent.rows() >= 1, "update_S: need at least one parent row");
  require(B_child.cols() == B_parent.cols(), "update_S: rank mismatch");
  DenseMatrix S(B_child.rows(), B_parent.rows(), 0.0);
  parallel_for(B_child.rows(), [&](std::size_t i) {
    index_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (index_t m = 0; m < B_parent.rows(); ++m) {
      double d = 0.0;
      for (index_t r = 0; r < B_child.cols(); ++r) {
        const double t = B_child(i, r) - B_parent(m, r);
        d += t * t;
      }
      if (d < best_d) {
        best_d = d;
        best = m;
      }
    }
    S(i, best) = 1.0;
  });
  return S;
}

// Cluster-mean update of the root embeddings. An empty cluster is repaired by
// moving its centroid onto the child row farthest from its assigned parent,
// keeping S full column rank.
inline void update_root_centroids(const DenseMatrix& B_child, const DenseMatrix& S_last,
                                  DenseMatrix& B_root) {
  const index_t MQ = B_root.rows();
  const index_t R = B_root.cols();
  std::vector<index_t> counts(MQ, 0);
  DenseMatrix sums(MQ, R, 0.0);
  std::vector<index_t> parent_of(B_child.rows(), 0);
  for (index_t i = 0; i < B_child.rows(); ++i) {
    for (index_t m = 0; m < MQ; ++m)
      if (S_last(i, m) == 1.0) parent_of[i] = m;
    const index_t m = parent_of[i];
    ++counts[m];
    for (index_t r = 0; r < R; ++r) sums(m, r) += B_child(i, r);
  }
  for (index_t m = 0; m < MQ; ++m) {
    if (counts[m] == 0) continue;
    for (index_t r = 0; r < R; ++r)
      B_root(m, r) = sums(m, r) / static_cast<double>(counts[m]);
  }
  for (index_t m = 0; m < MQ; ++m) {
    if (counts[m] != 0) continue;
    index_t far = 0;
    double far_d = -1.0;
    for (index_t i = 0; i < B_child.rows(); ++i) {
      const index_t p = parent_of[i];
      double d = 0.0;
      for (index_t r = 0; r < R; ++r) {
        const double t = B_child(i, r) - B_root(p, r);
        d += t * t;
      }
      if (d > far_d) {
        far_d = d;
        far = i;
      }
    }
    for (index_t r = 0; r < R; ++r) B_root(m, r) = B_child(far, r);
  }
}

// Exact solve for an intermediate layer embedding B[q] (0 < q < Q-1): one
// Cholesky of the shared mixing matrix, then a forward/backward substitution
// per column. Skipped entirely when mu + eta vanishes (the block then has no
// objective terms).
inline void solve_intermediate_Bq(FactorModel& m, std::size_t q,
                                  const Hyperparams& hp) {
  require(q >= 1 && q + 1 < m.layers(), "solve_intermediate_Bq: q out of range");
  const double v = hp.mu + hp.eta;
  if (v < 1e-12) return;
  const index_t Mq = m.B[q].rows();
  const index_t R = m.B[q].cols();
  DenseMatrix H(Mq, Mq, 0.0);
  for (index_t i = 0; i < m.S[q - 1].rows(); ++i)
    for (index_t a = 0; a < Mq; ++a) {
      if (m.S[q - 1](i, a) == 0.0) continue;
      for (index_t b = 0; b < Mq; ++b)
        H(a, b) += hp.mu * m.S[q - 1](i, a) * m.S[q - 1](i, b);
    }
  for (index_t a = 0; a < Mq; ++a) H(a, a) += v;
  const LowerTriangular L = cholesky_factor(H);
  const DenseMatrix StB = matmul_transposed_left(m.S[q - 1], m.B[q - 1]);
  const DenseMatrix SBnext = matmul(m.S[q], m.B[q + 1]);
  DenseMatrix Bq_new(Mq, R, 0.0);
  parallel_for(R, [&](std::size_t j) {
    std::vector<double> col(Mq);
    for (index_t a = 0; a < Mq; ++a)
      col[a] = hp.mu * StB(a, j) + hp.mu * SBnext(a, j) + hp.eta * m.Z[q](a, j);
    cholesky_solve_inplace(L, col.data());
    for (index_t a = 0; a < Mq; ++a) Bq_new(a, j) = col[a];
  });
  m.B[q] = Bq_new;
}

// Tree loop: T passes over the triplets {S_{q-1}, B_q, Z_q} for the
// intermediate layers, then the root centroids and the last assignment block.
// All steps here are exact minimizers of the surrogate in their block.
inline void tree_loop(FactorModel& m, const Hyperparams& hp) {
  const std::size_t Q = m.layers();
  require(Q >= 2, "tree_loop: need Q >= 2");
  for (std::size_t t = 0; t < hp.tree_iters; ++t) {
    for (std::size_t q = 1; q + 1 < Q; ++q) {
      solve_intermediate_Bq(m, q, hp);
      m.S[q - 1] = update_S(m.B[q - 1], m.B[q]);
      m.Z[q] = update_Z(m.B[q]);
    }
    update_root_centroids(m.B[Q - 2], m.S[Q - 2], m.B[Q - 1]);
    m.S[Q - 2] = update_S(m.B[Q - 2], m.B[Q - 1]);
  }
}

}  // namespace etree

#endif  // ETREE_SOLVER_HPP_
