// Independent oracles used to freeze expected values. Everything here is
// deliberately brute force and shares no code path with the library
// implementations it checks.
#ifndef ETREE_TESTS_ORACLES_HPP_
#define ETREE_TESTS_ORACLES_HPP_

#include <cmath>
#include <limits>
#include <vector>

#include "etree/matrix.hpp"

namespace oracles {

using etree::DenseMatrix;
using etree::index_t;

// Gauss-Jordan inverse for small matrices.
inline DenseMatrix invert(const DenseMatrix& M) {
  const index_t n = M.rows();
  DenseMatrix a = M;
  DenseMatrix inv(n, n, 0.0);
  for (index_t i = 0; i < n; ++i) inv(i, i) = 1.0;
  for (index_t col = 0; col < n; ++col) {
    index_t pivot = col;
    for (index_t r = col + 1; r < n; ++r)
      if (std::abs(a(r, col)) > std::abs(a(pivot, col))) pivot = r;
    for (index_t j = 0; j < n; ++j) {
      std::swap(a(col, j), a(pivot, j));
      std::swap(inv(col, j), inv(pivot, j));
    }
    const double p = a(col, col);
    for (index_t j = 0; j < n; ++j) {
      a(col, j) /= p;
      inv(col, j) /= p;
    }
    for (index_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a(r, col);
      for (index_t j = 0; j < n; ++j) {
        a(r, j) -= f * a(col, j);
        inv(r, j) -= f * inv(col, j);
      }
    }
  }
  return inv;
}

inline std::vector<double> matvec(const DenseMatrix& M, const std::vector<double>& x) {
  std::vector<double> y(M.rows(), 0.0);
  for (index_t i = 0; i < M.rows(); ++i)
    for (index_t j = 0; j < M.cols(); ++j) y[i] += M(i, j) * x[j];
  return y;
}

// Exact solution of min_{x >= 0} 1/2 x^T G x - f^T x for SPD G by active-set
// enumeration over all 2^R free/clamped patterns, with KKT verification.
inline std::vector<double> nnls_enumerate(const DenseMatrix& G,
                                          const std::vector<double>& f) {
  const index_t R = G.rows();
  std::vector<double> best(R, 0.0);
  double best_obj = std::numeric_limits<double>::infinity();
  for (unsigned mask = 0; mask < (1u << R); ++mask) {
    std::vector<index_t> free_idx;
    for (index_t r = 0; r < R; ++r)
      if (mask & (1u << r)) free_idx.push_back(r);
    std::vector<double> x(R, 0.0);
    if (!free_idx.empty()) {
      const index_t m = free_idx.size();
      DenseMatrix Gf(m, m);
      for (index_t a = 0; a < m; ++a)
        for (index_t b = 0; b < m; ++b) Gf(a, b) = G(free_idx[a], free_idx[b]);
      std::vector<double> ff(m);
      for (index_t a = 0; a < m; ++a) ff[a] = f[free_idx[a]];
      const DenseMatrix Gfi = invert(Gf);
      const std::vector<double> xf = matvec(Gfi, ff);
      bool ok = true;
      for (double v : xf) ok = ok && v >= -1e-12;
      if (!ok) continue;
      for (index_t a = 0; a < m; ++a) x[free_idx[a]] = std::max(xf[a], 0.0);
    }
    // KKT on clamped coordinates: gradient G x - f must be >= 0.
    const std::vector<double> g = matvec(G, x);
    bool kkt = true;
    for (index_t r = 0; r < R && kkt; ++r)
      if (x[r] == 0.0 && !(mask & (1u << r))) kkt = g[r] - f[r] >= -1e-9;
    if (!kkt) continue;
    double obj = 0.0;
    for (index_t r = 0; r < R; ++r) obj += 0.5 * x[r] * g[r] - f[r] * x[r];
    if (obj < best_obj) {
      best_obj = obj;
      best = x;
    }
  }
  return best;
}

// Global k-means optimum by enumerating all k^n assignments (tiny n only).
inline double kmeans_brute_inertia(const DenseMatrix& points, index_t k) {
  const index_t n = points.rows();
  const index_t R = points.cols();
  double best = std::numeric_limits<double>::infinity();
  std::vector<index_t> assign(n, 0);
  const auto total = static_cast<unsigned long long>(std::pow(k, n) + 0.5);
  for (unsigned long long code = 0; code < total; ++code) {
    unsigned long long c = code;
    for (index_t i = 0; i < n; ++i) {
      assign[i] = c % k;
      c /= k;
    }
    DenseMatrix sums(k, R, 0.0);
    std::vector<index_t> counts(k, 0);
    for (index_t i = 0; i < n; ++i) {
      ++counts[assign[i]];
      for (index_t r = 0; r < R; ++r) sums(assign[i], r) += points(i, r);
    }
    double inertia = 0.0;
    for (index_t i = 0; i < n; ++i) {
      const index_t m = assign[i];
      if (counts[m] == 0) continue;
      for (index_t r = 0; r < R; ++r) {
        const double d = points(i, r) - sums(m, r) / counts[m];
        inertia += d * d;
      }
    }
    best = std::min(best, inertia);
  }
  return best;
}

}  // namespace oracles

#endif  // ETREE_TESTS_ORACLES_HPP_
