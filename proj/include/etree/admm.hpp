#ifndef ETREE_ADMM_HPP_
#define ETREE_ADMM_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "etree/matrix.hpp"
#include "etree/parallel.hpp"

namespace etree {

// Residuals of one ADMM block solve: per-row primal p_i and dual d_i (both
// relative), plus iterations spent.
struct AdmmStatus {
  std::vector<double> primal;
  std::vector<double> dual;
  std::size_t iterations = 0;

  double max_residual() const {
    double m = 0.0;
    for (double p : primal) m = std::max(m, p);
    for (double d : dual) m = std::max(m, d);
    return m;
  }
};

// Cached per-row subproblem data for a row-separable nonnegative LS block:
// minimize over x >= 0 of 1/2 x^T (G_r - rho I) x - f_r^T x (in split form).
// The Cholesky factor of G_r and the linear term f_r stay fixed for the whole
// block, so they are factored once and reused every ADMM iteration.
struct AdmmWorkspace {
  std::vector<LowerTriangular> chol;  // per-row factor of G_r (R x R)
  DenseMatrix rhs;                    // per-row linear term f_r
  double rho = 0.0;
};

namespace detail {
inline double relative_residual(double num, double den) {
  if (num == 0.0) return 0.0;
  return num / std::max(den, 1e-12);
}
}  // namespace detail

// Runs the ADMM iterations for all rows of `primal` (n x R) with dual block
// `dual` (same shape), warm-started from their incoming values. Projection is
// onto the nonnegative orthant. Stops when every row satisfies
// max(p_i, d_i) < eps, or after max_iters.
inline AdmmStatus admm_nnls_rows(const AdmmWorkspace& ws, DenseMatrix& primal,
                                 DenseMatrix& dual, std::size_t max_iters,
                                 double eps) {
  const index_t n = primal.rows();
  const index_t R = primal.cols();
  AdmmStatus status;
  status.primal.assign(n, 0.0);
  status.dual.assign(n, 0.0);

  std::vector<double> aux(n * R);
  for (std::size_t k = 0; k < max_iters; ++k) {
    parallel_for(n, [&](std::size_t i) {
      double* a = primal.row_ptr(i);
      double* u = dual.row_ptr(i);
      double* t = aux.data() + i * R;
      const double* f = ws.rhs.row_ptr(i);
      for (index_t r = 0; r < R; ++r) t[r] = f[r] + ws.rho * (a[r] + u[r]);
      cholesky_solve_inplace(ws.chol[i], t);
      double p_num = 0.0, a_norm = 0.0, d_num = 0.0, u_norm = 0.0;
      for (index_t r = 0; r < R; ++r) {
        const double a_old = a[r];
        const double a_new = std::max(t[r] - u[r], 0.0);
        a[r] = a_new;
        u[r] += a_new - t[r];
        const double pr = a_new - t[r];
        p_num += pr * pr;
        a_norm += a_new * a_new;
        const double dr = a_new - a_old;
        d_num += dr * dr;
        u_norm += u[r] * u[r];
      }
      status.primal[i] = detail::relative_residual(std::sqrt(p_num), std::sqrt(a_norm));
      status.dual[i] = detail::relative_residual(std::sqrt(d_num), std::sqrt(u_norm));
    });
    ++status.iterations;
    if (status.max_residual() < eps) break;
  }
  return status;
}

}  // namespace etree

#endif  // ETREE_ADMM_HPP_
