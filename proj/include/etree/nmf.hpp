#ifndef ETREE_NMF_HPP_
#define ETREE_NMF_HPP_

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "etree/admm.hpp"
#include "etree/common.hpp"
#include "etree/data.hpp"
#include "etree/matrix.hpp"
#include "etree/metrics.hpp"
#include "etree/rng.hpp"
#include "etree/solver.hpp"

namespace etree {

struct NmfModel {
  DenseMatrix A;  // N x R, nonnegative
  DenseMatrix B;  // M1 x R, nonnegative
  double lambda = 0.0;
  index_t rank = 0;
};

// Shared per-epoch bookkeeping for the iterative fits.
struct FitTrace {
  std::vector<double> objective;
  std::vector<double> val_rmse;
  std::size_t best_epoch = 0;
};

struct FitControl {
  const ObservedMatrix* validation = nullptr;  // enables early stopping
  std::size_t patience = 10;
  double rel_tol = 1e-6;      // relative objective decrease, validation-free runs
  FitTrace* trace = nullptr;  // optional output
  std::function<void(const FactorModel&, std::size_t)> on_epoch;  // etree only
};

namespace detail {

// Entrywise |N(0,1)| scaled by sqrt(mean observed value / R).
inline DenseMatrix scaled_abs_gaussian(index_t rows, index_t cols, double mean_value,
                                       Rng& rng) {
  DenseMatrix M(rows, cols);
  const double scale = std::sqrt(mean_value / static_cast<double>(cols));
  for (double& x : M.data()) x = std::abs(rng.normal()) * scale;
  return M;
}

inline ObservedMatrix transpose(const ObservedMatrix& X) {
  std::vector<Entry> entries;
  entries.reserve(X.entries().size());
  for (const Entry& e : X.entries()) entries.push_back({e.col, e.row, e.value});
  return ObservedMatrix(X.n_cols(), X.n_rows(), std::move(entries));
}

}  // namespace detail

// Masked NMF with lambda * (||A||_F^2 + ||B||_F^2) regularization, solved by
// alternating row-wise ADMM blocks (the same machinery as the tree solver's
// A-block). Deterministic given the seed.
inline NmfModel nmf_fit(const ObservedMatrix& X, index_t rank, double lambda,
                        std::uint64_t seed, std::size_t max_epochs,
                        const FitControl& ctl = {}) {
  require(rank >= 1, "nmf_fit: rank must be >= 1");
  require(rank <= std::min(X.n_rows(), X.n_cols()),
          "nmf_fit: rank exceeds min(N, M1)");
  require(lambda >= 0.0, "nmf_fit: lambda must be >= 0");

  const index_t N = X.n_rows();
  const index_t M = X.n_cols();
  Rng rng(seed);
  const double mean_value = X.mean_value();
  NmfModel model;
  model.rank = rank;
  model.lambda = lambda;
  model.A = detail::scaled_abs_gaussian(N, rank, mean_value, rng);
  model.B = detail::scaled_abs_gaussian(M, rank, mean_value, rng);
  DenseMatrix dual_A(N, rank, 0.0), dual_B(M, rank, 0.0);

  const ObservedMatrix Xt = detail::transpose(X);
  const DiagonalMatrix In(N, 1.0), Im(M, 1.0);
  Hyperparams hp;
  hp.rank = rank;
  hp.lambda = lambda;

  NmfModel best = model;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0, since_best = 0;
  double prev_obj = std::numeric_limits<double>::infinity();

  for (std::size_t epoch = 0; epoch < max_epochs; ++epoch) {
    update_A_admm(X, model.B, Im, lambda, hp, model.A, dual_A);
    update_A_admm(Xt, model.A, In, lambda, hp, model.B, dual_B);

    const double obj = masked_objective(X, model.A, model.B, Im) +
                       0.5 * lambda * (model.A.frobenius_sq() + model.B.frobenius_sq());
    if (!std::isfinite(obj))
      throw NumericError("nmf_fit: diverged at epoch " + std::to_string(epoch));
    if (ctl.trace) ctl.trace->objective.push_back(obj);

    if (ctl.validation) {
      const auto [vr, vm] = score_predictions(
          *ctl.validation, [&](index_t i, index_t j) {
            double dot = 0.0;
            for (index_t r = 0; r < rank; ++r) dot += model.A(i, r) * model.B(j, r);
            return dot;
          });
      (void)vm;
      if (ctl.trace) ctl.trace->val_rmse.push_back(vr);
      if (vr < best_val) {
        best_val = vr;
        best = model;
        best_epoch = epoch;
        since_best = 0;
      } else if (++since_best >= ctl.patience) {
        break;
      }
    } else if (prev_obj < std::numeric_limits<double>::infinity() &&
               std::abs(prev_obj - obj) <= ctl.rel_tol * std::max(prev_obj, 1e-300)) {
      prev_obj = obj;
      break;
    }
    prev_obj = obj;
  }
  if (ctl.validation) {
    if (ctl.trace) ctl.trace->best_epoch = best_epoch;
    return best;
  }
  return model;
}

struct KmeansResult {
  DenseMatrix centroids;             // k x R
  std::vector<index_t> assignment;   // one cluster id per point
  double inertia = 0.0;
};

namespace detail {

inline double sq_dist(const DenseMatrix& P, index_t i, const DenseMatrix& C, index_t m) {
  double d = 0.0;
  for (index_t r = 0; r < P.cols(); ++r) {
    const double t = P(i, r) - C(m, r);
    d += t * t;
  }
  return d;
}

// One Lloyd run from a greedy farthest-point initialization whose first
// centroid is the given point. Ties go to the lowest centroid index; an empty
// cluster is reseeded to the point farthest from its current centroid.
inline KmeansResult lloyd_run(const DenseMatrix& points, index_t k, index_t first,
                              std::size_t max_iters) {
  const index_t n = points.rows();
  const index_t R = points.cols();
  KmeansResult res;
  res.centroids = DenseMatrix(k, R);
  std::vector<index_t> chosen{first};
  for (index_t r = 0; r < R; ++r) res.centroids(0, r) = points(first, r);
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  for (index_t m = 1; m < k; ++m) {
    index_t far = 0;
    double far_d = -1.0;
    for (index_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], sq_dist(points, i, res.centroids, m - 1));
      if (nearest[i] > far_d) {
        far_d = nearest[i];
        far = i;
      }
    }
    for (index_t r = 0; r < R; ++r) res.centroids(m, r) = points(far, r);
  }

  res.assignment.assign(n, 0);
  for (std::size_t it = 0; it < max_iters; ++it) {
    bool changed = false;
    for (index_t i = 0; i < n; ++i) {
      index_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (index_t m = 0; m < k; ++m) {
        const double d = sq_dist(points, i, res.centroids, m);
        if (d < best_d) {
          best_d = d;
          best = m;
        }
      }
      if (best != res.assignment[i]) {
        res.assignment[i] = best;
        changed = true;
      }
    }
    if (it > 0 && !changed) break;
    std::vector<index_t> counts(k, 0);
    DenseMatrix sums(k, R, 0.0);
    for (index_t i = 0; i < n; ++i) {
      ++counts[res.assignment[i]];
      for (index_t r = 0; r < R; ++r) sums(res.assignment[i], r) += points(i, r);
    }
    for (index_t m = 0; m < k; ++m)
      if (counts[m] > 0)
        for (index_t r = 0; r < R; ++r)
          res.centroids(m, r) = sums(m, r) / static_cast<double>(counts[m]);
    for (index_t m = 0; m < k; ++m) {
      if (counts[m] > 0) continue;
      index_t far = 0;
      double far_d = -1.0;
      for (index_t i = 0; i < n; ++i) {
        const double d = sq_dist(points, i, res.centroids, res.assignment[i]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      for (index_t r = 0; r < R; ++r) res.centroids(m, r) = points(far, r);
      res.assignment[far] = m;
      changed = true;
    }
  }
  res.inertia = 0.0;
  for (index_t i = 0; i < n; ++i)
    res.inertia += sq_dist(points, i, res.centroids, res.assignment[i]);
  return res;
}

}  // namespace detail

// Lloyd k-means with seeded greedy farthest-point starts; 5 restarts keeping
// the lowest inertia.
inline KmeansResult kmeans(const DenseMatrix& points, index_t k, std::uint64_t seed,
                           std::size_t max_iters = 100) {
  require(k >= 1 && k <= points.rows(), "kmeans: need 1 <= k <= #points");
  Rng rng(seed);
  KmeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  constexpr std::size_t kRestarts = 5;
  // Restarts differ only in the first seeded point, so draw distinct ones.
  std::vector<bool> used(points.rows(), false);
  std::size_t restarts = 0, distinct = 0;
  while (restarts < kRestarts && distinct < points.rows()) {
    const index_t first = static_cast<index_t>(rng.uniform_index(points.rows()));
    if (used[first]) continue;
    used[first] = true;
    ++distinct;
    ++restarts;
    KmeansResult run = detail::lloyd_run(points, k, first, max_iters);
    if (run.inertia < best.inertia) best = std::move(run);
  }
  return best;
}

// Two-stage baseline: masked NMF, then recursive k-means over the item
// embeddings to build the layer embeddings and assignments. Packaged as a
// FactorModel with Z_q the normalized B_q and D = I.
inline FactorModel nmf_km(const ObservedMatrix& X, index_t rank, double lambda,
                          const TreeSpec& tree, std::uint64_t seed,
                          std::size_t max_epochs = 200, const FitControl& ctl = {}) {
  require(!tree.layer_sizes.empty(), "nmf_km: need at least one layer");
  for (std::size_t q = 1; q < tree.layer_sizes.size(); ++q)
    require(tree.layer_sizes[q] < tree.layer_sizes[q - 1],
            "nmf_km: layer sizes must be strictly decreasing");
  require(tree.layer_sizes[0] == X.n_cols(),
          "nmf_km: first layer size must equal item count");
  const NmfModel nmf = nmf_fit(X, rank, lambda, seed, max_epochs, ctl);
  const std::size_t Q = tree.layers();
  FactorModel m;
  m.A = nmf.A;
  m.D = DiagonalMatrix(X.n_cols(), 1.0);
  m.B.resize(Q);
  m.S.resize(Q - 1);
  m.Z.resize(Q - 1);
  m.B[0] = nmf.B;
  for (std::size_t q = 0; q + 1 < Q; ++q) {
    const KmeansResult km = kmeans(m.B[q], tree.layer_sizes[q + 1], seed + q + 1);
    m.B[q + 1] = km.centroids;
    m.S[q] = DenseMatrix(m.B[q].rows(), tree.layer_sizes[q + 1], 0.0);
    for (index_t i = 0; i < m.B[q].rows(); ++i) m.S[q](i, km.assignment[i]) = 1.0;
    m.Z[q] = normalize_rows(m.B[q]);
  }
  m.dual_A = DenseMatrix(X.n_rows(), rank, 0.0);
  m.dual_B1 = DenseMatrix(X.n_cols(), rank, 0.0);
  return m;
}

}  // namespace etree

#endif  // ETREE_NMF_HPP_
