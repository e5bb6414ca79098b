#ifndef ETREE_FIT_HPP_
#define ETREE_FIT_HPP_

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "etree/common.hpp"
#include "etree/data.hpp"
#include "etree/matrix.hpp"
#include "etree/metrics.hpp"
#include "etree/nmf.hpp"
#include "etree/rng.hpp"
#include "etree/solver.hpp"

namespace etree {

namespace detail {

// Budget for the NMF warm start of the tree solver.
constexpr std::size_t kNmfInitEpochs = 50;

// Uniform random one-hot rows, redrawn until every parent has at least one
// child (<= 100 attempts, then round-robin fill).
inline DenseMatrix random_assignment(index_t children, index_t parents, Rng& rng) {
  for (int attempt = 0; attempt < 100; ++attempt) {
    DenseMatrix S(children, parents, 0.0);
    std::vector<bool> hit(parents, false);
    for (index_t i = 0; i < children; ++i) {
      const index_t p = static_cast<index_t>(rng.uniform_index(parents));
      S(i, p) = 1.0;
      hit[p] = true;
    }
    bool full = true;
    for (index_t p = 0; p < parents; ++p) full = full && hit[p];
    if (full) return S;
  }
  DenseMatrix S(children, parents, 0.0);
  for (index_t i = 0; i < children; ++i) S(i, i % parents) = 1.0;
  return S;
}

}  // namespace detail

// Initial solver state: (A, B1) from NMF, deeper layers random with
// normalized rows, random valid assignments, D = I, duals = 0.
inline FactorModel etree_init(const ObservedMatrix& X, const Hyperparams& hp,
                              const TreeSpec& tree) {
  hp.validate();
  tree.validate();
  require(hp.rank <= std::min(X.n_rows(), X.n_cols()),
          "etree_init: rank exceeds min(N, M1)");
  require(tree.layer_sizes[0] == X.n_cols(),
          "etree_init: first layer size must equal item count");

  const std::size_t Q = tree.layers();
  const NmfModel nmf =
      nmf_fit(X, hp.rank, hp.lambda, hp.seed, detail::kNmfInitEpochs);
  Rng rng(hp.seed + 0x9e3779b97f4a7c15ULL);

  FactorModel m;
  m.A = nmf.A;
  m.D = DiagonalMatrix(X.n_cols(), 1.0);
  m.B.resize(Q);
  m.S.resize(Q - 1);
  m.Z.resize(Q - 1);
  m.B[0] = nmf.B;
  for (std::size_t q = 1; q < Q; ++q) {
    DenseMatrix Bq(tree.layer_sizes[q], hp.rank);
    for (double& x : Bq.data()) x = std::abs(rng.normal());
    m.B[q] = normalize_rows(Bq);
  }
  for (std::size_t q = 0; q + 1 < Q; ++q) {
    m.S[q] = detail::random_assignment(tree.layer_sizes[q], tree.layer_sizes[q + 1], rng);
    m.Z[q] = normalize_rows(m.B[q]);
  }
  m.dual_A = DenseMatrix(X.n_rows(), hp.rank, 0.0);
  m.dual_B1 = DenseMatrix(X.n_cols(), hp.rank, 0.0);
  return m;
}

// One full alternating-optimization epoch: A block, B1 block, D and Z1 closed
// forms, then the tree loop. Duals persist across epochs (warm start).
inline void etree_epoch(const ObservedMatrix& X, const Hyperparams& hp,
                        FactorModel& m) {
  update_A_admm(X, m.B[0], m.D, hp.lambda, hp, m.A, m.dual_A);
  const DenseMatrix S1B2 = matmul(m.S[0], m.B[1]);
  update_B1_admm(X, m.A, m.D, hp.mu, hp.eta, S1B2, m.Z[0], hp, m.B[0], m.dual_B1);
  update_D(X, m.A, m.B[0], m.D);
  m.Z[0] = update_Z(m.B[0]);
  tree_loop(m, hp);
}

// Full solver run. With a validation set in `ctl`, stops after `patience`
// epochs without a new best validation RMSE and returns the best-epoch
// snapshot; otherwise stops on relative surrogate decrease below rel_tol.
inline FactorModel etree_fit(const ObservedMatrix& X, const Hyperparams& hp,
                             const TreeSpec& tree, const FitControl& ctl = {}) {
  FactorModel m = etree_init(X, hp, tree);

  FactorModel best = m;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0, since_best = 0;
  double prev_obj = std::numeric_limits<double>::infinity();

  for (std::size_t epoch = 0; epoch < hp.max_epochs; ++epoch) {
    etree_epoch(X, hp, m);

    const double obj = surrogate_objective(m, X, hp);
    if (!std::isfinite(obj))
      throw NumericError("etree_fit: diverged at epoch " + std::to_string(epoch));
    if (ctl.trace) ctl.trace->objective.push_back(obj);
    if (ctl.on_epoch) ctl.on_epoch(m, epoch);

    if (ctl.validation) {
      const auto [vr, vm] =
          score_predictions(*ctl.validation,
                            [&](index_t i, index_t j) { return predict(m, i, j); });
      (void)vm;
      if (ctl.trace) ctl.trace->val_rmse.push_back(vr);
      if (vr < best_val) {
        best_val = vr;
        best = m;
        best_epoch = epoch;
        since_best = 0;
      } else if (++since_best >= ctl.patience) {
        break;
      }
    } else if (prev_obj < std::numeric_limits<double>::infinity() &&
               std::abs(prev_obj - obj) <= ctl.rel_tol * std::max(prev_obj, 1e-300)) {
      break;
    }
    prev_obj = obj;
  }
  if (ctl.validation) {
    if (ctl.trace) ctl.trace->best_epoch = best_epoch;
    return best;
  }
  return m;
}

}  // namespace etree

#endif  // ETREE_FIT_HPP_
