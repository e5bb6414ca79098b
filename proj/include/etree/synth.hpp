#ifndef ETREE_SYNTH_HPP_
#define ETREE_SYNTH_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "etree/common.hpp"
#include "etree/data.hpp"
#include "etree/fit.hpp"
#include "etree/matrix.hpp"
#include "etree/rng.hpp"
#include "etree/solver.hpp"
#include "etree/tree.hpp"

namespace etree {

struct SynthSpec {
  index_t n_rows = 200;                       // N
  std::vector<index_t> layer_sizes = {60, 12, 4};  // M_1..M_Q
  index_t rank = 4;                           // R
  double noise_std = 0.0;
  double observation_rate = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    TreeSpec{layer_sizes}.validate();
    require(layer_sizes.back() >= rank, "SynthSpec: M_Q must be >= R");
    require(noise_std >= 0.0, "SynthSpec: noise_std must be >= 0");
    require(observation_rate > 0.0 && observation_rate <= 1.0,
            "SynthSpec: observation rate in (0, 1]");
  }
};

struct GroundTruth {
  DenseMatrix A;               // N x R
  std::vector<DenseMatrix> B;  // per layer
  std::vector<DenseMatrix> S;  // per layer boundary, one-hot rows
  ObservedMatrix X;            // possibly noisy / masked
};

namespace detail {

inline bool has_full_column_rank(const DenseMatrix& A) {
  DenseMatrix G = matmul_transposed_left(A, A);
  double max_diag = 0.0;
  for (index_t r = 0; r < G.rows(); ++r) max_diag = std::max(max_diag, G(r, r));
  try {
    const LowerTriangular L = cholesky_factor(G);
    for (index_t r = 0; r < L.order(); ++r)
      if (L(r, r) * L(r, r) < 1e-10 * max_diag) return false;
    return true;
  } catch (const NumericError&) {
    return false;
  }
}

// One-hot assignment with guaranteed full column rank: the first `parents`
// children cover all parents, the rest are uniform random.
inline DenseMatrix random_full_rank_assignment(index_t children, index_t parents,
                                               Rng& rng) {
  DenseMatrix S(children, parents, 0.0);
  std::vector<index_t> order(children);
  for (index_t i = 0; i < children; ++i) order[i] = i;
  for (index_t i = children; i-- > 1;) {
    const index_t j = static_cast<index_t>(rng.uniform_index(i + 1));
    std::swap(order[i], order[j]);
  }
  for (index_t t = 0; t < children; ++t) {
    const index_t p = t < parents ? t : static_cast<index_t>(rng.uniform_index(parents));
    S(order[t], p) = 1.0;
  }
  return S;
}

}  // namespace detail

// Theorem-consistent instance: the root embedding stacks an identity block
// (separable anchors, hence sufficiently scattered) over simplex-sampled
// rows; assignments are one-hot with every parent covered; A is entrywise
// |Gaussian| resampled to full column rank. X = A B1^T plus optional noise
// and masking.
inline GroundTruth gen_synthetic(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const std::size_t Q = spec.layer_sizes.size();
  const index_t R = spec.rank;
  const index_t MQ = spec.layer_sizes.back();

  GroundTruth gt;
  gt.B.resize(Q);
  gt.S.resize(Q - 1);

  DenseMatrix BQ(MQ, R, 0.0);
  for (index_t r = 0; r < R; ++r) BQ(r, r) = 1.0;
  for (index_t m = R; m < MQ; ++m) {
    double total = 0.0;
    std::vector<double> raw(R);
    for (index_t r = 0; r < R; ++r) {
      raw[r] = rng.exponential();
      total += raw[r];
    }
    for (index_t r = 0; r < R; ++r) BQ(m, r) = raw[r] / total;
  }
  gt.B[Q - 1] = BQ;

  for (std::size_t q = Q - 1; q-- > 0;) {
    gt.S[q] = detail::random_full_rank_assignment(spec.layer_sizes[q],
                                                  spec.layer_sizes[q + 1], rng);
    gt.B[q] = matmul(gt.S[q], gt.B[q + 1]);
  }

  do {
    gt.A = DenseMatrix(spec.n_rows, R);
    for (double& x : gt.A.data()) x = std::abs(rng.normal());
  } while (!detail::has_full_column_rank(gt.A));

  std::vector<Entry> entries;
  for (index_t i = 0; i < spec.n_rows; ++i)
    for (index_t j = 0; j < spec.layer_sizes[0]; ++j) {
      if (spec.observation_rate < 1.0 && rng.uniform() >= spec.observation_rate)
        continue;
      double v = 0.0;
      for (index_t r = 0; r < R; ++r) v += gt.A(i, r) * gt.B[0](j, r);
      if (spec.noise_std > 0.0) v += spec.noise_std * rng.normal();
      entries.push_back({i, j, v});
    }
  gt.X = ObservedMatrix(spec.n_rows, spec.layer_sizes[0], std::move(entries));
  return gt;
}

// Separability check: true iff every latent dimension k has an anchor row
// within `tol` cosine distance of a positive multiple of e_k. A sufficient
// (stronger) condition for sufficiently-scattered rows.
inline bool check_separable_anchors(const DenseMatrix& B, double tol) {
  const index_t R = B.cols();
  for (index_t k = 0; k < R; ++k) {
    bool found = false;
    for (index_t i = 0; i < B.rows() && !found; ++i) {
      double nrm = 0.0;
      for (index_t r = 0; r < R; ++r) nrm += B(i, r) * B(i, r);
      nrm = std::sqrt(nrm);
      if (nrm == 0.0 || B(i, k) <= 0.0) continue;
      found = 1.0 - B(i, k) / nrm <= tol;
    }
    if (!found) return false;
  }
  return true;
}

struct RecoveryReport {
  double score_A = 0.0;
  double score_B1 = 0.0;
  double score_BQ = 0.0;
  // Per layer q = 2..Q: fraction of leaves whose layer-q ancestor matches the
  // truth after overlap-optimal relabeling of that layer's clusters.
  std::vector<double> layer_accuracy;
  // Root-level tree recovery: fraction of leaves whose composed leaf-to-root
  // assignment matches after relabeling. Intermediate truth layers carry
  // duplicated embeddings and are not identifiable, so this is the metric the
  // benchmark gates on.
  double tree_accuracy = 0.0;
};

namespace detail {

// Leaf -> layer-q ancestor, q in [1, Q-1] counting boundaries.
inline std::vector<index_t> composed_ancestors(const std::vector<DenseMatrix>& S,
                                               std::size_t upto) {
  std::vector<index_t> anc(S[0].rows());
  for (index_t i = 0; i < S[0].rows(); ++i) {
    index_t node = i;
    for (std::size_t q = 0; q < upto; ++q)
      for (index_t p = 0; p < S[q].cols(); ++p)
        if (S[q](node, p) == 1.0) {
          node = p;
          break;
        }
    anc[i] = node;
  }
  return anc;
}

// Fraction of points whose labels agree after Hungarian relabeling of the
// estimated clusters by membership overlap.
inline double relabeled_agreement(const std::vector<index_t>& est,
                                  const std::vector<index_t>& truth, index_t k) {
  DenseMatrix overlap(k, k, 0.0);
  for (std::size_t i = 0; i < est.size(); ++i) overlap(est[i], truth[i]) += 1.0;
  DenseMatrix cost(k, k, 0.0);
  for (index_t a = 0; a < k; ++a)
    for (index_t b = 0; b < k; ++b) cost(a, b) = -overlap(a, b);
  const std::vector<index_t> relabel = hungarian_min_assignment(cost);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < est.size(); ++i)
    if (relabel[est[i]] == truth[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(est.size());
}

}  // namespace detail

// Scores an estimated model against synthetic ground truth, invariant to
// column permutation/positive scaling of the factors and to cluster
// relabeling.
inline RecoveryReport recovery_score(const FactorModel& est, const GroundTruth& truth) {
  require(est.layers() == truth.B.size(), "recovery_score: layer count mismatch");
  require(est.A.rows() == truth.A.rows() && est.A.cols() == truth.A.cols(),
          "recovery_score: A shape mismatch");
  RecoveryReport rep;
  rep.score_A = match_factors(est.A, truth.A).score;
  rep.score_B1 = match_factors(est.B[0], truth.B[0]).score;
  rep.score_BQ = match_factors(est.B.back(), truth.B.back()).score;
  const std::size_t Q = est.layers();
  for (std::size_t q = 1; q < Q; ++q) {
    const auto est_anc = detail::composed_ancestors(est.S, q);
    const auto truth_anc = detail::composed_ancestors(truth.S, q);
    rep.layer_accuracy.push_back(
        detail::relabeled_agreement(est_anc, truth_anc, est.B[q].rows()));
  }
  rep.tree_accuracy = rep.layer_accuracy.back();
  return rep;
}

struct BenchSpec {
  SynthSpec spec;               // instance template; seed advances per instance
  std::size_t n_seeds = 20;
  std::size_t restarts = 5;     // fits per instance, best objective kept
  double mu = 5.0;
  double lambda = 0.01;
  double eta = 10.0;
  std::size_t max_epochs = 1000;

  void validate() const {
    spec.validate();
    require(n_seeds >= 1, "BenchSpec: need at least one seed");
    require(restarts >= 1, "BenchSpec: need at least one restart");
  }
};

struct BenchSeedResult {
  std::uint64_t seed = 0;
  double objective = 0.0;  // surrogate value of the kept restart
  RecoveryReport report;
};

struct BenchReport {
  std::vector<BenchSeedResult> per_seed;
  double mean_score_A = 0.0;
  double mean_score_BQ = 0.0;
  double mean_tree_accuracy = 0.0;
};

// Recovery benchmark: per seed, generate an instance, fit `restarts` times
// from different random initializations and keep the fit with the lowest
// surrogate objective (the solver's own training criterion; ground truth is
// never consulted for selection). Random init lands in clustering local
// optima often enough that single-run scores are noisy; restarting is the
// standard remedy and the objective separates good trees cleanly on
// identifiable instances.
inline BenchReport recovery_benchmark(const BenchSpec& bench) {
  bench.validate();
  BenchReport out;
  out.per_seed.resize(bench.n_seeds);
  for (std::size_t s = 0; s < bench.n_seeds; ++s) {
    SynthSpec spec = bench.spec;
    spec.seed = bench.spec.seed + s;
    const GroundTruth gt = gen_synthetic(spec);

    Hyperparams hp;
    hp.rank = spec.rank;
    hp.mu = bench.mu;
    hp.lambda = bench.lambda;
    hp.eta = bench.eta;
    hp.max_epochs = bench.max_epochs;
    FitControl ctl;
    ctl.rel_tol = 1e-10;

    FactorModel best;
    double best_obj = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < bench.restarts; ++t) {
      hp.seed = mix_seed(spec.seed, t, 0);
      FactorModel m = etree_fit(gt.X, hp, TreeSpec{spec.layer_sizes}, ctl);
      const double obj = surrogate_objective(m, gt.X, hp);
      if (obj < best_obj) {
        best_obj = obj;
        best = std::move(m);
      }
    }
    out.per_seed[s] = {spec.seed, best_obj, recovery_score(best, gt)};
  }
  for (const BenchSeedResult& r : out.per_seed) {
    out.mean_score_A += r.report.score_A;
    out.mean_score_BQ += r.report.score_BQ;
    out.mean_tree_accuracy += r.report.tree_accuracy;
  }
  const double n = static_cast<double>(bench.n_seeds);
  out.mean_score_A /= n;
  out.mean_score_BQ /= n;
  out.mean_tree_accuracy /= n;
  return out;
}

}  // namespace etree

#endif  // ETREE_SYNTH_HPP_
