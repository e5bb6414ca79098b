#include <doctest.h>

#include <cmath>

#include "etree/nmf.hpp"
#include "etree/rng.hpp"
#include "oracles.hpp"

using namespace etree;

namespace {

ObservedMatrix fully_observed(const DenseMatrix& M) {
  std::vector<Entry> entries;
  for (index_t i = 0; i < M.rows(); ++i)
    for (index_t j = 0; j < M.cols(); ++j) entries.push_back({i, j, M(i, j)});
  return ObservedMatrix(M.rows(), M.cols(), std::move(entries));
}

}  // namespace

TEST_CASE("nmf_fit: recovers an exact rank-1 product") {
  Rng rng(2);
  DenseMatrix a(6, 1), b(5, 1);
  for (double& x : a.data()) x = 0.2 + rng.uniform();
  for (double& x : b.data()) x = 0.2 + rng.uniform();
  DenseMatrix X(6, 5);
  for (index_t i = 0; i < 6; ++i)
    for (index_t j = 0; j < 5; ++j) X(i, j) = a(i, 0) * b(j, 0);

  const NmfModel m = nmf_fit(fully_observed(X), 1, 0.0, 11, 500);
  double err = 0.0;
  for (index_t i = 0; i < 6; ++i)
    for (index_t j = 0; j < 5; ++j) {
      const double d = X(i, j) - m.A(i, 0) * m.B(j, 0);
      err += d * d;
    }
  CHECK(std::sqrt(err) < 1e-6);
}

TEST_CASE("nmf_fit: identity at full rank drives the objective to zero") {
  DenseMatrix I2(2, 2, 0.0);
  I2(0, 0) = I2(1, 1) = 1.0;
  const ObservedMatrix X = fully_observed(I2);
  const NmfModel m = nmf_fit(X, 2, 0.0, 3, 2000);
  CHECK(masked_objective(X, m.A, m.B, DiagonalMatrix(2, 1.0)) < 1e-6);
}

TEST_CASE("nmf_fit: objective trace is non-increasing (1e-8 relative slack)") {
  Rng rng(9);
  DenseMatrix T(12, 10);
  for (double& x : T.data()) x = std::abs(rng.normal());
  const ObservedMatrix X = fully_observed(T);
  FitTrace trace;
  FitControl ctl;
  ctl.trace = &trace;
  ctl.rel_tol = 0.0;
  nmf_fit(X, 3, 0.01, 4, 60, ctl);
  REQUIRE(trace.objective.size() > 5);
  for (std::size_t t = 1; t < trace.objective.size(); ++t)
    CHECK(trace.objective[t] <= trace.objective[t - 1] * (1.0 + 1e-8));
}

TEST_CASE("nmf_fit: deterministic given the seed, contract checks") {
  Rng rng(20);
  DenseMatrix T(5, 4);
  for (double& x : T.data()) x = rng.uniform();
  const ObservedMatrix X = fully_observed(T);
  const NmfModel m1 = nmf_fit(X, 2, 0.1, 42, 30);
  const NmfModel m2 = nmf_fit(X, 2, 0.1, 42, 30);
  CHECK(m1.A == m2.A);
  CHECK(m1.B == m2.B);

  CHECK_THROWS_AS(nmf_fit(X, 5, 0.1, 0, 10), ContractError);
  CHECK_THROWS_AS(nmf_fit(X, 2, -0.1, 0, 10), ContractError);
}

TEST_CASE("kmeans: separated pairs give the pair means") {
  DenseMatrix P(4, 2);
  P(0, 0) = 0.0;  P(0, 1) = 0.0;
  P(1, 0) = 0.0;  P(1, 1) = 1.0;
  P(2, 0) = 10.0; P(2, 1) = 0.0;
  P(3, 0) = 10.0; P(3, 1) = 1.0;
  const KmeansResult km = kmeans(P, 2, 1);
  CHECK(km.inertia == doctest::Approx(1.0));  // 4 * 0.5^2
  CHECK(km.assignment[0] == km.assignment[1]);
  CHECK(km.assignment[2] == km.assignment[3]);
  CHECK(km.assignment[0] != km.assignment[2]);
  const index_t left = km.assignment[0];
  CHECK(km.centroids(left, 0) == doctest::Approx(0.0));
  CHECK(km.centroids(left, 1) == doctest::Approx(0.5));
  CHECK(km.centroids(1 - left, 0) == doctest::Approx(10.0));
  CHECK(km.centroids(1 - left, 1) == doctest::Approx(0.5));
}

TEST_CASE("kmeans: k equal to point count gives zero inertia") {
  Rng rng(8);
  DenseMatrix P(6, 3);
  for (double& x : P.data()) x = rng.normal();
  const KmeansResult km = kmeans(P, 6, 123);
  CHECK(km.inertia == doctest::Approx(0.0));
}

TEST_CASE("kmeans: matches brute-force optimum on small instances") {
  // Invariant target: global optimum on >= 95% of seeds for n <= 10, k <= 3.
  // Clusterable instances: two centers 3 apart, points jittered by 0.5.
  Rng rng(55);
  int hits = 0;
  const int trials = 40;
  for (int t = 0; t < trials; ++t) {
    const index_t n = 8, k = 2;
    DenseMatrix C(2, 2);
    C(0, 0) = rng.uniform() * 2.0 - 1.0;
    C(0, 1) = rng.uniform() * 2.0 - 1.0;
    C(1, 0) = C(0, 0) + 3.0;
    C(1, 1) = C(0, 1);
    DenseMatrix P(n, 2);
    for (index_t i = 0; i < n; ++i) {
      const index_t c = rng.uniform_index(2);
      P(i, 0) = C(c, 0) + 0.5 * rng.normal();
      P(i, 1) = C(c, 1) + 0.5 * rng.normal();
    }
    const double best = oracles::kmeans_brute_inertia(P, k);
    const KmeansResult km = kmeans(P, k, 1000 + t);
    CHECK(km.inertia >= best - 1e-9);
    if (km.inertia <= best + 1e-9) ++hits;
  }
  CHECK(hits >= static_cast<int>(trials * 0.95));

  CHECK_THROWS_AS(kmeans(DenseMatrix(2, 2, 0.0), 3, 0), ContractError);
}

TEST_CASE("kmeans: every centroid is the mean of its assigned points") {
  Rng rng(77);
  DenseMatrix P(15, 2);
  for (double& x : P.data()) x = rng.normal();
  const KmeansResult km = kmeans(P, 3, 5);
  DenseMatrix sums(3, 2, 0.0);
  std::vector<index_t> counts(3, 0);
  for (index_t i = 0; i < 15; ++i) {
    ++counts[km.assignment[i]];
    for (index_t r = 0; r < 2; ++r) sums(km.assignment[i], r) += P(i, r);
  }
  for (index_t m = 0; m < 3; ++m) {
    REQUIRE(counts[m] > 0);
    for (index_t r = 0; r < 2; ++r)
      CHECK(km.centroids(m, r) ==
            doctest::Approx(sums(m, r) / counts[m]).epsilon(1e-12));
  }
}

TEST_CASE("nmf_km: single-layer spec reduces to nmf_fit") {
  Rng rng(12);
  DenseMatrix T(8, 6);
  for (double& x : T.data()) x = std::abs(rng.normal());
  const ObservedMatrix X = fully_observed(T);
  TreeSpec tree;
  tree.layer_sizes = {6};
  const FactorModel m = nmf_km(X, 2, 0.05, tree, 99, 40);
  const NmfModel ref = nmf_fit(X, 2, 0.05, 99, 40);
  CHECK(m.A == ref.A);
  CHECK(m.B[0] == ref.B);
  CHECK(m.S.empty());
  CHECK(m.Z.empty());
}

TEST_CASE("nmf_km: packaged model satisfies the solver invariants") {
  Rng rng(14);
  DenseMatrix T(10, 8);
  for (double& x : T.data()) x = std::abs(rng.normal());
  const ObservedMatrix X = fully_observed(T);
  TreeSpec tree;
  tree.layer_sizes = {8, 3, 2};
  const FactorModel m = nmf_km(X, 2, 0.05, tree, 7, 40);
  CHECK_NOTHROW(m.check_invariants());
  CHECK(m.B.size() == 3);
  CHECK(m.S.size() == 2);
  CHECK(m.B[1].rows() == 3);
  CHECK(m.B[2].rows() == 2);
  for (index_t j = 0; j < 8; ++j) CHECK(m.D[j] == 1.0);
}
