#ifndef ETREE_TREE_HPP_
#define ETREE_TREE_HPP_

#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "etree/common.hpp"
#include "etree/matrix.hpp"
#include "etree/solver.hpp"

namespace etree {

// The extracted Q-layer tree: for each layer q < Q, the parent index of every
// node.
struct Hierarchy {
  std::size_t layers = 0;
  std::vector<index_t> layer_sizes;
  // parent_of[q][i]: parent (in layer q+2) of node i in layer q+1, q = 0..Q-2
  std::vector<std::vector<index_t>> parent_of;
  std::vector<std::vector<std::string>> labels;  // optional, per layer

  bool operator==(const Hierarchy&) const = default;
};

inline Hierarchy extract_hierarchy(const FactorModel& m) {
  m.check_invariants();
  Hierarchy h;
  h.layers = m.layers();
  for (const DenseMatrix& B : m.B) h.layer_sizes.push_back(B.rows());
  h.parent_of.resize(h.layers - 1);
  for (std::size_t q = 0; q + 1 < h.layers; ++q) {
    h.parent_of[q].resize(m.S[q].rows());
    for (index_t i = 0; i < m.S[q].rows(); ++i)
      for (index_t p = 0; p < m.S[q].cols(); ++p)
        if (m.S[q](i, p) == 1.0) h.parent_of[q][i] = p;
  }
  return h;
}

// JSON schema: {"layers": Q, "nodes": [{"layer": q, "id": i, "parent": p}]}.
// The top layer's nodes carry no parent. Ordering is by (layer, id).
inline std::string export_json(const Hierarchy& h) {
  nlohmann::json doc;
  doc["layers"] = h.layers;
  doc["nodes"] = nlohmann::json::array();
  for (std::size_t q = 0; q < h.layers; ++q) {
    for (index_t i = 0; i < h.layer_sizes[q]; ++i) {
      nlohmann::json node;
      node["layer"] = q + 1;
      node["id"] = i;
      if (q + 1 < h.layers) node["parent"] = h.parent_of[q][i];
      if (q < h.labels.size() && i < h.labels[q].size() && !h.labels[q][i].empty())
        node["label"] = h.labels[q][i];
      doc["nodes"].push_back(node);
    }
  }
  return doc.dump(2);
}

inline Hierarchy hierarchy_from_json(const std::string& text) {
  const nlohmann::json doc = nlohmann::json::parse(text);
  Hierarchy h;
  h.layers = doc.at("layers").get<std::size_t>();
  h.layer_sizes.assign(h.layers, 0);
  for (const auto& node : doc.at("nodes")) {
    const std::size_t q = node.at("layer").get<std::size_t>() - 1;
    h.layer_sizes[q] = std::max<index_t>(h.layer_sizes[q],
                                         node.at("id").get<index_t>() + 1);
  }
  h.parent_of.resize(h.layers - 1);
  for (std::size_t q = 0; q + 1 < h.layers; ++q)
    h.parent_of[q].resize(h.layer_sizes[q]);
  for (const auto& node : doc.at("nodes")) {
    const std::size_t q = node.at("layer").get<std::size_t>() - 1;
    if (q + 1 < h.layers)
      h.parent_of[q][node.at("id").get<index_t>()] = node.at("parent").get<index_t>();
  }
  return h;
}

// Graphviz digraph, one edge parent -> child per non-root node. Node names
// are layer-prefixed: l1_* items up to lQ_* roots.
inline std::string export_dot(const Hierarchy& h) {
  std::ostringstream out;
  out << "digraph etree {\n";
  for (std::size_t q = 0; q + 1 < h.layers; ++q)
    for (index_t i = 0; i < h.layer_sizes[q]; ++i)
      out << "  l" << (q + 2) << "_" << h.parent_of[q][i] << " -> l" << (q + 1)
          << "_" << i << ";\n";
  out << "}\n";
  return out.str();
}

// Exact solution of the square assignment problem (Hungarian method with
// potentials, O(n^3)); cost is minimized.
inline std::vector<index_t> hungarian_min_assignment(const DenseMatrix& cost) {
  require(cost.rows() == cost.cols(), "hungarian: square cost matrix required");
  const index_t n = cost.rows();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<index_t> p(n + 1, n), way(n + 1, n);
  for (index_t i = 0; i < n; ++i) {
    p[n] = i;
    index_t j0 = n;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const index_t i0 = p[j0];
      double delta = inf;
      index_t j1 = n;
      for (index_t j = 0; j < n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0, j) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (index_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != n);
    do {
      const index_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != n);
  }
  std::vector<index_t> row_to_col(n);
  for (index_t j = 0; j < n; ++j)
    if (p[j] != n) row_to_col[p[j]] = j;
  return row_to_col;
}

// Column matching up to the permutation/positive-scaling ambiguity of the
// factorization.
struct FactorMatch {
  std::vector<index_t> permutation;  // est column r corresponds to truth column permutation[r]
  std::vector<double> scales;        // ||est col|| / ||truth col|| per matched pair
  double score = 0.0;                // mean matched cosine similarity
};

// Matches columns of `est` to columns of `truth` by maximizing total cosine
// similarity via the Hungarian method. A zero column similarity is defined
// as 0.
inline FactorMatch match_factors(const DenseMatrix& est, const DenseMatrix& truth) {
  require(est.rows() == truth.rows() && est.cols() == truth.cols(),
          "match_factors: shape mismatch");
  require(est.cols() <= 64, "match_factors: R must be <= 64");
  const index_t R = est.cols();
  std::vector<double> en(R, 0.0), tn(R, 0.0);
  for (index_t i = 0; i < est.rows(); ++i)
    for (index_t r = 0; r < R; ++r) {
      en[r] += est(i, r) * est(i, r);
      tn[r] += truth(i, r) * truth(i, r);
    }
  for (index_t r = 0; r < R; ++r) {
    en[r] = std::sqrt(en[r]);
    tn[r] = std::sqrt(tn[r]);
  }
  DenseMatrix sim(R, R, 0.0);
  for (index_t a = 0; a < R; ++a)
    for (index_t b = 0; b < R; ++b) {
      if (en[a] == 0.0 || tn[b] == 0.0) continue;
      double dot = 0.0;
      for (index_t i = 0; i < est.rows(); ++i) dot += est(i, a) * truth(i, b);
      sim(a, b) = dot / (en[a] * tn[b]);
    }
  DenseMatrix cost(R, R, 0.0);
  for (index_t a = 0; a < R; ++a)
    for (index_t b = 0; b < R; ++b) cost(a, b) = -sim(a, b);
  FactorMatch match;
  match.permutation = hungarian_min_assignment(cost);
  match.scales.resize(R);
  double total = 0.0;
  for (index_t a = 0; a < R; ++a) {
    const index_t b = match.permutation[a];
    total += sim(a, b);
    match.scales[a] = tn[b] > 0.0 ? en[a] / tn[b] : 0.0;
  }
  match.score = total / static_cast<double>(R);
  return match;
}

}  // namespace etree

#endif  // ETREE_TREE_HPP_
