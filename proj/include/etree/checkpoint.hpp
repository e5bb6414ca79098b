#ifndef ETREE_CHECKPOINT_HPP_
#define ETREE_CHECKPOINT_HPP_

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "etree/common.hpp"
#include "etree/data.hpp"
#include "etree/matrix.hpp"
#include "etree/solver.hpp"
#include "etree/synth.hpp"

namespace etree {

// Self-describing JSON container, version tag "etree-v1". Doubles are written
// with shortest-round-trip formatting, so the container round-trips
// losslessly. Ground truth and data can ride along for regression tests.
struct Checkpoint {
  FactorModel model;
  Hyperparams hp;
  std::optional<GroundTruth> ground_truth;
  std::optional<ObservedMatrix> data;
};

namespace detail {

inline nlohmann::json matrix_to_json(const DenseMatrix& M) {
  return {{"rows", M.rows()}, {"cols", M.cols()}, {"values", M.data()}};
}

inline DenseMatrix matrix_from_json(const nlohmann::json& j) {
  DenseMatrix M(j.at("rows").get<index_t>(), j.at("cols").get<index_t>());
  M.data() = j.at("values").get<std::vector<double>>();
  if (M.data().size() != M.rows() * M.cols())
    throw DataError("checkpoint: matrix value count mismatch");
  return M;
}

inline nlohmann::json observed_to_json(const ObservedMatrix& X) {
  nlohmann::json j;
  j["n_rows"] = X.n_rows();
  j["n_cols"] = X.n_cols();
  std::vector<index_t> rows, cols;
  std::vector<double> values;
  for (const Entry& e : X.entries()) {
    rows.push_back(e.row);
    cols.push_back(e.col);
    values.push_back(e.value);
  }
  j["rows"] = rows;
  j["cols"] = cols;
  j["values"] = values;
  return j;
}

inline ObservedMatrix observed_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<std::vector<index_t>>();
  const auto cols = j.at("cols").get<std::vector<index_t>>();
  const auto values = j.at("values").get<std::vector<double>>();
  std::vector<Entry> entries(rows.size());
  for (std::size_t t = 0; t < rows.size(); ++t)
    entries[t] = {rows[t], cols[t], values[t]};
  return ObservedMatrix(j.at("n_rows").get<index_t>(), j.at("n_cols").get<index_t>(),
                        std::move(entries));
}

inline nlohmann::json model_to_json(const FactorModel& m) {
  nlohmann::json j;
  j["A"] = matrix_to_json(m.A);
  j["D"] = m.D.diag();
  j["B"] = nlohmann::json::array();
  for (const DenseMatrix& B : m.B) j["B"].push_back(matrix_to_json(B));
  j["S"] = nlohmann::json::array();
  for (const DenseMatrix& S : m.S) j["S"].push_back(matrix_to_json(S));
  j["Z"] = nlohmann::json::array();
  for (const DenseMatrix& Z : m.Z) j["Z"].push_back(matrix_to_json(Z));
  j["dual_A"] = matrix_to_json(m.dual_A);
  j["dual_B1"] = matrix_to_json(m.dual_B1);
  return j;
}

inline FactorModel model_from_json(const nlohmann::json& j) {
  FactorModel m;
  m.A = matrix_from_json(j.at("A"));
  m.D = DiagonalMatrix(j.at("D").get<std::vector<double>>());
  for (const auto& b : j.at("B")) m.B.push_back(matrix_from_json(b));
  for (const auto& s : j.at("S")) m.S.push_back(matrix_from_json(s));
  for (const auto& z : j.at("Z")) m.Z.push_back(matrix_from_json(z));
  m.dual_A = matrix_from_json(j.at("dual_A"));
  m.dual_B1 = matrix_from_json(j.at("dual_B1"));
  return m;
}

inline nlohmann::json hp_to_json(const Hyperparams& hp) {
  return {{"rank", hp.rank},       {"lambda", hp.lambda},
          {"mu", hp.mu},           {"eta", hp.eta},
          {"admm_iters", hp.admm_iters}, {"tree_iters", hp.tree_iters},
          {"epsilon", hp.epsilon}, {"max_epochs", hp.max_epochs},
          {"seed", hp.seed}};
}

inline Hyperparams hp_from_json(const nlohmann::json& j) {
  Hyperparams hp;
  hp.rank = j.at("rank").get<index_t>();
  hp.lambda = j.at("lambda").get<double>();
  hp.mu = j.at("mu").get<double>();
  hp.eta = j.at("eta").get<double>();
  hp.admm_iters = j.at("admm_iters").get<std::size_t>();
  hp.tree_iters = j.at("tree_iters").get<std::size_t>();
  hp.epsilon = j.at("epsilon").get<double>();
  hp.max_epochs = j.at("max_epochs").get<std::size_t>();
  hp.seed = j.at("seed").get<std::uint64_t>();
  return hp;
}

}  // namespace detail

inline std::string checkpoint_to_string(const Checkpoint& cp) {
  nlohmann::json j;
  j["format"] = "etree-v1";
  j["model"] = detail::model_to_json(cp.model);
  j["hyperparams"] = detail::hp_to_json(cp.hp);
  if (cp.ground_truth) {
    nlohmann::json gt;
    gt["A"] = detail::matrix_to_json(cp.ground_truth->A);
    gt["B"] = nlohmann::json::array();
    for (const DenseMatrix& B : cp.ground_truth->B)
      gt["B"].push_back(detail::matrix_to_json(B));
    gt["S"] = nlohmann::json::array();
    for (const DenseMatrix& S : cp.ground_truth->S)
      gt["S"].push_back(detail::matrix_to_json(S));
    gt["X"] = detail::observed_to_json(cp.ground_truth->X);
    j["ground_truth"] = gt;
  }
  if (cp.data) j["data"] = detail::observed_to_json(*cp.data);
  return j.dump();
}

inline Checkpoint checkpoint_from_string(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  if (j.at("format").get<std::string>() != "etree-v1")
    throw DataError("checkpoint: unsupported format tag");
  Checkpoint cp;
  cp.model = detail::model_from_json(j.at("model"));
  cp.hp = detail::hp_from_json(j.at("hyperparams"));
  if (j.contains("ground_truth")) {
    GroundTruth gt;
    gt.A = detail::matrix_from_json(j.at("ground_truth").at("A"));
    for (const auto& b : j.at("ground_truth").at("B"))
      gt.B.push_back(detail::matrix_from_json(b));
    for (const auto& s : j.at("ground_truth").at("S"))
      gt.S.push_back(detail::matrix_from_json(s));
    gt.X = detail::observed_from_json(j.at("ground_truth").at("X"));
    cp.ground_truth = std::move(gt);
  }
  if (j.contains("data")) cp.data = detail::observed_from_json(j.at("data"));
  return cp;
}

inline void save_checkpoint(const Checkpoint& cp, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for write: " + path);
  out << checkpoint_to_string(cp);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return checkpoint_from_string(text);
}

}  // namespace etree

#endif  // ETREE_CHECKPOINT_HPP_
