#ifndef ETREE_EVAL_HPP_
#define ETREE_EVAL_HPP_

#include <chrono>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "etree/common.hpp"
#include "etree/data.hpp"
#include "etree/fit.hpp"
#include "etree/metrics.hpp"
#include "etree/nmf.hpp"
#include "etree/solver.hpp"

namespace etree {

enum class Method { kEtree, kNmf, kNmfKm };

inline Method parse_method(const std::string& s) {
  if (s == "etree") return Method::kEtree;
  if (s == "nmf") return Method::kNmf;
  if (s == "nmf_km" || s == "nmf-km") return Method::kNmfKm;
  throw ContractError("unknown method: " + s);
}

inline std::string method_name(Method m) {
  switch (m) {
    case Method::kEtree: return "etree";
    case Method::kNmf: return "nmf";
    case Method::kNmfKm: return "nmf_km";
  }
  return "?";
}

struct EvalConfig {
  std::size_t folds = 5;
  std::size_t repeats = 20;
  double validation_fraction = 0.1;
  std::vector<index_t> rank_grid = {10};
  std::vector<double> lambda_grid = {0.1};
  std::vector<double> mu_grid = {0.5};                    // etree only
  std::vector<std::vector<index_t>> layer_grid = {{}};    // sizes below M1
  std::size_t patience = 10;
  std::size_t max_epochs = 1000;
  std::size_t admm_iters = 5;
  std::size_t tree_iters = 5;
  double epsilon = 1e-4;
  double eta = 1000.0;
  std::optional<ClipRange> clip;
  std::uint64_t seed = 0;

  void validate() const {
    require(folds >= 2, "EvalConfig: folds must be >= 2");
    require(repeats >= 1, "EvalConfig: repeats must be >= 1");
    require(validation_fraction > 0.0 && validation_fraction < 1.0,
            "EvalConfig: validation fraction in (0,1)");
    require(!rank_grid.empty() && !lambda_grid.empty() && !mu_grid.empty() &&
                !layer_grid.empty(),
            "EvalConfig: grids must be non-empty");
  }
};

struct GridPoint {
  index_t rank = 0;
  double lambda = 0.0;
  double mu = 0.0;
  std::vector<index_t> lower_layers;  // sizes below M1; empty = flat (Q inferred)
};

struct RunRecord {
  std::size_t fold = 0;
  std::size_t repeat = 0;
  double rmse = 0.0;
  double mae = 0.0;
};

struct EvalReport {
  Method method = Method::kNmf;
  std::vector<RunRecord> runs;
  std::vector<GridPoint> chosen;            // per fold
  std::vector<std::vector<double>> traces;  // objective trace, repeat 0 per fold
  std::vector<std::vector<double>> val_traces;
  double mean_rmse = 0.0;
  double mean_mae = 0.0;
  // Wall-clock seconds per fold; informational only, deliberately left out of
  // the serialized artifact so reports are bitwise reproducible.
  std::vector<double> fold_seconds;
};

namespace detail {

inline TreeSpec tree_for(const ObservedMatrix& X, const std::vector<index_t>& lower) {
  TreeSpec t;
  t.layer_sizes.push_back(X.n_cols());
  for (index_t s : lower) t.layer_sizes.push_back(s);
  return t;
}

// Item embeddings propagated down the learned tree: B1_tree = S1 ... S_{Q-1} B_Q.
inline DenseMatrix composed_item_embeddings(const FactorModel& m) {
  DenseMatrix B = m.B.back();
  for (std::size_t q = m.S.size(); q-- > 0;) B = matmul(m.S[q], B);
  return B;
}

struct FittedPredictor {
  std::function<double(index_t, index_t)> predict;
  std::vector<double> trace;
  std::vector<double> val_trace;
};

// Trains one model with validation-based early stopping and wraps its
// prediction rule. NMF+KM predicts through the tree-approximated item
// embeddings (each item replaced by its composed centroid).
inline FittedPredictor fit_one(const ObservedMatrix& train, const ObservedMatrix& val,
                               Method method, const GridPoint& gp,
                               const EvalConfig& cfg, std::uint64_t seed) {
  FittedPredictor out;
  FitTrace trace;
  FitControl ctl;
  ctl.validation = &val;
  ctl.patience = cfg.patience;
  ctl.trace = &trace;
  switch (method) {
    case Method::kNmf: {
      auto model = std::make_shared<NmfModel>(
          nmf_fit(train, gp.rank, gp.lambda, seed, cfg.max_epochs, ctl));
      out.predict = [model](index_t i, index_t j) {
        double dot = 0.0;
        for (index_t r = 0; r < model->rank; ++r) dot += model->A(i, r) * model->B(j, r);
        return dot;
      };
      break;
    }
    case Method::kNmfKm: {
      require(!gp.lower_layers.empty(), "nmf_km needs at least one layer below M1");
      auto model = std::make_shared<FactorModel>(
          nmf_km(train, gp.rank, gp.lambda, tree_for(train, gp.lower_layers), seed,
                 cfg.max_epochs, ctl));
      auto Btree = std::make_shared<DenseMatrix>(composed_item_embeddings(*model));
      auto A = std::make_shared<DenseMatrix>(model->A);
      out.predict = [A, Btree](index_t i, index_t j) {
        double dot = 0.0;
        for (index_t r = 0; r < A->cols(); ++r) dot += (*A)(i, r) * (*Btree)(j, r);
        return dot;
      };
      break;
    }
    case Method::kEtree: {
      require(!gp.lower_layers.empty(), "etree needs at least one layer below M1");
      Hyperparams hp;
      hp.rank = gp.rank;
      hp.lambda = gp.lambda;
      hp.mu = gp.mu;
      hp.eta = cfg.eta;
      hp.admm_iters = cfg.admm_iters;
      hp.tree_iters = cfg.tree_iters;
      hp.epsilon = cfg.epsilon;
      hp.max_epochs = cfg.max_epochs;
      hp.seed = seed;
      auto model = std::make_shared<FactorModel>(
          etree_fit(train, hp, tree_for(train, gp.lower_layers), ctl));
      out.predict = [model](index_t i, index_t j) { return predict(*model, i, j); };
      break;
    }
  }
  out.trace = std::move(trace.objective);
  out.val_trace = std::move(trace.val_rmse);
  return out;
}

}  // namespace detail

// Full protocol: per fold, pick hyperparameters by grid search on a
// validation split of the training folds, then refit `repeats` times with
// distinct seeds and score the held-out fold. Deterministic given
// (config, seed).
inline EvalReport cross_validate(const ObservedMatrix& X, Method method,
                                 const EvalConfig& cfg,
                                 std::ostream* log = nullptr) {
  cfg.validate();
  EvalReport report;
  report.method = method;
  const FoldSplit split = split_folds(X, cfg.folds, cfg.seed);

  double rmse_sum = 0.0, mae_sum = 0.0;
  for (std::size_t fold = 0; fold < cfg.folds; ++fold) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto [train_full, test] = fold_train_test(X, split, fold);
    const auto [train, val] =
        holdout_validation(train_full, cfg.validation_fraction,
                           mix_seed(cfg.seed, fold, 0xa11));

    GridPoint best;
    double best_val = std::numeric_limits<double>::infinity();
    for (index_t rank : cfg.rank_grid)
      for (double lambda : cfg.lambda_grid)
        for (const auto& layers : cfg.layer_grid) {
          const std::vector<double>& mus =
              method == Method::kEtree ? cfg.mu_grid : std::vector<double>{0.0};
          for (double mu : mus) {
            GridPoint gp{rank, lambda, mu, layers};
            try {
              const auto fitted = detail::fit_one(
                  train, val, method, gp, cfg, mix_seed(cfg.seed, fold, 0));
              const auto [vr, vm] = score_predictions(val, fitted.predict, cfg.clip);
              (void)vm;
              if (log)
                *log << "fold " << fold << " grid R=" << rank << " lambda=" << lambda
                     << " mu=" << mu << " layers=" << layers.size()
                     << " val_rmse=" << vr << "\n";
              if (vr < best_val) {
                best_val = vr;
                best = gp;
              }
            } catch (const ContractError& e) {
              throw ContractError("fold " + std::to_string(fold) + " grid point: " +
                                  e.what());
            }
          }
        }
    report.chosen.push_back(best);

    for (std::size_t rep = 0; rep < cfg.repeats; ++rep) {
      const auto fitted = detail::fit_one(train, val, method, best, cfg,
                                          mix_seed(cfg.seed, fold, rep + 1));
      const auto [tr, tm] = score_predictions(test, fitted.predict, cfg.clip);
      report.runs.push_back({fold, rep, tr, tm});
      rmse_sum += tr;
      mae_sum += tm;
      if (rep == 0) {
        report.traces.push_back(fitted.trace);
        report.val_traces.push_back(fitted.val_trace);
      }
      if (log)
        *log << "fold " << fold << " repeat " << rep << " test_rmse=" << tr
             << " test_mae=" << tm << "\n";
    }
    report.fold_seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  report.mean_rmse = rmse_sum / static_cast<double>(report.runs.size());
  report.mean_mae = mae_sum / static_cast<double>(report.runs.size());
  return report;
}

// JSON artifact; wall-clock excluded on purpose (see EvalReport).
inline std::string report_to_json(const EvalReport& r) {
  nlohmann::json j;
  j["method"] = method_name(r.method);
  j["mean_rmse"] = r.mean_rmse;
  j["mean_mae"] = r.mean_mae;
  j["runs"] = nlohmann::json::array();
  for (const RunRecord& run : r.runs)
    j["runs"].push_back({{"fold", run.fold},
                         {"repeat", run.repeat},
                         {"rmse", run.rmse},
                         {"mae", run.mae}});
  j["chosen"] = nlohmann::json::array();
  for (const GridPoint& gp : r.chosen)
    j["chosen"].push_back({{"rank", gp.rank},
                           {"lambda", gp.lambda},
                           {"mu", gp.mu},
                           {"lower_layers", gp.lower_layers}});
  return j.dump(2);
}

// Objective traces as CSV: epoch,objective,val_rmse (one block per fold,
// blocks separated by the fold column).
inline std::string traces_to_csv(const EvalReport& r) {
  std::ostringstream out;
  out.precision(17);
  out << "fold,epoch,objective,val_rmse\n";
  for (std::size_t f = 0; f < r.traces.size(); ++f)
    for (std::size_t e = 0; e < r.traces[f].size(); ++e) {
      out << f << "," << e << "," << r.traces[f][e] << ",";
      if (e < r.val_traces[f].size()) out << r.val_traces[f][e];
      out << "\n";
    }
  return out.str();
}

}  // namespace etree

#endif  // ETREE_EVAL_HPP_
