// Command-line front end: fit / predict / eval / export-tree / synth-check.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric divergence.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "etree/checkpoint.hpp"
#include "etree/data.hpp"
#include "etree/eval.hpp"
#include "etree/fit.hpp"
#include "etree/metrics.hpp"
#include "etree/nmf.hpp"
#include "etree/parallel.hpp"
#include "etree/synth.hpp"
#include "etree/tree.hpp"

namespace {

// JSON config support for CLI11: top-level keys are subcommand names, values
// are flat objects keyed by long flag names. Command-line flags override
// config values.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool, std::string) const override {
    return "{}";
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    nlohmann::json doc;
    input >> doc;
    std::vector<CLI::ConfigItem> items;
    collect(doc, {}, items);
    return items;
  }

 private:
  static void collect(const nlohmann::json& node, std::vector<std::string> parents,
                      std::vector<CLI::ConfigItem>& items) {
    for (auto it = node.begin(); it != node.end(); ++it) {
      if (it.value().is_object()) {
        auto deeper = parents;
        deeper.push_back(it.key());
        collect(it.value(), deeper, items);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = it.key();
      if (it.value().is_array()) {
        for (const auto& v : it.value()) item.inputs.push_back(scalar(v));
      } else {
        item.inputs.push_back(scalar(it.value()));
      }
      items.push_back(std::move(item));
    }
  }

  static std::string scalar(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return v.dump();
  }
};

std::vector<etree::index_t> parse_layer_list(const std::string& s) {
  std::vector<etree::index_t> sizes;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    sizes.push_back(static_cast<etree::index_t>(std::stoull(tok)));
  return sizes;
}

etree::ObservedMatrix load_dataset(const std::string& path, const std::string& format,
                                   std::size_t min_item_ratings, bool log_tf) {
  etree::ObservedMatrix X = etree::load_coordinate(path, etree::parse_format(format));
  if (format == "movielens" && min_item_ratings > 0)
    X = etree::filter_columns(X, min_item_ratings);
  if (log_tf) X = etree::log_transform(X);
  return X;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw etree::DataError("cannot open for write: " + path);
  out << text;
}

struct CommonDataFlags {
  std::string data_path;
  std::string format = "csv-triplet";
  std::size_t min_item_ratings = 20;
  bool log_tf = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--data", data_path, "input dataset path")->required();
    cmd->add_option("--format", format,
                    "dataset format: matrix-market | csv-triplet | movielens")
        ->check(CLI::IsMember({"matrix-market", "csv-triplet", "movielens"}));
    cmd->add_option("--min-item-ratings", min_item_ratings,
                    "movielens: drop items with fewer ratings (0 = keep all)")
        ->capture_default_str();
    cmd->add_flag("--log-transform", log_tf, "apply v -> ln(v+1) to observed values");
  }
};

std::optional<etree::ClipRange> parse_clip(const std::string& s) {
  if (s.empty()) return std::nullopt;
  const auto comma = s.find(',');
  if (comma == std::string::npos)
    throw etree::ContractError("--clip expects 'min,max'");
  return etree::ClipRange{std::stod(s.substr(0, comma)), std::stod(s.substr(comma + 1))};
}

int run(int argc, char** argv) {
  CLI::App app{"tree-structured nonnegative embeddings for matrix completion"};
  app.require_subcommand(1);
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON config file (flags override)");
  int workers = 1;
  app.add_option("--workers", workers, "worker thread count")->capture_default_str();

  // ---- fit ----
  auto* fit = app.add_subcommand("fit", "train a model and write a checkpoint");
  CommonDataFlags fit_data;
  fit_data.attach(fit);
  etree::Hyperparams hp;
  std::string layers_str, out_path = "model.etree", trace_path;
  double val_fraction = 0.0;
  std::size_t patience = 10;
  fit->add_option("--rank", hp.rank, "factorization rank R")->required();
  fit->add_option("--layers", layers_str,
                  "comma-separated layer sizes M1,M2,...,MQ (M1 = item count)")
      ->required();
  fit->add_option("--mu", hp.mu, "tree regularization weight")->capture_default_str();
  fit->add_option("--lambda", hp.lambda, "norm regularization weight on A")
      ->capture_default_str();
  fit->add_option("--eta", hp.eta, "slack coupling weight")->capture_default_str();
  fit->add_option("--admm-iters", hp.admm_iters, "ADMM iteration cap K")
      ->capture_default_str();
  fit->add_option("--tree-iters", hp.tree_iters, "tree loop cap T")
      ->capture_default_str();
  fit->add_option("--eps", hp.epsilon, "ADMM residual threshold")
      ->capture_default_str();
  fit->add_option("--max-epochs", hp.max_epochs, "outer epoch cap")
      ->capture_default_str();
  fit->add_option("--seed", hp.seed, "RNG seed")->capture_default_str();
  fit->add_option("--val-fraction", val_fraction,
                  "fraction held out for early stopping (0 = none)")
      ->capture_default_str();
  fit->add_option("--patience", patience, "early stopping patience (epochs)")
      ->capture_default_str();
  fit->add_option("--out", out_path, "checkpoint output path")->capture_default_str();
  fit->add_option("--trace", trace_path, "objective trace CSV output path");

  // ---- predict ----
  auto* pred = app.add_subcommand("predict", "score (i,j) pairs with a checkpoint");
  std::string model_path, pairs_path, pred_out, clip_str;
  pred->add_option("--model", model_path, "checkpoint path")->required();
  pred->add_option("--pairs", pairs_path,
                   "CSV of pairs (header 'i,j' or 'i,j,value')")
      ->required();
  pred->add_option("--out", pred_out, "predictions CSV output (default stdout)");
  pred->add_option("--clip", clip_str, "clip predictions to 'min,max'");

  // ---- eval ----
  auto* ev = app.add_subcommand("eval", "cross-validated matrix completion errors");
  CommonDataFlags ev_data;
  ev_data.attach(ev);
  etree::EvalConfig cfg;
  std::string method_str = "etree", layer_grid_str, report_path, ev_trace_path,
              ev_clip_str;
  std::size_t budget = 0;
  ev->add_option("--method", method_str, "etree | nmf | nmf_km")
      ->check(CLI::IsMember({"etree", "nmf", "nmf_km"}));
  ev->add_option("--folds", cfg.folds)->capture_default_str();
  ev->add_option("--repeats", cfg.repeats)->capture_default_str();
  ev->add_option("--val-fraction", cfg.validation_fraction)->capture_default_str();
  ev->add_option("--rank-grid", cfg.rank_grid, "ranks to search")
      ->delimiter(',')
      ->capture_default_str();
  ev->add_option("--lambda-grid", cfg.lambda_grid, "lambdas to search")
      ->delimiter(',')
      ->capture_default_str();
  ev->add_option("--mu-grid", cfg.mu_grid, "mus to search (etree)")
      ->delimiter(',')
      ->capture_default_str();
  ev->add_option("--layer-grid", layer_grid_str,
                 "semicolon-separated layer configs below M1, e.g. '40,10;30'");
  ev->add_option("--patience", cfg.patience)->capture_default_str();
  ev->add_option("--max-epochs", cfg.max_epochs)->capture_default_str();
  ev->add_option("--admm-iters", cfg.admm_iters)->capture_default_str();
  ev->add_option("--tree-iters", cfg.tree_iters)->capture_default_str();
  ev->add_option("--eps", cfg.epsilon)->capture_default_str();
  ev->add_option("--eta", cfg.eta)->capture_default_str();
  ev->add_option("--seed", cfg.seed)->capture_default_str();
  ev->add_option("--budget", budget,
                 "cap on grid points searched per fold (0 = full grid)")
      ->capture_default_str();
  ev->add_option("--clip", ev_clip_str, "clip predictions to 'min,max'");
  ev->add_option("--out", report_path, "JSON report output path");
  ev->add_option("--traces", ev_trace_path, "objective trace CSV output path");

  // ---- export-tree ----
  auto* ex = app.add_subcommand("export-tree", "export the learned hierarchy");
  std::string ex_model, ex_format = "json", ex_out;
  ex->add_option("--model", ex_model, "checkpoint path")->required();
  ex->add_option("--format", ex_format, "json | dot")
      ->check(CLI::IsMember({"json", "dot"}));
  ex->add_option("--out", ex_out, "output path (default stdout)");

  // ---- synth-check ----
  auto* sy = app.add_subcommand("synth-check", "synthetic recovery benchmark");
  etree::BenchSpec bench;
  std::string sy_layers = "60,12,4", sy_out, sy_preset = "default";
  sy->add_option("--spec", sy_preset,
                 "instance preset (default: N=200, layers 60,12,4, R=4, noiseless)")
      ->check(CLI::IsMember({"default"}))
      ->capture_default_str();
  sy->add_option("--n", bench.spec.n_rows, "individual count N")->capture_default_str();
  sy->add_option("--layers", sy_layers, "ground-truth layer sizes M1,...,MQ")
      ->capture_default_str();
  sy->add_option("--rank", bench.spec.rank, "rank R")->capture_default_str();
  sy->add_option("--noise", bench.spec.noise_std, "noise std")->capture_default_str();
  sy->add_option("--rate", bench.spec.observation_rate, "observation rate")
      ->capture_default_str();
  sy->add_option("--seeds", bench.n_seeds, "number of seeds")->capture_default_str();
  sy->add_option("--restarts", bench.restarts,
                 "fits per seed; best objective kept")
      ->capture_default_str();
  sy->add_option("--mu", bench.mu, "tree weight used for the fits")
      ->capture_default_str();
  sy->add_option("--lambda", bench.lambda, "norm weight used for the fits")
      ->capture_default_str();
  sy->add_option("--eta", bench.eta, "slack weight used for the fits")
      ->capture_default_str();
  sy->add_option("--max-epochs", bench.max_epochs)->capture_default_str();
  sy->add_option("--out", sy_out, "JSON report output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  etree::worker_count() = workers;

  if (*fit) {
    etree::ObservedMatrix X = load_dataset(fit_data.data_path, fit_data.format,
                                           fit_data.min_item_ratings, fit_data.log_tf);
    etree::TreeSpec tree{parse_layer_list(layers_str)};
    etree::FitTrace trace;
    etree::FitControl ctl;
    ctl.trace = &trace;
    ctl.patience = patience;
    etree::ObservedMatrix train = X, val;
    if (val_fraction > 0.0) {
      std::tie(train, val) = etree::holdout_validation(X, val_fraction, hp.seed);
      ctl.validation = &val;
    }
    const etree::FactorModel model = etree::etree_fit(train, hp, tree, ctl);
    etree::save_checkpoint({model, hp, std::nullopt, std::nullopt}, out_path);
    if (!trace_path.empty()) {
      std::ostringstream csv;
      csv.precision(17);
      csv << "epoch,objective,val_rmse\n";
      for (std::size_t e = 0; e < trace.objective.size(); ++e) {
        csv << e << "," << trace.objective[e] << ",";
        if (e < trace.val_rmse.size()) csv << trace.val_rmse[e];
        csv << "\n";
      }
      write_text(trace_path, csv.str());
    }
    std::cout << "wrote checkpoint: " << out_path << " (epochs="
              << trace.objective.size() << ")\n";
  } else if (*pred) {
    const etree::Checkpoint cp = etree::load_checkpoint(model_path);
    const auto clip = parse_clip(clip_str);
    std::ifstream in(pairs_path);
    if (!in) throw etree::DataError("cannot open file: " + pairs_path);
    std::ostringstream out;
    out.precision(17);
    out << "i,j,prediction\n";
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::istringstream ss(line);
      long long i, j;
      char c;
      if (!(ss >> i >> c >> j) || c != ',')
        throw etree::DataError("bad pair line: " + line);
      double v = etree::predict(cp.model, static_cast<etree::index_t>(i),
                                static_cast<etree::index_t>(j));
      if (clip) v = clip->apply(v);
      out << i << "," << j << "," << v << "\n";
    }
    if (pred_out.empty())
      std::cout << out.str();
    else
      write_text(pred_out, out.str());
  } else if (*ev) {
    etree::ObservedMatrix X = load_dataset(ev_data.data_path, ev_data.format,
                                           ev_data.min_item_ratings, ev_data.log_tf);
    if (!layer_grid_str.empty()) {
      cfg.layer_grid.clear();
      std::stringstream ss(layer_grid_str);
      std::string cfg_tok;
      while (std::getline(ss, cfg_tok, ';'))
        cfg.layer_grid.push_back(parse_layer_list(cfg_tok));
    }
    cfg.clip = parse_clip(ev_clip_str);
    if (budget > 0) {
      // Keep the first `budget` combinations in grid iteration order.
      std::size_t kept = 0;
      std::vector<etree::index_t> ranks;
      std::vector<double> lambdas, mus;
      std::vector<std::vector<etree::index_t>> layers;
      for (etree::index_t r : cfg.rank_grid)
        for (double l : cfg.lambda_grid)
          for (const auto& lay : cfg.layer_grid)
            for (double m : cfg.mu_grid) {
              if (kept++ >= budget) continue;
              if (std::find(ranks.begin(), ranks.end(), r) == ranks.end())
                ranks.push_back(r);
              if (std::find(lambdas.begin(), lambdas.end(), l) == lambdas.end())
                lambdas.push_back(l);
              if (std::find(layers.begin(), layers.end(), lay) == layers.end())
                layers.push_back(lay);
              if (std::find(mus.begin(), mus.end(), m) == mus.end())
                mus.push_back(m);
            }
      cfg.rank_grid = ranks;
      cfg.lambda_grid = lambdas;
      cfg.mu_grid = mus;
      cfg.layer_grid = layers;
    }
    const etree::EvalReport report =
        etree::cross_validate(X, etree::parse_method(method_str), cfg, &std::cerr);
    const std::string json = etree::report_to_json(report);
    if (report_path.empty())
      std::cout << json << "\n";
    else
      write_text(report_path, json);
    if (!ev_trace_path.empty()) write_text(ev_trace_path, etree::traces_to_csv(report));
    std::cerr << "mean_rmse=" << report.mean_rmse << " mean_mae=" << report.mean_mae
              << "\n";
  } else if (*ex) {
    const etree::Checkpoint cp = etree::load_checkpoint(ex_model);
    const etree::Hierarchy h = etree::extract_hierarchy(cp.model);
    const std::string text =
        ex_format == "dot" ? etree::export_dot(h) : etree::export_json(h);
    if (ex_out.empty())
      std::cout << text;
    else
      write_text(ex_out, text);
  } else if (*sy) {
    bench.spec.layer_sizes = parse_layer_list(sy_layers);
    const etree::BenchReport rep = etree::recovery_benchmark(bench);
    nlohmann::json per_seed = nlohmann::json::array();
    for (const etree::BenchSeedResult& r : rep.per_seed)
      per_seed.push_back({{"seed", r.seed},
                          {"objective", r.objective},
                          {"score_A", r.report.score_A},
                          {"score_B1", r.report.score_B1},
                          {"score_BQ", r.report.score_BQ},
                          {"layer_accuracy", r.report.layer_accuracy},
                          {"tree_accuracy", r.report.tree_accuracy}});
    nlohmann::json doc;
    doc["seeds"] = bench.n_seeds;
    doc["restarts"] = bench.restarts;
    doc["mean_score_A"] = rep.mean_score_A;
    doc["mean_score_BQ"] = rep.mean_score_BQ;
    doc["mean_tree_accuracy"] = rep.mean_tree_accuracy;
    doc["per_seed"] = per_seed;
    const std::string text = doc.dump(2);
    if (sy_out.empty())
      std::cout << text << "\n";
    else
      write_text(sy_out, text);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const etree::ContractError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const etree::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const etree::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
