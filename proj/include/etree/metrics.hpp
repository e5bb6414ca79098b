#ifndef ETREE_METRICS_HPP_
#define ETREE_METRICS_HPP_

#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "etree/common.hpp"
#include "etree/data.hpp"

namespace etree {

inline double rmse(const std::vector<double>& pred, const std::vector<double>& truth) {
  require(!pred.empty() && pred.size() == truth.size(), "rmse: bad input lengths");
  double s = 0.0;
  for (std::size_t t = 0; t < pred.size(); ++t) {
    const double d = pred[t] - truth[t];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(pred.size()));
}

inline double mae(const std::vector<double>& pred, const std::vector<double>& truth) {
  require(!pred.empty() && pred.size() == truth.size(), "mae: bad input lengths");
  double s = 0.0;
  for (std::size_t t = 0; t < pred.size(); ++t) s += std::abs(pred[t] - truth[t]);
  return s / static_cast<double>(pred.size());
}

// Optional clipping of predictions to the data's value range.
struct ClipRange {
  double lo;
  double hi;
  double apply(double v) const { return v < lo ? lo : (v > hi ? hi : v); }
};

// Scores a predictor (any callable (i, j) -> double) on the observed entries
// of X. Returns (rmse, mae).
template <typename Predictor>
std::pair<double, double> score_predictions(const ObservedMatrix& X, Predictor&& f,
                                            std::optional<ClipRange> clip = {}) {
  std::vector<double> pred, truth;
  pred.reserve(X.entries().size());
  truth.reserve(X.entries().size());
  for (const Entry& e : X.entries()) {
    double v = f(e.row, e.col);
    if (clip) v = clip->apply(v);
    pred.push_back(v);
    truth.push_back(e.value);
  }
  return {rmse(pred, truth), mae(pred, truth)};
}

}  // namespace etree

#endif  // ETREE_METRICS_HPP_
